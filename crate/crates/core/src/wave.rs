//! Traveling-wave description of the leader-step transient.
//!
//! When the leader starts moving, a wave travels to the last vehicle with
//! velocity `c_+`, reflects, and returns with `c_-`. The last spacing error
//! `e_N = z_0 - z_N` is then close to a triangle wave whose half-period and
//! amplitudes follow from the two signal velocities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, PlatoonSystem, SimOptions, SimulationTrace, StateVector};
use crate::error::{PlatoonError, Result};
use crate::params::{PlatoonParams, Topology};
use crate::spectral::{check_circular_stability, signal_velocities};

/// Fraction of `max |e_N|` the last error must exceed before a zero crossing counts.
pub const DEPARTURE_THRESHOLD: f64 = 1e-6;
/// Floor applied inside the logarithm of [`relative_error`].
pub const LOG_FLOOR: f64 = 1e-300;
/// Default simulation horizon in predicted half-periods.
pub const DEFAULT_HORIZON_PERIODS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransientPrediction {
    /// First amplitude `A_1 = N / |c_+|`, m.
    pub a1: f64,
    /// `|A_{k+1} / A_k| = |c_-| / |c_+|`.
    pub decay_ratio: f64,
    /// `T = N (1/|c_+| + 1/|c_-|)`, s.
    pub half_period: f64,
}

pub fn predict_transient(params: &PlatoonParams) -> Result<TransientPrediction> {
    let report = check_circular_stability(params);
    if !report.stable {
        return Err(PlatoonError::Unstable(format!("{report:?}")));
    }
    let w = signal_velocities(params)?;
    let n = params.n_followers as f64;
    Ok(TransientPrediction {
        a1: n / w.c_plus.abs(),
        decay_ratio: w.c_minus.abs() / w.c_plus.abs(),
        half_period: n * (1.0 / w.c_plus.abs() + 1.0 / w.c_minus.abs()),
    })
}

/// Predicted half-period from the signal velocities alone, without the
/// stability check. Used to size simulation horizons for any parameter set.
pub fn nominal_half_period(params: &PlatoonParams) -> Result<f64> {
    let w = signal_velocities(params)?;
    Ok(params.n_followers as f64 * (1.0 / w.c_plus.abs() + 1.0 / w.c_minus.abs()))
}

/// `periods` nominal half-periods.
pub fn transient_horizon(params: &PlatoonParams, periods: f64) -> Result<f64> {
    Ok(periods * nominal_half_period(params)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientMeasurement {
    pub half_period: f64,
    /// `A_i = max |e_N|` over `[(i-1)T, iT]`.
    pub amplitudes: Vec<f64>,
    pub n_oscillations: usize,
}

impl TransientMeasurement {
    /// `A_{k+1} / A_k` for `k = 1..`.
    pub fn ratios(&self) -> Vec<f64> {
        self.amplitudes.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

pub fn measure_transient(trace: &SimulationTrace) -> Result<TransientMeasurement> {
    if trace.diverged {
        return Err(PlatoonError::Diverged(
            trace.times.last().copied().unwrap_or(0.0),
        ));
    }
    measure_series(&trace.times, trace.last_vehicle())
}

/// Half-period and per-window amplitudes of one sampled error signal.
pub fn measure_series(times: &[f64], series: &[f64]) -> Result<TransientMeasurement> {
    if times.len() != series.len() {
        return Err(PlatoonError::DimensionMismatch {
            expected: times.len(),
            got: series.len(),
        });
    }
    let peak = series.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    if !(peak > 0.0) {
        return Err(PlatoonError::NoCrossing);
    }
    let start = series
        .iter()
        .position(|e| e.abs() > DEPARTURE_THRESHOLD * peak)
        .ok_or(PlatoonError::NoCrossing)?;

    let mut half_period = None;
    for k in start..series.len() - 1 {
        let (e0, e1) = (series[k], series[k + 1]);
        if e0 != 0.0 && (e1 == 0.0 || e0.signum() != e1.signum()) {
            let frac = e0 / (e0 - e1);
            half_period = Some(times[k] + frac * (times[k + 1] - times[k]));
            break;
        }
    }
    let half_period = half_period.ok_or(PlatoonError::NoCrossing)?;

    let span = times[times.len() - 1] - times[0];
    let windows = ((span / half_period) * (1.0 + 1e-12)).floor() as usize;
    if windows < 2 {
        return Err(PlatoonError::TraceTooShort { windows });
    }
    let t0 = times[0];
    let amplitudes = (0..windows)
        .map(|i| {
            let lo = times.partition_point(|&t| t < t0 + i as f64 * half_period);
            let hi = times.partition_point(|&t| t <= t0 + (i + 1) as f64 * half_period);
            series[lo..hi].iter().fold(0.0f64, |m, e| m.max(e.abs()))
        })
        .collect();
    Ok(TransientMeasurement {
        half_period,
        amplitudes,
        n_oscillations: windows,
    })
}

/// `log10 |pred / meas - 1|`, floored at `log10(1e-300)`.
pub fn relative_error(predicted: f64, measured: f64) -> Result<f64> {
    if measured == 0.0 {
        return Err(PlatoonError::ZeroMeasurement);
    }
    Ok((predicted / measured - 1.0).abs().max(LOG_FLOOR).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    /// `Θ = Σ Θ_i`, m·s.
    pub theta: f64,
    /// `Θ_i = ∫ |e_i| dt`, including the extrapolated tail.
    pub per_vehicle: Vec<f64>,
    /// Part of `theta` contributed by the tail beyond the trace.
    pub tail: f64,
}

/// Cumulative trapezoid of `|e|`.
fn cumulative_abs(times: &[f64], series: &[f64]) -> Vec<f64> {
    let mut acc = Vec::with_capacity(series.len());
    let mut s = 0.0;
    acc.push(0.0);
    for k in 1..series.len() {
        s += 0.5 * (times[k] - times[k - 1]) * (series[k - 1].abs() + series[k].abs());
        acc.push(s);
    }
    acc
}

/// Linear interpolation of a cumulative integral at time `t`.
fn cumulative_at(times: &[f64], cum: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return 0.0;
    }
    let last = times.len() - 1;
    if t >= times[last] {
        return cum[last];
    }
    let k = times.partition_point(|&x| x <= t) - 1;
    let frac = (t - times[k]) / (times[k + 1] - times[k]);
    cum[k] + frac * (cum[k + 1] - cum[k])
}

/// `∫ |e_i| dt` over the trace by the trapezoid rule, without a tail.
pub fn integrated_abs_error(trace: &SimulationTrace) -> ErrorSummary {
    let per_vehicle: Vec<f64> = trace
        .errors
        .iter()
        .map(|e| *cumulative_abs(&trace.times, e).last().unwrap())
        .collect();
    ErrorSummary {
        theta: per_vehicle.iter().sum(),
        per_vehicle,
        tail: 0.0,
    }
}

/// Total absolute spacing error `Σ_i ∫_0^∞ |e_i| dt`.
///
/// The trace is integrated by the trapezoid rule. Beyond the trace, each
/// vehicle's area per half-period is assumed to shrink geometrically by the
/// last measured amplitude ratio `r`: the tail is `S·r/(1-r)` minus whatever
/// the trace already covers after the last full window, where `S` is the area
/// in that window.
pub fn total_absolute_error(trace: &SimulationTrace) -> Result<ErrorSummary> {
    if trace.diverged {
        return Err(PlatoonError::Diverged(
            trace.times.last().copied().unwrap_or(0.0),
        ));
    }
    if trace.errors.iter().flatten().all(|&e| e == 0.0) {
        return Ok(ErrorSummary {
            theta: 0.0,
            per_vehicle: vec![0.0; trace.n_vehicles()],
            tail: 0.0,
        });
    }
    let m = measure_transient(trace)?;
    let k = m.n_oscillations;
    let ratio = if m.amplitudes[k - 2] > 0.0 {
        m.amplitudes[k - 1] / m.amplitudes[k - 2]
    } else {
        0.0
    };
    if ratio >= 1.0 {
        return Err(PlatoonError::NonConvergentTail(ratio));
    }
    let t0 = trace.times[0];
    let w_start = t0 + (k - 1) as f64 * m.half_period;
    let w_end = t0 + k as f64 * m.half_period;

    let mut tail_total = 0.0;
    let per_vehicle: Vec<f64> = trace
        .errors
        .iter()
        .map(|e| {
            let cum = cumulative_abs(&trace.times, e);
            let total = *cum.last().unwrap();
            let last_window = cumulative_at(&trace.times, &cum, w_end)
                - cumulative_at(&trace.times, &cum, w_start);
            let covered = total - cumulative_at(&trace.times, &cum, w_end);
            let tail = (last_window * ratio / (1.0 - ratio) - covered).max(0.0);
            tail_total += tail;
            total + tail
        })
        .collect();
    Ok(ErrorSummary {
        theta: per_vehicle.iter().sum(),
        per_vehicle,
        tail: tail_total,
    })
}

/// `Ĵ = 2a sqrt(1/g_x² + 2a/(g_v² β_v² g_x))`.
pub fn j_hat(gain_x: f64, gain_v: f64, beta_v: f64, friction: f64) -> f64 {
    2.0 * friction
        * (1.0 / (gain_x * gain_x) + 2.0 * friction / (gain_v * gain_v * beta_v * beta_v * gain_x))
            .sqrt()
}

/// `Σ_{i=1}^{N} (i/N)(1 - i/(2N)) = (N+1)(4N-1)/(12N)`.
pub fn trapezoid_profile_sum(n: usize) -> f64 {
    let n = n as f64;
    (n + 1.0) * (4.0 * n - 1.0) / (12.0 * n)
}

/// `Θ(N) ≈ Ĵ/12 · N (N+1) (4N-1)`.
pub fn predict_total_error(params: &PlatoonParams) -> Result<f64> {
    let beta_v = params.beta_v();
    if beta_v == 0.0 {
        return Err(PlatoonError::SingularCriterion);
    }
    if beta_v < 0.0 {
        // reflections grow: |c_-| > |c_+|
        let w = signal_velocities(params)?;
        return Err(PlatoonError::NonConvergentTail(
            w.c_minus.abs() / w.c_plus.abs(),
        ));
    }
    let report = check_circular_stability(params);
    if !report.stable {
        return Err(PlatoonError::Unstable(format!("{report:?}")));
    }
    let j = j_hat(params.gain_x, params.gain_v, beta_v, params.friction);
    let n = params.n_followers as f64;
    Ok(j / 12.0 * n * (n + 1.0) * (4.0 * n - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlockVerdict {
    FlockStable,
    FlockUnstable,
    AsymptoticallyUnstable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlockClassification {
    pub params: PlatoonParams,
    pub n_grid: Vec<usize>,
    /// `max_t |e_N(t)|` per grid point.
    pub max_errors: Vec<f64>,
    pub diverged: Vec<bool>,
    /// Slope of `ln max|e_N|` against `N`.
    pub slope_linear: f64,
    /// Slope of `ln max|e_N|` against `ln N`.
    pub slope_log: f64,
    pub sse_linear: f64,
    pub sse_log: f64,
    pub verdict: FlockVerdict,
}

/// Minimum per-vehicle growth rate of `ln max|e_N|` for exponential growth.
pub fn flock_slope_threshold() -> f64 {
    1.05f64.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub dt: f64,
    /// Horizon in nominal half-periods.
    pub horizon_periods: f64,
    /// Upper bound on recorded samples per trace.
    pub max_samples: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            dt: crate::dynamics::DEFAULT_DT,
            horizon_periods: DEFAULT_HORIZON_PERIODS,
            max_samples: 20_000,
        }
    }
}

impl ExperimentOptions {
    pub fn sim_options(&self, params: &PlatoonParams) -> Result<SimOptions> {
        let t_end = transient_horizon(params, self.horizon_periods)?;
        Ok(SimOptions::new(self.dt, t_end).with_max_samples(self.max_samples))
    }
}

/// Leader-step simulation on the path topology with the horizon sized from
/// the nominal half-period.
pub fn leader_step_trace(
    params: &PlatoonParams,
    opts: &ExperimentOptions,
) -> Result<SimulationTrace> {
    let system = PlatoonSystem::new(*params, Topology::Path)?;
    let sim = opts.sim_options(params)?;
    simulate(&system, &StateVector::leader_step(params.n_followers), &sim)
}

/// Least-squares line fit, returning `(slope, sse)`.
fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let sse = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum();
    (slope, sse)
}

/// Empirical flock-stability test from leader-step simulations of the path
/// system over `n_grid`.
///
/// Exponential growth is declared when `ln max|e_N|` is fitted better by a
/// line in `N` than by a line in `ln N` and grows faster than 5% per vehicle.
pub fn classify_flock_stability(
    params: &PlatoonParams,
    n_grid: &[usize],
    opts: &ExperimentOptions,
) -> Result<FlockClassification> {
    if n_grid.len() < 4 {
        return Err(PlatoonError::InvalidGrid(format!(
            "need at least 4 platoon sizes, got {}",
            n_grid.len()
        )));
    }
    let lo = *n_grid.iter().min().unwrap();
    let hi = *n_grid.iter().max().unwrap();
    if lo == 0 || hi < 4 * lo {
        return Err(PlatoonError::InvalidGrid(format!(
            "sizes must span a factor of 4, got {lo}..{hi}"
        )));
    }
    let runs: Vec<(f64, bool)> = n_grid
        .par_iter()
        .map(|&n| {
            let p = params.with_n(n);
            let trace = leader_step_trace(&p, opts)?;
            Ok((trace.max_abs_error(n), trace.diverged))
        })
        .collect::<Result<_>>()?;
    let max_errors: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let diverged: Vec<bool> = runs.iter().map(|r| r.1).collect();

    let y: Vec<f64> = max_errors
        .iter()
        .map(|m| m.max(f64::MIN_POSITIVE).ln())
        .collect();
    let xn: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
    let xl: Vec<f64> = xn.iter().map(|n| n.ln()).collect();
    let (slope_linear, sse_linear) = fit_line(&xn, &y);
    let (slope_log, sse_log) = fit_line(&xl, &y);

    let verdict = if diverged.iter().any(|&d| d) {
        FlockVerdict::AsymptoticallyUnstable
    } else if sse_linear < sse_log && slope_linear > flock_slope_threshold() {
        FlockVerdict::FlockUnstable
    } else {
        FlockVerdict::FlockStable
    };
    Ok(FlockClassification {
        params: *params,
        n_grid: n_grid.to_vec(),
        max_errors,
        diverged,
        slope_linear,
        slope_log,
        sse_linear,
        sse_log,
        verdict,
    })
}
