//! Experiments built on `platoon_core`: prediction checks, strategy
//! comparisons, scaling tables and parameter sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::time::Instant;

use platoon_core::io::{Quantity, VerificationRow};
use platoon_core::spectral::{beta_v_bound, check_circular_stability};
use platoon_core::wave::{
    integrated_abs_error, leader_step_trace, measure_transient, predict_total_error,
    predict_transient, relative_error, total_absolute_error, transient_horizon, ExperimentOptions,
};
use platoon_core::{
    simulate, PlatoonError, PlatoonParams, PlatoonSystem, Result, SimOptions, SimulationTrace,
    StateVector, Topology,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default platoon length for the friction and asymmetry sweeps.
pub const SWEEP_N: usize = 300;

/// Provenance written next to every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub args: Vec<String>,
    pub params: serde_json::Value,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn new(command: &str, params: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            args: std::env::args().collect(),
            params,
            seeds: Vec::new(),
            outputs: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn finish(mut self, started: Instant) -> Self {
        self.wall_time_s = started.elapsed().as_secs_f64();
        self
    }
}

/// Leader-step predictions against measurements for each platoon length.
pub fn run_verify(
    params: &PlatoonParams,
    n_list: &[usize],
    opts: &ExperimentOptions,
) -> Result<Vec<VerificationRow>> {
    if n_list.is_empty() {
        return Err(PlatoonError::InvalidGrid(
            "empty platoon-length list".to_string(),
        ));
    }
    let per_n: Vec<Vec<VerificationRow>> = n_list
        .par_iter()
        .map(|&n| {
            let p = params.with_n(n);
            let pred = predict_transient(&p)?;
            let trace = leader_step_trace(&p, opts)?;
            if trace.diverged {
                return Err(PlatoonError::Diverged(*trace.times.last().unwrap_or(&0.0)));
            }
            let m = measure_transient(&trace)?;
            let ratios = m.ratios();
            let mut rows = Vec::new();
            let mut push = |chi, pred: f64, meas: f64| -> Result<()> {
                rows.push(VerificationRow {
                    n,
                    chi,
                    pred,
                    meas,
                    theta: relative_error(pred, meas)?,
                });
                Ok(())
            };
            push(Quantity::A1, pred.a1, m.amplitudes[0])?;
            push(Quantity::Ratio21, pred.decay_ratio, ratios[0])?;
            if let Some(&r32) = ratios.get(1) {
                push(Quantity::Ratio32, pred.decay_ratio, r32)?;
            }
            push(Quantity::T, pred.half_period, m.half_period)?;
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_n.into_iter().flatten().collect())
}

/// Position and velocity asymmetry pairs compared side by side.
pub const STRATEGIES: [(&str, f64, f64); 3] = [
    ("symmetric", 0.5, 0.5),
    ("identical-asymmetry", 0.4, 0.4),
    ("velocity-asymmetry", 0.5, 0.4),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub label: String,
    pub rho_x: f64,
    pub rho_v: f64,
    /// `max_{i,t} |e_i(t)|`, m.
    pub max_overshoot: f64,
    /// `Σ ∫ |e_i| dt` over the common horizon, without tail.
    pub theta: f64,
    /// Last time the largest error exceeds 2% of the overshoot, s.
    pub settling_time: Option<f64>,
    pub settled: bool,
    pub diverged: bool,
}

/// Fraction of the overshoot that counts as settled.
pub const SETTLING_BAND: f64 = 0.02;

fn summarize(label: &str, trace: &SimulationTrace) -> StrategySummary {
    let worst: Vec<f64> = (0..trace.n_samples())
        .map(|k| trace.errors.iter().fold(0.0f64, |m, e| m.max(e[k].abs())))
        .collect();
    let peak = worst.iter().copied().fold(0.0, f64::max);
    let band = SETTLING_BAND * peak;
    let last_out = worst.iter().rposition(|&w| w > band);
    let settled = !trace.diverged && last_out.is_some_and(|k| k + 1 < worst.len());
    StrategySummary {
        label: label.to_string(),
        rho_x: trace.params.asym_x,
        rho_v: trace.params.asym_v,
        max_overshoot: peak,
        theta: integrated_abs_error(trace).theta,
        settling_time: settled.then(|| trace.times[last_out.unwrap() + 1]),
        settled,
        diverged: trace.diverged,
    }
}

/// Leader-step traces for the three asymmetry strategies over a common
/// horizon: `horizon_periods` half-periods of the slowest strategy.
pub fn run_compare_strategies(
    gains: &PlatoonParams,
    opts: &ExperimentOptions,
) -> Result<Vec<(StrategySummary, SimulationTrace)>> {
    let variants: Vec<(&str, PlatoonParams)> = STRATEGIES
        .iter()
        .map(|&(label, rx, rv)| (label, gains.with_asym(rx, rv)))
        .collect();
    let mut horizon = 0.0f64;
    for (_, p) in &variants {
        horizon = horizon.max(transient_horizon(p, opts.horizon_periods)?);
    }
    variants
        .into_par_iter()
        .map(|(label, p)| {
            let sim = SimOptions::new(opts.dt, horizon).with_max_samples(opts.max_samples);
            let sys = PlatoonSystem::new(p, Topology::Path)?;
            let trace = simulate(&sys, &StateVector::leader_step(p.n_followers), &sim)?;
            Ok((summarize(label, &trace), trace))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    /// `Θ`, including the extrapolated tail when `censored` is false.
    pub theta: f64,
    pub tail: f64,
    pub diverged: bool,
    /// Θ is a lower bound: the run diverged or its tail does not converge.
    pub censored: bool,
}

/// Θ of one leader-step run. Divergence and non-decaying transients are
/// reported as censored points carrying the truncated integral.
pub fn theta_point(params: &PlatoonParams, opts: &ExperimentOptions) -> Result<ThetaPoint> {
    let trace = leader_step_trace(params, opts)?;
    match total_absolute_error(&trace) {
        Ok(s) => Ok(ThetaPoint {
            theta: s.theta,
            tail: s.tail,
            diverged: false,
            censored: false,
        }),
        Err(
            PlatoonError::Diverged(_)
            | PlatoonError::NonConvergentTail(_)
            | PlatoonError::TraceTooShort { .. },
        ) => Ok(ThetaPoint {
            theta: integrated_abs_error(&trace).theta,
            tail: 0.0,
            diverged: trace.diverged,
            censored: true,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub variant: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub theta: f64,
    pub tail: f64,
    pub diverged: bool,
    pub censored: bool,
}

/// Label of the closed-form cubic series in scaling tables.
pub const PREDICTED_VARIANT: &str = "predicted";

/// Θ(N) for the three strategies plus the closed-form cubic prediction of
/// the velocity-asymmetry design.
pub fn run_scaling(
    gains: &PlatoonParams,
    n_list: &[usize],
    opts: &ExperimentOptions,
) -> Result<Vec<ScalingRow>> {
    if n_list.is_empty() {
        return Err(PlatoonError::InvalidGrid(
            "empty platoon-length list".to_string(),
        ));
    }
    let jobs: Vec<(&str, PlatoonParams)> = STRATEGIES
        .iter()
        .flat_map(|&(label, rx, rv)| {
            n_list
                .iter()
                .map(move |&n| (label, gains.with_asym(rx, rv).with_n(n)))
        })
        .collect();
    let mut rows: Vec<ScalingRow> = jobs
        .into_par_iter()
        .map(|(label, p)| {
            let t = theta_point(&p, opts)?;
            Ok(ScalingRow {
                variant: label.to_string(),
                n: p.n_followers,
                theta: t.theta,
                tail: t.tail,
                diverged: t.diverged,
                censored: t.censored,
            })
        })
        .collect::<Result<_>>()?;
    let (_, rx, rv) = STRATEGIES[2];
    for &n in n_list {
        rows.push(ScalingRow {
            variant: PREDICTED_VARIANT.to_string(),
            n,
            theta: predict_total_error(&gains.with_asym(rx, rv).with_n(n))?,
            tail: 0.0,
            diverged: false,
            censored: false,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Swept parameter value.
    pub value: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub theta: f64,
    pub tail: f64,
    pub diverged: bool,
    pub censored: bool,
    /// Stability conditions of the circular system hold.
    pub theorem_stable: bool,
    /// Velocity-asymmetry margin `bound - |β_v|`; absent when undefined.
    pub margin: Option<f64>,
}

fn sweep(
    points: Vec<PlatoonParams>,
    values: &[f64],
    opts: &ExperimentOptions,
) -> Result<Vec<SweepRow>> {
    points
        .into_par_iter()
        .zip(values.par_iter())
        .map(|(p, &value)| {
            let report = check_circular_stability(&p);
            let t = theta_point(&p, opts)?;
            Ok(SweepRow {
                value,
                n: p.n_followers,
                theta: t.theta,
                tail: t.tail,
                diverged: t.diverged,
                censored: t.censored,
                theorem_stable: report.stable,
                margin: report.margin,
            })
        })
        .collect()
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Friction at which the velocity-asymmetry margin vanishes, searched in
/// `(g_x/g_v, 100]`.
pub fn critical_friction(params: &PlatoonParams) -> Option<f64> {
    let (gx, gv, beta) = (params.gain_x, params.gain_v, params.beta_v().abs());
    if !(gx > 0.0 && gv > 0.0) {
        return None;
    }
    bisect(|a| beta_v_bound(a, gx, gv) - beta, gx / gv, 100.0, 1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionSweep {
    pub a_star: Option<f64>,
    pub rows: Vec<SweepRow>,
}

impl FrictionSweep {
    pub fn diverged_everywhere(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.diverged)
    }
}

pub fn run_sweep_friction(
    base: &PlatoonParams,
    a_values: &[f64],
    opts: &ExperimentOptions,
) -> Result<FrictionSweep> {
    if a_values.is_empty() {
        return Err(PlatoonError::InvalidGrid(
            "empty friction range".to_string(),
        ));
    }
    if let Some(&bad) = a_values.iter().find(|&&a| !(a > 0.0)) {
        return Err(PlatoonError::InvalidParameter {
            name: "a",
            value: bad,
            reason: "must be positive",
        });
    }
    let points = a_values.iter().map(|&a| base.with_friction(a)).collect();
    Ok(FrictionSweep {
        a_star: critical_friction(base),
        rows: sweep(points, a_values, opts)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymSweep {
    /// `ρ_v` with the smallest uncensored Θ.
    pub argmin: Option<f64>,
    pub rows: Vec<SweepRow>,
}

pub fn run_sweep_asym(
    base: &PlatoonParams,
    rho_v_values: &[f64],
    opts: &ExperimentOptions,
) -> Result<AsymSweep> {
    if rho_v_values.is_empty() {
        return Err(PlatoonError::InvalidGrid(
            "empty asymmetry range".to_string(),
        ));
    }
    if let Some(&bad) = rho_v_values.iter().find(|&&r| !(r > 0.0 && r < 0.5)) {
        return Err(PlatoonError::AsymmetryOutOfRange {
            name: "rho_v",
            value: bad,
        });
    }
    let points = rho_v_values
        .iter()
        .map(|&r| base.with_asym(base.asym_x, r))
        .collect();
    let rows = sweep(points, rho_v_values, opts)?;
    let argmin = rows
        .iter()
        .filter(|r| !r.censored)
        .min_by(|a, b| a.theta.total_cmp(&b.theta))
        .map(|r| r.value);
    Ok(AsymSweep { argmin, rows })
}

/// Inclusive grid `lo, lo+step, …` up to `hi` within a relative slack.
pub fn range_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(PlatoonError::InvalidGrid(format!(
            "bad range {lo}:{hi}:{step}"
        )));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| lo + k as f64 * step).collect())
}
