//! Circulant spectrum of the circular system.
//!
//! Both circulant Laplacians share the Fourier eigenvectors, so every mode
//! `φ = 2πm/(N+1)` reduces the closed loop to the cubic
//! `ν³ + a ν² + λ_v(φ) ν + λ_x(φ) = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cubic::{residual, solve_monic_cubic};
use crate::error::{PlatoonError, Result};
use crate::params::PlatoonParams;

/// Absolute tolerance on `rho_x = 1/2`.
pub const RHO_X_TOL: f64 = 1e-12;

/// Eigenvalue of `gain · L` on the Fourier mode `phi`.
pub fn circulant_eigenvalue(gain: f64, asym: f64, phi: f64) -> Complex64 {
    gain * Complex64::new(1.0 - phi.cos(), (1.0 - 2.0 * asym) * phi.sin())
}

pub fn solve_mode_cubic(friction: f64, lambda_v: Complex64, lambda_x: Complex64) -> [Complex64; 3] {
    solve_monic_cubic(Complex64::new(friction, 0.0), lambda_v, lambda_x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    pub m: usize,
    pub phi: f64,
    pub lambda_x: Complex64,
    pub lambda_v: Complex64,
    pub roots: [Complex64; 3],
}

impl ModeSpectrum {
    pub fn new(params: &PlatoonParams, m: usize, phi: f64) -> Self {
        let lambda_x = circulant_eigenvalue(params.gain_x, params.asym_x, phi);
        let lambda_v = circulant_eigenvalue(params.gain_v, params.asym_v, phi);
        Self {
            m,
            phi,
            lambda_x,
            lambda_v,
            roots: solve_mode_cubic(params.friction, lambda_v, lambda_x),
        }
    }

    pub fn max_residual_ratio(&self, friction: f64) -> f64 {
        self.roots
            .iter()
            .map(|&nu| {
                residual(
                    Complex64::new(friction, 0.0),
                    self.lambda_v,
                    self.lambda_x,
                    nu,
                ) / (1.0 + nu.norm().powi(3))
            })
            .fold(0.0, f64::max)
    }
}

/// Necessary conditions on the gains and weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NecessaryConditions {
    pub friction_positive: bool,
    pub gain_x_positive: bool,
    pub gain_v_positive: bool,
    pub friction_exceeds_gain_ratio: bool,
    pub position_symmetric: bool,
}

impl NecessaryConditions {
    /// Friction and gain positivity plus `a > g_x / g_v`.
    pub fn gains_ok(&self) -> bool {
        self.friction_positive
            && self.gain_x_positive
            && self.gain_v_positive
            && self.friction_exceeds_gain_ratio
    }

    pub fn all(&self) -> bool {
        self.gains_ok() && self.position_symmetric
    }
}

pub fn check_necessary(params: &PlatoonParams) -> NecessaryConditions {
    let gain_v_positive = params.gain_v > 0.0;
    NecessaryConditions {
        friction_positive: params.friction > 0.0,
        gain_x_positive: params.gain_x > 0.0,
        gain_v_positive,
        friction_exceeds_gain_ratio: gain_v_positive
            && params.friction > params.gain_x / params.gain_v,
        position_symmetric: (params.asym_x - 0.5).abs() <= RHO_X_TOL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub cond_i: bool,
    pub friction_positive: bool,
    pub gain_x_positive: bool,
    pub gain_v_positive: bool,
    pub friction_exceeds_gain_ratio: bool,
    pub cond_ii: bool,
    /// `None` when condition I fails and the bound is undefined.
    pub cond_iii: Option<bool>,
    /// `(a g_v - g_x) / sqrt(2 g_v³)`.
    pub beta_v_bound: Option<f64>,
    /// `beta_v_bound - |beta_v|`.
    pub margin: Option<f64>,
    pub stable: bool,
}

/// Velocity-asymmetry bound `(a g_v - g_x)/sqrt(2 g_v³)`.
pub fn beta_v_bound(friction: f64, gain_x: f64, gain_v: f64) -> f64 {
    (friction * gain_v - gain_x) / (2.0 * gain_v.powi(3)).sqrt()
}

/// Conditions I-III for every non-trivial eigenvalue of the circular system
/// to lie in the open left half-plane.
pub fn check_circular_stability(params: &PlatoonParams) -> StabilityReport {
    let nec = check_necessary(params);
    let cond_i = nec.gains_ok();
    let (bound, margin, cond_iii) = if cond_i {
        let b = beta_v_bound(params.friction, params.gain_x, params.gain_v);
        let m = b - params.beta_v().abs();
        (Some(b), Some(m), Some(m > 0.0))
    } else {
        (None, None, None)
    };
    StabilityReport {
        cond_i,
        friction_positive: nec.friction_positive,
        gain_x_positive: nec.gain_x_positive,
        gain_v_positive: nec.gain_v_positive,
        friction_exceeds_gain_ratio: nec.friction_exceeds_gain_ratio,
        cond_ii: nec.position_symmetric,
        cond_iii,
        beta_v_bound: bound,
        margin,
        stable: cond_i && nec.position_symmetric && cond_iii == Some(true),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralScan {
    pub modes: Vec<ModeSpectrum>,
    /// Largest real part over all non-trivial roots.
    pub max_real_part: f64,
    pub stable: bool,
}

/// Roots of every mode `m = 0..=N`. The two zero roots of the `φ = 0` mode are
/// excluded from the verdict; its `-a` root is kept.
pub fn spectral_scan(params: &PlatoonParams) -> Result<SpectralScan> {
    if params.n_followers < 1 {
        return Err(PlatoonError::NoFollowers);
    }
    let n = params.n_vehicles();
    let modes: Vec<_> = (0..n)
        .map(|m| ModeSpectrum::new(params, m, 2.0 * PI * m as f64 / n as f64))
        .collect();
    let mut max_re = f64::NEG_INFINITY;
    for mode in &modes {
        if mode.m == 0 {
            let mut r = mode.roots;
            r.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
            max_re = max_re.max(r[0].re);
        } else {
            for nu in mode.roots {
                max_re = max_re.max(nu.re);
            }
        }
    }
    Ok(SpectralScan {
        modes,
        max_real_part: max_re,
        stable: max_re < 0.0,
    })
}

/// Phase velocity `-Im ν / φ` and damping `Re ν` of one root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavePoint {
    pub root: Complex64,
    pub velocity: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVelocityCurves {
    pub phi: Vec<f64>,
    /// `branches[b][k]` is branch `b` at `phi[k]`.
    pub branches: [Vec<WavePoint>; 3],
}

impl PhaseVelocityCurves {
    /// Index of the least-damped branch at grid point `k`.
    pub fn least_damped(&self, k: usize) -> usize {
        (0..3)
            .max_by(|&a, &b| {
                self.branches[a][k]
                    .damping
                    .total_cmp(&self.branches[b][k].damping)
            })
            .unwrap()
    }

    /// Velocities of the two least-damped branches at grid point `k`, as
    /// `(positive-going, negative-going)`.
    pub fn signal_estimates(&self, k: usize) -> (f64, f64) {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&a, &b| {
            self.branches[b][k]
                .damping
                .total_cmp(&self.branches[a][k].damping)
        });
        let v0 = self.branches[idx[0]][k].velocity;
        let v1 = self.branches[idx[1]][k].velocity;
        (v0.max(v1), v0.min(v1))
    }
}

/// Uniform grid `2πk/(n+1)`, `k = 1..=n`, strictly inside `(0, 2π)`.
pub fn default_phi_grid(n_points: usize) -> Vec<f64> {
    (1..=n_points)
        .map(|k| 2.0 * PI * k as f64 / (n_points + 1) as f64)
        .collect()
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Phase velocities and damping along a strictly increasing grid in `(0, 2π)`.
///
/// Branches are continued between neighboring grid points by the root
/// permutation with minimal total distance, seeded by the sorted order at
/// the first grid point.
pub fn phase_velocity_curves(
    params: &PlatoonParams,
    phi_grid: &[f64],
) -> Result<PhaseVelocityCurves> {
    if phi_grid.is_empty() || phi_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PlatoonError::InvalidPhaseGrid);
    }
    if let Some(&bad) = phi_grid.iter().find(|&&p| !(p > 0.0 && p < 2.0 * PI)) {
        return Err(PlatoonError::PhaseOutOfRange(bad));
    }
    let mut branches: [Vec<WavePoint>; 3] = Default::default();
    let mut prev: Option<[Complex64; 3]> = None;
    for &phi in phi_grid {
        let roots = ModeSpectrum::new(params, 0, phi).roots;
        let ordered = match prev {
            None => roots,
            Some(p) => {
                let best = PERMUTATIONS
                    .iter()
                    .min_by(|a, b| {
                        let cost = |perm: &[usize; 3]| -> f64 {
                            (0..3).map(|i| (roots[perm[i]] - p[i]).norm()).sum()
                        };
                        cost(a).total_cmp(&cost(b))
                    })
                    .unwrap();
                [roots[best[0]], roots[best[1]], roots[best[2]]]
            }
        };
        for (b, &nu) in ordered.iter().enumerate() {
            branches[b].push(WavePoint {
                root: nu,
                velocity: -nu.im / phi,
                damping: nu.re,
            });
        }
        prev = Some(ordered);
    }
    Ok(PhaseVelocityCurves {
        phi: phi_grid.to_vec(),
        branches,
    })
}

/// Signal velocities in vehicles per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveVelocities {
    pub c_plus: f64,
    pub c_minus: f64,
}

impl WaveVelocities {
    /// `|c_-| + |c_+|`.
    pub fn sum_abs(&self) -> f64 {
        self.c_plus.abs() + self.c_minus.abs()
    }

    /// `|c_+| - |c_-|`.
    pub fn diff_abs(&self) -> f64 {
        self.c_plus.abs() - self.c_minus.abs()
    }

    /// `|c_-| |c_+|`.
    pub fn product_abs(&self) -> f64 {
        self.c_plus.abs() * self.c_minus.abs()
    }
}

/// `c_± = (g_v β_v ± sqrt(g_v² β_v² + 2 a g_x)) / (2a)`.
pub fn signal_velocities(params: &PlatoonParams) -> Result<WaveVelocities> {
    let a = params.friction;
    if !(a > 0.0) {
        return Err(PlatoonError::InvalidParameter {
            name: "a",
            value: a,
            reason: "signal velocities need positive friction",
        });
    }
    if !(params.gain_x > 0.0) {
        return Err(PlatoonError::InvalidParameter {
            name: "gx",
            value: params.gain_x,
            reason: "signal velocities need a positive position gain",
        });
    }
    let gb = params.gain_v * params.beta_v();
    let root = (gb * gb + 2.0 * a * params.gain_x).sqrt();
    Ok(WaveVelocities {
        c_plus: (gb + root) / (2.0 * a),
        c_minus: (gb - root) / (2.0 * a),
    })
}

/// Identities of the signal velocities in closed form: sum, difference and
/// product of their magnitudes.
pub fn velocity_identities(params: &PlatoonParams) -> (f64, f64, f64) {
    let a = params.friction;
    let gb = params.gain_v * params.beta_v();
    (
        (gb * gb + 2.0 * a * params.gain_x).sqrt() / a,
        gb / a,
        params.gain_x / (2.0 * a),
    )
}
