//! Selection of the gains and the velocity asymmetry.
//!
//! The transient criterion `1/g_x² + 2a/(g_v² β_v² g_x)` is minimized subject
//! to the circular stability conditions, with the velocity-asymmetry interval
//! shrunk by a margin `ε`. The criterion falls with `β_v` and `g_v`, so the
//! minimizer sits on the upper `β_v` boundary at `g_v = g_max`, leaving a
//! convex one-dimensional problem in `g_x`. A multi-start Nelder-Mead over
//! the full box cross-checks that reduction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PlatoonError, Result};
use crate::params::asym_from_beta;
use crate::spectral::beta_v_bound;
use crate::wave::j_hat;

/// Tolerance on constraint margins when judging feasibility.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Criterion disagreement between the reduction and the polish that is reported.
pub const POLISH_WARN_TOL: f64 = 1e-4;
pub const POLISH_SEED: u64 = 0x5eed_2015;
const POLISH_STARTS: usize = 8;
const SAMPLE_ATTEMPTS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    /// Fixed by the vehicle.
    pub friction: f64,
    pub gain_upper: f64,
    pub gain_lower: f64,
    /// Margin subtracted from both ends of the `β_v` stability interval.
    pub epsilon: f64,
}

impl Default for OptimizationProblem {
    fn default() -> Self {
        Self {
            friction: 2.0,
            gain_upper: 10.0,
            gain_lower: 1e-3,
            epsilon: 0.1,
        }
    }
}

impl OptimizationProblem {
    pub fn new(friction: f64, gain_upper: f64, epsilon: f64) -> Self {
        Self {
            friction,
            gain_upper,
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, reason| {
            Err(PlatoonError::InvalidParameter {
                name,
                value,
                reason,
            })
        };
        if !(self.friction > 0.0) {
            return bad("a", self.friction, "must be positive");
        }
        if !(self.gain_lower > 0.0) {
            return bad("gain_lower", self.gain_lower, "must be positive");
        }
        if !(self.gain_upper > self.gain_lower) || !self.gain_upper.is_finite() {
            return bad("gmax", self.gain_upper, "must exceed the lower gain bound");
        }
        if !(self.epsilon >= 0.0) {
            return bad("eps", self.epsilon, "must be non-negative");
        }
        Ok(())
    }

    /// Largest `β_v` bound reachable anywhere in the gain box. The problem is
    /// infeasible when `epsilon` reaches it.
    pub fn margin_ceiling(&self) -> f64 {
        let a = self.friction;
        let gx = self.gain_lower;
        // d/dg_v of the bound vanishes at g_v = 3 g_x / a
        [self.gain_lower, self.gain_upper, 3.0 * gx / a]
            .into_iter()
            .filter(|gv| (self.gain_lower..=self.gain_upper).contains(gv))
            .map(|gv| beta_v_bound(a, gx, gv))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `1/g_x² + 2a/(g_v² β_v² g_x)`.
pub fn criterion(gain_x: f64, gain_v: f64, beta_v: f64, friction: f64) -> Result<f64> {
    if beta_v == 0.0 {
        return Err(PlatoonError::SingularCriterion);
    }
    if !(gain_x > 0.0) {
        return Err(PlatoonError::InvalidParameter {
            name: "gx",
            value: gain_x,
            reason: "must be positive",
        });
    }
    if !(gain_v > 0.0) {
        return Err(PlatoonError::InvalidParameter {
            name: "gv",
            value: gain_v,
            reason: "must be positive",
        });
    }
    Ok(raw_criterion(gain_x, gain_v, beta_v, friction))
}

fn raw_criterion(gx: f64, gv: f64, beta: f64, a: f64) -> f64 {
    1.0 / (gx * gx) + 2.0 * a / (gv * gv * beta * beta * gx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMargin {
    pub name: String,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// Signed margins; negative means violated.
    pub margins: Vec<ConstraintMargin>,
}

impl Feasibility {
    pub fn margin(&self, name: &str) -> Option<f64> {
        self.margins
            .iter()
            .find(|m| m.name == name)
            .map(|m| m.margin)
    }
}

pub fn feasible(
    gain_x: f64,
    gain_v: f64,
    beta_v: f64,
    problem: &OptimizationProblem,
) -> Feasibility {
    let a = problem.friction;
    let eps = problem.epsilon;
    let bound = if gain_v > 0.0 {
        beta_v_bound(a, gain_x, gain_v)
    } else {
        f64::NEG_INFINITY
    };
    let ratio = if gain_v > 0.0 {
        a - gain_x / gain_v
    } else {
        f64::NEG_INFINITY
    };
    let margins: Vec<ConstraintMargin> = [
        ("friction_exceeds_gain_ratio", ratio),
        ("gain_x_lower", gain_x - problem.gain_lower),
        ("gain_x_upper", problem.gain_upper - gain_x),
        ("gain_v_lower", gain_v - problem.gain_lower),
        ("gain_v_upper", problem.gain_upper - gain_v),
        ("beta_v_upper", bound - eps - beta_v),
        ("beta_v_lower", beta_v + bound - eps),
    ]
    .into_iter()
    .map(|(name, margin)| ConstraintMargin {
        name: name.to_string(),
        margin,
    })
    .collect();
    Feasibility {
        feasible: margins.iter().all(|m| m.margin >= -FEASIBILITY_TOL),
        margins,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    #[serde(rename = "a")]
    pub friction: f64,
    #[serde(rename = "eps")]
    pub epsilon: f64,
    /// `[gain_lower, gain_upper]`.
    pub bounds: [f64; 2],
    #[serde(rename = "gx")]
    pub gain_x: f64,
    #[serde(rename = "gv")]
    pub gain_v: f64,
    #[serde(rename = "rho_v")]
    pub asym_v: f64,
    pub beta_v: f64,
    pub criterion: f64,
    pub j_hat: f64,
    pub active_constraints: Vec<String>,
    pub warnings: Vec<String>,
    pub seed: u64,
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Nelder-Mead on a 3-vector with standard coefficients.
fn nelder_mead(
    f: &impl Fn(&[f64; 3]) -> f64,
    start: [f64; 3],
    step: [f64; 3],
    iters: usize,
) -> ([f64; 3], f64) {
    let mut simplex: Vec<([f64; 3], f64)> = (0..4)
        .map(|i| {
            let mut p = start;
            if i > 0 {
                p[i - 1] += step[i - 1];
            }
            (p, f(&p))
        })
        .collect();
    let lerp = |a: &[f64; 3], b: &[f64; 3], t: f64| -> [f64; 3] {
        [0, 1, 2].map(|k| a[k] + t * (b[k] - a[k]))
    };
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[3].1 - simplex[0].1;
        if spread.abs() < 1e-15 * (1.0 + simplex[0].1.abs()) {
            break;
        }
        let centroid = [0, 1, 2].map(|k| simplex[..3].iter().map(|p| p.0[k]).sum::<f64>() / 3.0);
        let worst = simplex[3];
        let refl = lerp(&centroid, &worst.0, -1.0);
        let fr = f(&refl);
        if fr < simplex[0].1 {
            let exp = lerp(&centroid, &worst.0, -2.0);
            let fe = f(&exp);
            simplex[3] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (refl, fr);
        } else {
            let con = if fr < worst.1 {
                lerp(&centroid, &refl, 0.5)
            } else {
                lerp(&centroid, &worst.0, 0.5)
            };
            let fc = f(&con);
            if fc < worst.1.min(fr) {
                simplex[3] = (con, fc);
            } else {
                let best = simplex[0].0;
                for p in simplex.iter_mut().skip(1) {
                    p.0 = lerp(&best, &p.0, 0.5);
                    p.1 = f(&p.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Largest admissible `β_v` for given gains, capped at 1 (`ρ_v = 0`).
fn boundary_beta(problem: &OptimizationProblem, gx: f64, gv: f64) -> f64 {
    (beta_v_bound(problem.friction, gx, gv) - problem.epsilon).min(1.0)
}

/// Minimizer over `g_x` with `g_v = g_max` and `β_v` on its upper boundary.
fn boundary_reduction(problem: &OptimizationProblem) -> Option<(f64, f64, f64)> {
    let a = problem.friction;
    let gv = problem.gain_upper;
    let beta_zero_at = a * gv - problem.epsilon * (2.0 * gv.powi(3)).sqrt();
    let gx_hi = problem.gain_upper.min(beta_zero_at).min(a * gv);
    if gx_hi <= problem.gain_lower {
        return None;
    }
    let f = |gx: f64| {
        let b = boundary_beta(problem, gx, gv);
        if b > 0.0 {
            raw_criterion(gx, gv, b, a)
        } else {
            f64::INFINITY
        }
    };
    let gx = golden_section(f, problem.gain_lower, gx_hi, 1e-9);
    let beta = boundary_beta(problem, gx, gv);
    (beta > 0.0).then_some((gx, gv, beta))
}

fn admissible(problem: &OptimizationProblem, p: &[f64; 3]) -> bool {
    p[2] > 0.0 && p[2] <= 1.0 && feasible(p[0], p[1], p[2], problem).feasible
}

/// Multi-start Nelder-Mead over `(g_x, g_v, β_v)` with an extreme barrier,
/// followed by moving `β_v` to its boundary.
fn polish(problem: &OptimizationProblem, seed: u64) -> Option<(f64, f64, f64)> {
    let (lo, hi) = (problem.gain_lower, problem.gain_upper);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = Vec::new();
    for _ in 0..SAMPLE_ATTEMPTS {
        let p = [
            rng.gen_range(lo..hi),
            rng.gen_range(lo..hi),
            rng.gen_range(0.0..1.0),
        ];
        if admissible(problem, &p) {
            starts.push(p);
            if starts.len() == POLISH_STARTS {
                break;
            }
        }
    }
    let obj = |p: &[f64; 3]| {
        if admissible(problem, p) {
            raw_criterion(p[0], p[1], p[2], problem.friction)
        } else {
            f64::INFINITY
        }
    };
    let span = hi - lo;
    starts
        .into_iter()
        .map(|s| {
            let step = [0.05 * span, 0.05 * span, 0.05].map(|x: f64| x.max(1e-6));
            let (mut p, _) = nelder_mead(&obj, s, step, 4000);
            let (q, _) = nelder_mead(&obj, p, [1e-3 * span, 1e-3 * span, 1e-4], 4000);
            p = q;
            let b = boundary_beta(problem, p[0], p[1]);
            if b > p[2] && admissible(problem, &[p[0], p[1], b]) {
                p[2] = b;
            }
            (p, raw_criterion(p[0], p[1], p[2], problem.friction))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(p, _)| (p[0], p[1], p[2]))
}

pub fn optimize(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    problem.validate()?;
    let ceiling = problem.margin_ceiling();
    if problem.epsilon >= ceiling {
        return Err(PlatoonError::Infeasible(format!(
            "margin eps = {} is not below the largest reachable bound {ceiling}",
            problem.epsilon
        )));
    }
    let a = problem.friction;
    let mut warnings = Vec::new();
    let reduced = boundary_reduction(problem);
    let polished = polish(problem, POLISH_SEED);

    let value = |p: &(f64, f64, f64)| raw_criterion(p.0, p.1, p.2, a);
    let (gx, gv, beta) = match (reduced, polished) {
        (Some(r), Some(p)) => {
            let (vr, vp) = (value(&r), value(&p));
            if (vr - vp).abs() > POLISH_WARN_TOL {
                warnings.push(format!(
                    "boundary reduction criterion {vr:.6} disagrees with multi-start polish {vp:.6}"
                ));
            }
            if vp < vr - POLISH_WARN_TOL {
                p
            } else {
                r
            }
        }
        (Some(r), None) => {
            warnings.push("multi-start polish found no feasible start".to_string());
            r
        }
        (None, Some(p)) => {
            warnings.push(format!(
                "no feasible point at g_v = {}; using the multi-start polish",
                problem.gain_upper
            ));
            p
        }
        (None, None) => {
            return Err(PlatoonError::Infeasible(
                "no feasible point with beta_v > 0 found".to_string(),
            ))
        }
    };

    let check = feasible(gx, gv, beta, problem);
    let active_constraints = check
        .margins
        .iter()
        .filter(|m| m.margin.abs() < 1e-7)
        .map(|m| m.name.clone())
        .collect();
    Ok(OptimizationResult {
        friction: a,
        epsilon: problem.epsilon,
        bounds: [problem.gain_lower, problem.gain_upper],
        gain_x: gx,
        gain_v: gv,
        asym_v: asym_from_beta(beta),
        beta_v: beta,
        criterion: raw_criterion(gx, gv, beta, a),
        j_hat: j_hat(gx, gv, beta, a),
        active_constraints,
        warnings,
        seed: POLISH_SEED,
    })
}
