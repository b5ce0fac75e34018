//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use platoon_core::cubic::{residual, solve_monic_cubic};
use platoon_core::dynamics::simulate_with_state;
use platoon_core::io::Quantity;
use platoon_core::optimizer::{optimize, OptimizationProblem};
use platoon_core::spectral::{
    check_circular_stability, default_phi_grid, phase_velocity_curves, signal_velocities,
    spectral_scan, ModeSpectrum,
};
use platoon_core::wave::{
    classify_flock_stability, trapezoid_profile_sum, ExperimentOptions, FlockVerdict,
};
use platoon_core::{
    build_laplacian, simulate, PlatoonParams, PlatoonSystem, SimOptions, StateVector, Topology,
};
use platoon_lab::{
    critical_friction, run_scaling, run_sweep_friction, run_verify, PREDICTED_VARIANT,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn opts() -> ExperimentOptions {
    ExperimentOptions::default()
}

fn slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let s = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / sxx;
    let sse = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - s * (a - mx)).powi(2))
        .sum();
    (s, sse)
}

fn stability_theorem() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut checked, mut mismatches) = (0, Vec::new());
    while checked < 500 {
        let a = rng.gen_range(0.5..4.0);
        let gx = rng.gen_range(0.5..12.0);
        let gv = rng.gen_range(0.5..12.0);
        let rho_x = if rng.gen_bool(0.5) {
            0.5
        } else {
            rng.gen_range(0.3..0.7)
        };
        let rho_v = rng.gen_range(0.25..0.75);
        let p = PlatoonParams::new(60, a, gx, gv, rho_x, rho_v).unwrap();
        let report = check_circular_stability(&p);
        if report.margin.is_some_and(|m| m.abs() <= 1e-3) {
            continue;
        }
        checked += 1;
        let scan = spectral_scan(&p).unwrap();
        if scan.stable != report.stable {
            mismatches.push(format!(
                "rho_x={:.4} max Re={:.2e}",
                p.asym_x, scan.max_real_part
            ));
        }
    }
    check(
        mismatches.is_empty(),
        format!(
            "{} of {checked} draws disagree {mismatches:?}",
            mismatches.len()
        ),
    )
}

fn signal_velocity_values() -> Outcome {
    let p = PlatoonParams::tuned(500);
    let w = signal_velocities(&p).unwrap();
    let curves = phase_velocity_curves(&p, &default_phi_grid(500)).unwrap();
    let phi_ok = (curves.phi[0] - 2.0 * PI / 501.0).abs() < 1e-15;
    let (cp, cm) = curves.signal_estimates(0);
    let ep = (cp / w.c_plus - 1.0).abs();
    let em = (cm / w.c_minus - 1.0).abs();
    check(
        (w.c_plus - 1.84165).abs() <= 1e-5
            && (w.c_minus + 0.84165).abs() <= 1e-5
            && phi_ok
            && ep < 0.02
            && em < 0.02,
        format!(
            "c+={:.6} c-={:.6}, branch at 2π/501: {cp:.5} ({:.2}%), {cm:.5} ({:.2}%)",
            w.c_plus,
            w.c_minus,
            100.0 * ep,
            100.0 * em
        ),
    )
}

fn transient_verification() -> Outcome {
    let ns = [40, 80, 160];
    let rows = run_verify(&PlatoonParams::tuned(40), &ns, &opts()).map_err(|e| e.to_string())?;
    let rel = |chi: Quantity| -> Vec<f64> {
        ns.iter()
            .map(|&n| {
                let r = rows.iter().find(|r| r.n == n && r.chi == chi).unwrap();
                (r.pred / r.meas - 1.0).abs()
            })
            .collect()
    };
    let t = rel(Quantity::T);
    let a1 = rel(Quantity::A1);
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    check(
        decreasing(&t) && decreasing(&a1) && t[2] < 0.08 && a1[2] < 0.12,
        format!("T errors {t:.4?}, A1 errors {a1:.4?}"),
    )
}

fn critical_friction_sweep() -> Outcome {
    let base = PlatoonParams::tuned(300);
    let a_star = critical_friction(&base).unwrap();
    let sweep = run_sweep_friction(&base, &[1.45, 1.6], &opts()).map_err(|e| e.to_string())?;
    let (lo, hi) = (&sweep.rows[0], &sweep.rows[1]);
    let ratio = lo.theta / hi.theta;
    check(
        (a_star - 1.514).abs() <= 1e-3 && ratio > 10.0,
        format!(
            "a*={a_star:.5}, Θ(1.45)={:.4e}{} Θ(1.6)={:.4e}, ratio {ratio:.3}",
            lo.theta,
            if lo.censored { " (censored)" } else { "" },
            hi.theta
        ),
    )
}

fn optimizer_reproduction() -> Outcome {
    let r = optimize(&OptimizationProblem::new(2.0, 10.0, 0.1)).map_err(|e| e.to_string())?;
    let z = optimize(&OptimizationProblem::new(2.0, 10.0, 0.0)).map_err(|e| e.to_string())?;
    check(
        (r.gain_v - 10.0).abs() <= 1e-6
            && (r.asym_v - 0.396).abs() <= 0.01
            && (r.gain_x - 6.2).abs() <= 0.2
            && (z.asym_v - 0.37).abs() <= 0.01
            && (z.gain_x - 8.3).abs() <= 0.3,
        format!(
            "ε=0.1: gx={:.4} gv={:.6} ρv={:.4}; ε=0: gx={:.4} ρv={:.4}",
            r.gain_x, r.gain_v, r.asym_v, z.gain_x, z.asym_v
        ),
    )
}

fn scaling_law() -> Outcome {
    let ns = [50usize, 100, 200];
    let rows = run_scaling(&PlatoonParams::tuned(50), &ns, &opts()).map_err(|e| e.to_string())?;
    let series = |v: &str| -> Vec<f64> {
        ns.iter()
            .map(|&n| {
                rows.iter()
                    .find(|r| r.variant == v && r.n == n)
                    .unwrap()
                    .theta
            })
            .collect()
    };
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let nx: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let vel = series("velocity-asymmetry");
    let pred = series(PREDICTED_VARIANT);
    let (exp, _) = slope(&lx, &vel.iter().map(|t| t.ln()).collect::<Vec<_>>());
    let match200 = (vel[2] / pred[2] - 1.0).abs();

    let same: Vec<f64> = series("identical-asymmetry")
        .iter()
        .map(|t| t.ln())
        .collect();
    let (_, sse_n) = slope(&nx, &same);
    let (_, sse_log) = slope(&lx, &same);
    let cls = classify_flock_stability(
        &PlatoonParams::tuned(25).with_asym(0.4, 0.4),
        &[25, 50, 100, 200],
        &opts(),
    )
    .map_err(|e| e.to_string())?;
    check(
        (2.7..=3.3).contains(&exp)
            && match200 < 0.2
            && sse_n < sse_log
            && cls.verdict == FlockVerdict::FlockUnstable,
        format!(
            "slope {exp:.3}, Θ(200) {:.4e} vs {:.4e} ({:.1}%), identical-asymmetry ln Θ sse N/lnN {sse_n:.3e}/{sse_log:.3e}, verdict {:?}",
            vel[2],
            pred[2],
            100.0 * match200,
            cls.verdict
        ),
    )
}

fn property_suites() -> Outcome {
    let mut notes = Vec::new();

    let mut worst_row = 0.0f64;
    for topology in [Topology::Path, Topology::Circular] {
        for n in [1, 3, 10, 57] {
            for rho in [0.0, 0.3, 0.5, 0.77, 1.0] {
                let l = build_laplacian(n, rho, topology).unwrap();
                for i in 0..l.nrows() {
                    worst_row = worst_row.max(l.row(i).sum().abs());
                }
            }
        }
    }
    notes.push(format!("row sums {worst_row:.1e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_vieta = 0.0f64;
    for _ in 0..2000 {
        let c2 = Complex64::new(rng.gen_range(0.0..5.0), 0.0);
        let c1 = Complex64::new(rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0));
        let c0 = Complex64::new(rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0));
        let r = solve_monic_cubic(c2, c1, c0);
        let d = [
            (r[0] + r[1] + r[2] + c2).norm(),
            (r[0] * r[1] + r[0] * r[2] + r[1] * r[2] - c1).norm(),
            (r[0] * r[1] * r[2] + c0).norm(),
        ];
        worst_vieta = d.iter().fold(worst_vieta, |m, &x| m.max(x));
        for x in r {
            worst_vieta = worst_vieta.max(residual(c2, c1, c0, x) / (1.0 + x.norm().powi(3)));
        }
    }
    notes.push(format!("Vieta {worst_vieta:.1e}"));

    let p = PlatoonParams::tuned(80).with_asym(0.45, 0.3);
    let n = p.n_vehicles();
    let mut worst_conj = 0.0f64;
    for m in 1..n {
        let phi = 2.0 * PI * m as f64 / n as f64;
        let a = ModeSpectrum::new(&p, m, phi).roots;
        let b = ModeSpectrum::new(&p, n - m, 2.0 * PI - phi).roots;
        for z in a {
            let d = b
                .iter()
                .map(|w| (w.conj() - z).norm())
                .fold(f64::INFINITY, f64::min);
            worst_conj = worst_conj.max(d);
        }
    }
    notes.push(format!("conjugates {worst_conj:.1e}"));

    let sys = PlatoonSystem::new(PlatoonParams::tuned(5), Topology::Path).unwrap();
    let x0 = StateVector::leader_step(5);
    let state = |h: f64| -> Vec<f64> {
        let (_, x) = simulate_with_state(&sys, &x0, &SimOptions::new(h, 4.0)).unwrap();
        x.to_dvector().iter().copied().collect()
    };
    let dt = 0.08;
    let reference = state(dt / 8.0);
    let err = |h: f64| {
        state(h)
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let order_ratio = err(dt) / err(dt / 2.0);
    notes.push(format!("RK4 ratio {order_ratio:.2}"));

    let psys = PlatoonSystem::new(
        PlatoonParams::tuned(30).with_asym(0.45, 0.35),
        Topology::Path,
    )
    .unwrap();
    let mut s0 = StateVector::leader_step(30);
    s0.z[4] = 0.7;
    let o = SimOptions::new(0.01, 20.0);
    let base = simulate(&psys, &s0, &o).unwrap();
    let mut worst_lin = 0.0f64;
    for alpha in [-3.0, 0.25, 17.0] {
        let scaled = simulate(&psys, &s0.scaled(alpha), &o).unwrap();
        let scale = alpha.abs()
            * base
                .errors
                .iter()
                .flatten()
                .fold(0.0f64, |m, e| m.max(e.abs()));
        for (a, b) in base
            .errors
            .iter()
            .flatten()
            .zip(scaled.errors.iter().flatten())
        {
            worst_lin = worst_lin.max((b - alpha * a).abs() / scale);
        }
    }
    notes.push(format!("linearity {worst_lin:.1e}"));

    let direct: f64 = (1..=3)
        .map(|i| (i as f64 / 3.0) * (1.0 - i as f64 / 6.0))
        .sum();
    let sum_err = (direct - 11.0 / 9.0)
        .abs()
        .max((trapezoid_profile_sum(3) - 11.0 / 9.0).abs());
    notes.push(format!("11/9 {sum_err:.1e}"));

    check(
        worst_row <= 1e-14
            && worst_vieta <= 1e-9
            && worst_conj <= 1e-10
            && (order_ratio - 16.0).abs() <= 0.3 * 16.0
            && worst_lin <= 1e-10
            && sum_err <= 1e-14,
        notes.join(", "),
    )
}

fn position_asymmetry_falsification() -> Outcome {
    let p = PlatoonParams::tuned(400).with_asym(0.45, 0.4);
    let scan = spectral_scan(&p).unwrap();
    let cls = classify_flock_stability(&p.with_n(25), &[25, 50, 100, 200], &opts())
        .map_err(|e| e.to_string())?;
    check(
        scan.max_real_part > 0.0 && cls.verdict == FlockVerdict::FlockUnstable,
        format!(
            "max Re at N=400 {:.3e}, verdict {:?}, max|e_N| {:?}",
            scan.max_real_part, cls.verdict, cls.max_errors
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (
            "1 stability theorem vs brute force",
            stability_theorem,
            Duration::from_secs(30),
        ),
        (
            "2 signal velocities",
            signal_velocity_values,
            Duration::from_secs(5),
        ),
        (
            "3 transient prediction errors",
            transient_verification,
            Duration::from_secs(300),
        ),
        (
            "4 critical friction",
            critical_friction_sweep,
            Duration::from_secs(600),
        ),
        (
            "5 optimizer reproduction",
            optimizer_reproduction,
            Duration::from_secs(10),
        ),
        ("6 scaling law", scaling_law, Duration::from_secs(600)),
        (
            "7 property suites",
            property_suites,
            Duration::from_secs(60),
        ),
        (
            "8 position asymmetry falsification",
            position_asymmetry_falsification,
            Duration::from_secs(300),
        ),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run, limit) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = run();
        let elapsed = started.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > limit => Err(format!("{d}; took {elapsed:.1?} > {limit:?}")),
            o => o,
        };
        match outcome {
            Ok(d) => println!("PASS criterion {name}: {d} [{elapsed:.1?}]"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d} [{elapsed:.1?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
