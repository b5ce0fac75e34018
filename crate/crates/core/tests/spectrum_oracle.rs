use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use platoon_core::spectral::{
    check_circular_stability, default_phi_grid, phase_velocity_curves, signal_velocities,
    spectral_scan, ModeSpectrum,
};
use platoon_core::{assemble_system, PlatoonParams, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nearest(pool: &[Complex64], nu: Complex64) -> (usize, f64) {
    pool.iter()
        .enumerate()
        .map(|(k, r)| (k, (r - nu).norm()))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap()
}

#[test]
fn dense_eigenvalues_match_mode_cubics() {
    let p = PlatoonParams::tuned(4);
    let a: DMatrix<f64> = assemble_system(&p, Topology::Circular).unwrap();
    assert_eq!(a.nrows(), 15);
    let mut dense: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    let scan = spectral_scan(&p).unwrap();
    let cubic: Vec<Complex64> = scan.modes.iter().flat_map(|m| m.roots).collect();
    assert_eq!(cubic.len(), 15);

    // the double zero of the uniform mode is a 2x2 Jordan block; a backward
    // stable solver splits it by O(sqrt(eps)), while the pair's mean stays exact
    let (simple, zeros): (Vec<Complex64>, Vec<Complex64>) =
        cubic.into_iter().partition(|r| r.norm() > 1e-12);
    assert_eq!(zeros.len(), 2);
    for nu in simple {
        let (k, d) = nearest(&dense, nu);
        assert!(d < 1e-8, "{nu}: {d:e}");
        dense.swap_remove(k);
    }
    assert_eq!(dense.len(), 2);
    assert!(((dense[0] + dense[1]) / 2.0).norm() < 1e-8);
    assert!(dense.iter().all(|z| z.norm() < 1e-6));
}

#[test]
fn dense_path_spectrum_differs_from_circular() {
    // the path system has a zero leader block and no circulant structure
    let p = PlatoonParams::tuned(4);
    let path = assemble_system(&p, Topology::Path).unwrap();
    let eig = path.complex_eigenvalues();
    let zeros = eig.iter().filter(|z| z.norm() < 1e-6).count();
    assert!(zeros >= 2);
    assert!(eig.iter().filter(|z| z.norm() >= 1e-6).all(|z| z.re < 0.0));
}

/// Random draws whose position asymmetry is either exactly symmetric or far
/// enough from it that a ring of 61 vehicles resolves the unstable band.
#[test]
fn theorem_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    let mut stable = 0;
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
        if rho_x != 0.5 && (rho_x - 0.5f64).abs() < 0.05 {
            continue;
        }
        let p = PlatoonParams::new(60, a, gx, gv, rho_x, rho_v).unwrap();
        let report = check_circular_stability(&p);
        if report.margin.is_some_and(|m| m.abs() <= 1e-3) {
            continue;
        }
        checked += 1;
        let scan = spectral_scan(&p).unwrap();
        assert_eq!(
            report.stable, scan.stable,
            "{p:?}: max Re {}",
            scan.max_real_part
        );
        stable += report.stable as usize;
    }
    assert!(
        stable > 20 && stable < 480,
        "degenerate sample: {stable} stable"
    );
}

#[test]
fn slight_position_asymmetry_needs_a_longer_ring() {
    let p = PlatoonParams::new(
        60,
        2.01675303894905,
        0.6084451440606933,
        8.6056113746047,
        0.4836317170466131,
        0.3284695555508249,
    )
    .unwrap();
    assert!(!check_circular_stability(&p).stable);
    assert!(spectral_scan(&p).unwrap().stable);
    assert!(!spectral_scan(&p.with_n(2000)).unwrap().stable);
}

#[test]
fn conjugate_symmetry() {
    let p = PlatoonParams::tuned(50).with_asym(0.45, 0.3);
    let n = p.n_vehicles();
    for m in 1..n {
        let phi = 2.0 * PI * m as f64 / n as f64;
        let a = ModeSpectrum::new(&p, m, phi).roots;
        let mut b = ModeSpectrum::new(&p, n - m, 2.0 * PI - phi)
            .roots
            .map(|z| z.conj());
        for z in a {
            let (k, d) = nearest(&b, z);
            assert!(d < 1e-10, "m={m}: {d:e}");
            b[k] = Complex64::new(f64::INFINITY, 0.0);
        }
    }
}

#[test]
fn unequal_position_asymmetry_destabilizes() {
    let p = PlatoonParams::tuned(400).with_asym(0.45, 0.4);
    let scan = spectral_scan(&p).unwrap();
    assert!(scan.max_real_part > 0.0);
    let n = p.n_vehicles();
    let unstable: Vec<usize> = scan
        .modes
        .iter()
        .filter(|m| m.roots.iter().any(|r| r.re > 0.0))
        .map(|m| m.m.min(n - m.m))
        .collect();
    assert!(!unstable.is_empty());
    // instability lives at small wavenumbers
    assert!(unstable.iter().min().copied().unwrap() <= 5, "{unstable:?}");
}

#[test]
fn signal_velocities_are_small_phase_limits() {
    let p = PlatoonParams::tuned(500);
    let w = signal_velocities(&p).unwrap();
    let mut errs = Vec::new();
    let phis = [0.04, 0.02, 0.01, 0.005];
    for &phi in &phis {
        let c = phase_velocity_curves(&p, &[phi]).unwrap();
        let (cp, cm) = c.signal_estimates(0);
        errs.push(((cp - w.c_plus).abs(), (cm - w.c_minus).abs()));
    }
    // linear convergence: the error per unit phase stays bounded and the
    // error itself shrinks roughly in proportion to phi
    for (k, &phi) in phis.iter().enumerate() {
        let (ep, em) = errs[k];
        assert!(
            ep / phi < 10.0 && em / phi < 10.0,
            "phi={phi}: {ep:e} {em:e}"
        );
    }
    for k in 1..phis.len() {
        assert!(errs[k].0 <= 0.6 * errs[k - 1].0 + 1e-12);
        assert!(errs[k].1 <= 0.6 * errs[k - 1].1 + 1e-12);
    }
}

#[test]
fn least_damped_branch_at_first_mode() {
    let p = PlatoonParams::tuned(500);
    let w = signal_velocities(&p).unwrap();
    let phi = 2.0 * PI / 501.0;
    let curves = phase_velocity_curves(&p, &default_phi_grid(500)).unwrap();
    assert!((curves.phi[0] - phi).abs() < 1e-15);
    let (cp, cm) = curves.signal_estimates(0);
    assert!((cp / w.c_plus - 1.0).abs() < 0.02, "{cp} vs {}", w.c_plus);
    assert!((cm / w.c_minus - 1.0).abs() < 0.02, "{cm} vs {}", w.c_minus);
}
