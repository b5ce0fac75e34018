//! Roots of the monic complex cubic `x³ + c2 x² + c1 x + c0`.

use num_complex::Complex64;

fn eval(c2: Complex64, c1: Complex64, c0: Complex64, x: Complex64) -> (Complex64, Complex64) {
    let p = ((x + c2) * x + c1) * x + c0;
    let dp = (3.0 * x + 2.0 * c2) * x + c1;
    (p, dp)
}

/// Newton polish that only accepts steps which reduce the residual.
fn polish(c2: Complex64, c1: Complex64, c0: Complex64, mut x: Complex64) -> Complex64 {
    for _ in 0..4 {
        let (p, dp) = eval(c2, c1, c0, x);
        if p.norm() == 0.0 || dp.norm() == 0.0 {
            break;
        }
        let next = x - p / dp;
        if !next.is_finite() || eval(c2, c1, c0, next).0.norm() >= p.norm() {
            break;
        }
        x = next;
    }
    x
}

/// Closed-form resolvent with Newton polish. Roots are sorted by real part,
/// then imaginary part.
pub fn solve_monic_cubic(c2: Complex64, c1: Complex64, c0: Complex64) -> [Complex64; 3] {
    // x = y - c2/3 gives y³ + p y + q = 0
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;

    let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    let s1 = -q / 2.0 + disc;
    let s2 = -q / 2.0 - disc;
    let s = if s1.norm() >= s2.norm() { s1 } else { s2 };

    let omega = Complex64::new(-0.5, 3f64.sqrt() / 2.0);
    let mut roots = if s.norm() == 0.0 {
        // p = q = 0: triple root
        [-shift; 3]
    } else {
        let u = s.cbrt();
        let v = -p / (3.0 * u);
        let w2 = omega * omega;
        [
            u + v - shift,
            omega * u + w2 * v - shift,
            w2 * u + omega * v - shift,
        ]
    };
    for r in roots.iter_mut() {
        *r = polish(c2, c1, c0, *r);
    }
    sort_roots(&mut roots);
    roots
}

pub(crate) fn sort_roots(roots: &mut [Complex64]) {
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// `|x³ + c2 x² + c1 x + c0|`.
pub fn residual(c2: Complex64, c1: Complex64, c0: Complex64, x: Complex64) -> f64 {
    eval(c2, c1, c0, x).0.norm()
}
