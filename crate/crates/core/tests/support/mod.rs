//! Independent oracles shared by the integration tests.
//!
//! Everything here deliberately avoids the library's quadrature and
//! linear-algebra paths: overlap values come from a high-resolution
//! composite trapezoid rule written directly from the defining integral,
//! and Jacobian entries from central differences of the model right-hand
//! side.

use qmem_core::overlap::Geometry;

/// Hermite polynomial pair factor with normalization:
/// `H_i(u) H_j(u) / sqrt(2^{i+j} i! j!)` for `i, j` in `{0, 1}`.
fn hermite_pair(i: u8, j: u8, u: f64) -> f64 {
    match (i, j) {
        (0, 0) => 1.0,
        (0, 1) | (1, 0) => std::f64::consts::SQRT_2 * u,
        (1, 1) => 2.0 * u * u,
        _ => panic!("levels beyond 1 are outside the model"),
    }
}

/// Composite-trapezoid evaluation of the overlap integral
/// `F_ij(x_V)` (or its first/second `x_V`-derivative) on `x ∈ [-10l, 10l]`.
///
/// With `n = 10^6` nodes the integrand's smooth exponential decay makes
/// the rule accurate far beyond the 1e-9 comparisons it backs.
pub fn trapezoid_overlap(i: u8, j: u8, x_v: f64, geom: &Geometry, deriv: u8, n: usize) -> f64 {
    let Geometry { l, lambda, .. } = *geom;
    let a = -10.0 * l;
    let b = 10.0 * l;
    let h = (b - a) / n as f64;
    let integrand = |x: f64| -> f64 {
        let u = x / l;
        let w = (x + x_v) / lambda;
        let s = 1.0 / w.cosh();
        let kern = match deriv {
            0 => s,
            1 => -s * w.tanh() / lambda,
            2 => s * (1.0 - 2.0 * s * s) / (lambda * lambda),
            _ => panic!("derivative order beyond 2"),
        };
        (-u * u).exp() * hermite_pair(i, j, u) * kern
    };
    let mut sum = 0.5 * (integrand(a) + integrand(b));
    for k in 1..n {
        sum += integrand(a + h * k as f64);
    }
    sum * h / (l * std::f64::consts::PI.sqrt())
}
