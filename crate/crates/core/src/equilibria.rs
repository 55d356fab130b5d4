//! DC equilibria of the neuron circuit.
//!
//! For nonzero relaxation the system is at rest only at
//! `X = 0, Y = 0, Z = Z_T, V = V*` with `f(V*) = 0`, where `f` is the
//! static voltage balance. Depending on `R_n` the balance has one or
//! three roots; stability follows from the eigenvalues of the 4×4
//! Jacobian evaluated on the static slice.

use nalgebra::Matrix4;
use num_complex::Complex64;
use std::f64::consts::SQRT_2;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{CircuitParams, DeviceParams};
use crate::overlap::{Deriv, OverlapSource};

/// Sign-change scan density over the root bracket.
const N_SCAN: usize = 4096;

/// Roots closer than this in `V` are merged and flagged as a
/// near-saddle-node pair.
const MERGE_TOL: f64 = 1e-6;

/// Eigenvalue real parts within this margin of zero are classified as
/// marginal rather than stable/unstable.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Stability class of an equilibrium from the eigenvalue sign pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    /// All real parts negative.
    StableNodeFocus,
    /// A real eigenvalue is positive while the rest are negative.
    Saddle,
    /// A complex pair with positive real part.
    UnstableFocus,
    /// Some real part sits within the stability margin of zero.
    CenterMarginal,
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stability::StableNodeFocus => "stable-node/focus",
            Stability::Saddle => "saddle",
            Stability::UnstableFocus => "unstable-focus",
            Stability::CenterMarginal => "center-marginal",
        };
        f.write_str(s)
    }
}

/// One DC operating point with its linearization.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub v_star: f64,
    /// Eigenvalues of the Jacobian, sorted by (re, im).
    pub eigenvalues: [Complex64; 4],
    pub stability: Stability,
    /// `|f(V*)|` after refinement.
    pub residual: f64,
    /// True when this entry stands for a merged near-tangent root pair.
    pub near_saddle_node: bool,
}

/// Jacobian of the system on the static slice, rows and columns ordered
/// `(V, Z, X, Y)`.
pub type Jacobian = [[f64; 4]; 4];

/// Static voltage balance
/// `f(V) = V_n - {1 + R_n/2·[(1+Z_T)F_00 + (1-Z_T)F_11]}·V`
/// with the overlaps at `x_V = x0 - l√2·V`; its roots are the DC
/// equilibria.
pub fn f_of_v(v: f64, dev: &DeviceParams, circ: &CircuitParams, fs: &impl OverlapSource) -> f64 {
    let [f00, _, f11] = fs.row(dev.geom.x_v(v), Deriv::Value);
    let g = 0.5 * ((1.0 + dev.z_t) * f00 + (1.0 - dev.z_t) * f11);
    circ.v_n - (1.0 + circ.r_n * g) * v
}

/// Analytic `df/dV`, differentiating the overlaps under the integral:
/// `-1 - R_n/2·[(1+Z_T)(F_00 - l√2·F_00'·V) + (1-Z_T)(F_11 - l√2·F_11'·V)]`.
pub fn df_dv(v: f64, dev: &DeviceParams, circ: &CircuitParams, fs: &impl OverlapSource) -> f64 {
    let x_v = dev.geom.x_v(v);
    let [f00, _, f11] = fs.row(x_v, Deriv::Value);
    let [d00, _, d11] = fs.row(x_v, Deriv::First);
    let ls2 = dev.geom.l * SQRT_2;
    -1.0 - 0.5
        * circ.r_n
        * ((1.0 + dev.z_t) * (f00 - ls2 * d00 * v) + (1.0 - dev.z_t) * (f11 - ls2 * d11 * v))
}

/// Jacobian at an equilibrium `V*` (the caller guarantees `f(V*) ≈ 0`).
///
/// Variable order `(V, Z, X, Y)`; the `Z` row is exactly `(0, -αΓ, 0, 0)`
/// and the `Y` row exactly `(0, 0, -Ω, -Γ)`.
pub fn jacobian_at(
    v_star: f64,
    dev: &DeviceParams,
    circ: &CircuitParams,
    fs: &impl OverlapSource,
) -> Jacobian {
    let x_v = dev.geom.x_v(v_star);
    let [f00, f01, f11] = fs.row(x_v, Deriv::Value);
    let dvdot_dv = df_dv(v_star, dev, circ, fs);
    let r_n = circ.r_n;
    let z_t = dev.z_t;
    [
        [
            dvdot_dv,
            0.5 * r_n * (f11 - f00) * v_star,
            -r_n * f01 * v_star,
            0.0,
        ],
        [0.0, -dev.alpha * dev.gamma, 0.0, 0.0],
        [
            2.0 * z_t * dvdot_dv,
            z_t * r_n * (f11 - f00) * v_star,
            -2.0 * z_t * r_n * f01 * v_star - dev.gamma,
            dev.omega,
        ],
        [0.0, 0.0, -dev.omega, -dev.gamma],
    ]
}

/// Eigenvalues of a real 4×4 matrix (real Schur reduction) plus the
/// stability class read off their sign pattern.
pub fn eigenvalues_and_classify(m: &Jacobian) -> Result<([Complex64; 4], Stability)> {
    for row in m {
        for &e in row {
            if !e.is_finite() {
                return Err(Error::Domain(format!("non-finite Jacobian entry {e}")));
            }
        }
    }
    let mat = Matrix4::from_fn(|r, c| m[r][c]);
    let schur = nalgebra::linalg::Schur::try_new(mat, f64::EPSILON, 100_000).ok_or_else(|| {
        Error::Numerical {
            what: "Schur reduction of the Jacobian did not converge".into(),
            residual: f64::NAN,
        }
    })?;
    let ev = schur.complex_eigenvalues();
    let mut eig = [Complex64::new(0.0, 0.0); 4];
    for (dst, src) in eig.iter_mut().zip(ev.iter()) {
        *dst = Complex64::new(src.re, src.im);
    }
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok((eig, classify(&eig)))
}

fn classify(eig: &[Complex64; 4]) -> Stability {
    if eig.iter().any(|e| e.re.abs() <= STABILITY_MARGIN) {
        return Stability::CenterMarginal;
    }
    let unstable: Vec<&Complex64> = eig.iter().filter(|e| e.re > STABILITY_MARGIN).collect();
    if unstable.is_empty() {
        Stability::StableNodeFocus
    } else if unstable.iter().any(|e| e.im.abs() > STABILITY_MARGIN) {
        Stability::UnstableFocus
    } else {
        Stability::Saddle
    }
}

/// Bisect a sign change of `f` down to floating-point resolution.
fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let mut sign_lo = f_lo.is_sign_positive();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.is_sign_positive() == sign_lo {
            lo = mid;
            sign_lo = fm.is_sign_positive();
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Scan `[a, b]` for sign changes of `f` and refine each bracket.
pub(crate) fn scan_roots<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let h = (b - a) / n as f64;
    let mut x_prev = a;
    let mut f_prev = f(a);
    for k in 1..=n {
        let x = a + h * k as f64;
        let fx = f(x);
        if f_prev == 0.0 {
            roots.push(x_prev);
        } else if fx != 0.0 && fx.is_sign_positive() != f_prev.is_sign_positive() {
            roots.push(bisect(f, x_prev, x, f_prev));
        }
        x_prev = x;
        f_prev = fx;
    }
    if f_prev == 0.0 {
        roots.push(x_prev);
    }
    roots
}

/// Newton polish with a small step budget; keeps the iterate finite.
fn polish<F: Fn(f64) -> f64, D: Fn(f64) -> f64>(f: &F, df: &D, mut v: f64) -> f64 {
    for _ in 0..20 {
        let fv = f(v);
        if fv == 0.0 {
            return v;
        }
        let dv = df(v);
        if dv == 0.0 || !dv.is_finite() {
            break;
        }
        let next = v - fv / dv;
        if !next.is_finite() {
            break;
        }
        if (next - v).abs() < 1e-15 * v.abs().max(1.0) {
            return next;
        }
        v = next;
    }
    v
}

/// All DC equilibria for the given parameters: dense sign-change scan of
/// `f` over the bracket `(0, V_n)` (or `(V_n, 0)` for negative bias),
/// bisection plus Newton polish with the analytic derivative, tangency
/// detection at the extrema of `f`, and dedup of near-coincident roots.
pub fn find_equilibria(
    dev: &DeviceParams,
    circ: &CircuitParams,
    fs: &impl OverlapSource,
) -> Result<Vec<Equilibrium>> {
    crate::model::require_valid(dev, circ)?;
    let f = |v: f64| f_of_v(v, dev, circ, fs);
    let df = |v: f64| df_dv(v, dev, circ, fs);

    let mut roots: Vec<(f64, bool)> = Vec::new();
    if circ.v_n == 0.0 {
        // f(V) = -(1 + R_n G)V has the single root V = 0.
        roots.push((0.0, false));
    } else {
        let (a, b) = if circ.v_n > 0.0 {
            (0.0, circ.v_n)
        } else {
            (circ.v_n, 0.0)
        };
        for r in scan_roots(&f, a, b, N_SCAN) {
            roots.push((polish(&f, &df, r), false));
        }
        // A fold tangency touches zero without a sign change: check the
        // extrema of f (roots of the analytic derivative).
        for e in scan_roots(&df, a, b, N_SCAN) {
            if f(e).abs() <= 1e-8 && !roots.iter().any(|(r, _)| (r - e).abs() <= MERGE_TOL) {
                roots.push((e, true));
            }
        }
        if roots.is_empty() {
            return Err(Error::Internal(format!(
                "no equilibrium found for V_n = {} although f brackets a root",
                circ.v_n
            )));
        }
    }

    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, bool)> = Vec::new();
    for (v, tangent) in roots {
        match merged.last_mut() {
            Some((prev, near)) if (v - *prev).abs() <= MERGE_TOL => {
                *prev = 0.5 * (*prev + v);
                *near = true;
            }
            _ => merged.push((v, tangent)),
        }
    }

    let mut out = Vec::with_capacity(merged.len());
    for (v_star, near_saddle_node) in merged {
        let residual = f(v_star).abs();
        if residual > 1e-10 {
            return Err(Error::Internal(format!(
                "equilibrium refinement stalled at |f({v_star})| = {residual:.3e}"
            )));
        }
        let jac = jacobian_at(v_star, dev, circ, fs);
        let (eigenvalues, stability) = eigenvalues_and_classify(&jac)?;
        out.push(Equilibrium {
            v_star,
            eigenvalues,
            stability,
            residual,
            near_saddle_node,
        });
    }
    Ok(out)
}

/// CSV rows for a set of equilibria:
/// `V_n,R_n,V_star,re1..re4,im1..im4,stability`.
pub fn equilibria_csv(circ: &CircuitParams, eqs: &[Equilibrium]) -> String {
    let mut out = String::from("V_n,R_n,V_star,re1,re2,re3,re4,im1,im2,im3,im4,stability\n");
    for eq in eqs {
        out.push_str(&format!("{},{},{}", circ.v_n, circ.r_n, eq.v_star));
        for e in &eq.eigenvalues {
            out.push_str(&format!(",{}", e.re));
        }
        for e in &eq.eigenvalues {
            out.push_str(&format!(",{}", e.im));
        }
        out.push_str(&format!(",{}\n", eq.stability));
    }
    out
}
