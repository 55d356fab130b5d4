//! Bifurcation structure of the DC response: cusp points (codimension 2,
//! the minimum `R_n` for hysteresis), saddle-node pairs bounding the
//! hysteresis window at fixed `R_n`, and Andronov-Hopf points where a
//! complex eigenvalue pair of an equilibrium crosses the imaginary axis
//! and self-oscillations are born.

use crate::equilibria::{self, scan_roots, Equilibrium};
use crate::error::{Error, Result};
use crate::model::{CircuitParams, DeviceParams};
use crate::overlap::{Deriv, OverlapSource};
use std::f64::consts::SQRT_2;

/// Default `V` scan range for cusp and fold root-finding. The overlap
/// functions decay beyond `|x_V| ≈ 5` at the default geometry, so all
/// fold structure lies well inside.
pub const V_SCAN_RANGE: (f64, f64) = (-10.0, 10.0);

/// Default scan density over [`V_SCAN_RANGE`].
pub const V_SCAN_POINTS: usize = 8192;

/// Codimension-2 point where the two fold branches meet; hysteresis
/// exists only for `R_n` above `r_n_cusp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuspPoint {
    pub v_cusp: f64,
    pub r_n_cusp: f64,
    pub v_n_cusp: f64,
}

/// Fold (saddle-node) point at fixed `R_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleNodePoint {
    pub v_fold: f64,
    pub v_n_fold: f64,
}

/// Andronov-Hopf point along a `V_n` sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfPoint {
    pub v_n_hopf: f64,
    pub v_star: f64,
    /// `|Im|` of the crossing pair at the bifurcation.
    pub omega_hopf: f64,
}

/// Result of a Hopf scan: located points plus the `V_n` values where the
/// tracked equilibrium branch jumped across a fold (the tracker restarts
/// on the surviving branch there, never silently).
#[derive(Debug, Clone, Default)]
pub struct HopfScan {
    pub points: Vec<HopfPoint>,
    pub branch_jumps: Vec<f64>,
}

/// Thermally weighted fold shape
/// `φ(V) = (1+Z_T)(F_00 - l√2·F_00'·V) + (1-Z_T)(F_11 - l√2·F_11'·V)`,
/// so that `df/dV = -1 - R_n/2·φ(V)`.
fn fold_shape(v: f64, dev: &DeviceParams, fs: &impl OverlapSource) -> f64 {
    let x_v = dev.geom.x_v(v);
    let [f00, _, f11] = fs.row(x_v, Deriv::Value);
    let [d00, _, d11] = fs.row(x_v, Deriv::First);
    let ls2 = dev.geom.l * SQRT_2;
    (1.0 + dev.z_t) * (f00 - ls2 * d00 * v) + (1.0 - dev.z_t) * (f11 - ls2 * d11 * v)
}

/// Cusp condition, proportional to `dφ/dV` (and hence to `d²f/dV²`):
/// `(1+Z_T)(l·F_00''·V - √2·F_00') + (1-Z_T)(l·F_11''·V - √2·F_11')`.
pub fn cusp_condition(v: f64, dev: &DeviceParams, fs: &impl OverlapSource) -> f64 {
    let x_v = dev.geom.x_v(v);
    let [d00, _, d11] = fs.row(x_v, Deriv::First);
    let [s00, _, s11] = fs.row(x_v, Deriv::Second);
    let l = dev.geom.l;
    (1.0 + dev.z_t) * (l * s00 * v - SQRT_2 * d00)
        + (1.0 - dev.z_t) * (l * s11 * v - SQRT_2 * d11)
}

/// Second `V`-derivative of the balance function, `-R_n·l·cusp_condition`.
pub fn d2f_dv2(v: f64, dev: &DeviceParams, r_n: f64, fs: &impl OverlapSource) -> f64 {
    -r_n * dev.geom.l * cusp_condition(v, dev, fs)
}

/// Bias voltage at which `V` is an equilibrium:
/// `V_n = {1 + R_n/2·[(1+Z_T)F_00 + (1-Z_T)F_11]}·V`.
fn bias_for(v: f64, dev: &DeviceParams, r_n: f64, fs: &impl OverlapSource) -> f64 {
    let [f00, _, f11] = fs.row(dev.geom.x_v(v), Deriv::Value);
    (1.0 + 0.5 * r_n * ((1.0 + dev.z_t) * f00 + (1.0 - dev.z_t) * f11)) * v
}

/// Locate every cusp point within [`V_SCAN_RANGE`].
///
/// Roots of the cusp condition qualify only where the fold shape has a
/// local minimum with `φ < 0` (a local maximum of `df/dV` that can reach
/// zero with a positive `R_n`); `R_n` and `V_n` then follow by
/// substitution. An empty list is legitimate for geometries without a
/// fold.
pub fn find_cusp(dev: &DeviceParams, fs: &impl OverlapSource) -> Vec<CuspPoint> {
    find_cusp_in(dev, fs, V_SCAN_RANGE, V_SCAN_POINTS)
}

pub fn find_cusp_in(
    dev: &DeviceParams,
    fs: &impl OverlapSource,
    range: (f64, f64),
    n_scan: usize,
) -> Vec<CuspPoint> {
    let cond = |v: f64| cusp_condition(v, dev, fs);
    let step = (range.1 - range.0) / n_scan as f64;
    let mut out = Vec::new();
    for v_c in scan_roots(&cond, range.0, range.1, n_scan) {
        let phi = fold_shape(v_c, dev, fs);
        // Local-minimum test of φ stands in for the third-derivative sign.
        let is_min = phi < fold_shape(v_c - step, dev, fs) && phi < fold_shape(v_c + step, dev, fs);
        if !is_min || phi >= 0.0 {
            continue;
        }
        let r_n_cusp = -2.0 / phi;
        out.push(CuspPoint {
            v_cusp: v_c,
            r_n_cusp,
            v_n_cusp: bias_for(v_c, dev, r_n_cusp, fs),
        });
    }
    out.sort_by(|a, b| a.v_cusp.total_cmp(&b.v_cusp));
    out
}

/// Saddle-node (fold) points for a given `R_n`: roots of `df/dV = 0`
/// within [`V_SCAN_RANGE`], each paired with its bias via substitution.
/// Tangent (double) roots at the cusp itself are reported twice. Empty
/// below the cusp.
pub fn find_saddle_nodes(
    dev: &DeviceParams,
    r_n: f64,
    fs: &impl OverlapSource,
) -> Vec<SaddleNodePoint> {
    find_saddle_nodes_in(dev, r_n, fs, V_SCAN_RANGE, V_SCAN_POINTS)
}

pub fn find_saddle_nodes_in(
    dev: &DeviceParams,
    r_n: f64,
    fs: &impl OverlapSource,
    range: (f64, f64),
    n_scan: usize,
) -> Vec<SaddleNodePoint> {
    if r_n <= 0.0 {
        return Vec::new();
    }
    let dfdv = |v: f64| -1.0 - 0.5 * r_n * fold_shape(v, dev, fs);
    let mut folds = scan_roots(&dfdv, range.0, range.1, n_scan);
    // Exactly at the cusp the two folds merge into a tangency that a
    // sign-change scan cannot see: admit extrema of df/dV that touch zero.
    let cond = |v: f64| cusp_condition(v, dev, fs);
    for v_e in scan_roots(&cond, range.0, range.1, n_scan) {
        if dfdv(v_e).abs() <= 1e-7 && !folds.iter().any(|f| (f - v_e).abs() <= 1e-6) {
            folds.push(v_e);
            folds.push(v_e);
        }
    }
    folds.sort_by(f64::total_cmp);
    folds
        .into_iter()
        .map(|v_fold| SaddleNodePoint {
            v_fold,
            v_n_fold: bias_for(v_fold, dev, r_n, fs),
        })
        .collect()
}

/// Real part of the oscillatory eigenvalue pair at an equilibrium, or
/// `None` when the spectrum is entirely real there.
fn pair_real_part(eq: &Equilibrium) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for ev in &eq.eigenvalues {
        if ev.im > 1e-12 {
            match best {
                Some((_, im)) if ev.im <= im => {}
                _ => best = Some((ev.re, ev.im)),
            }
        }
    }
    best
}

/// Track the equilibrium branch from the low-|V_n| end of `v_n_range` on
/// an `n_grid`-point grid, bracket real-part sign changes of the complex
/// pair, and refine each crossing by bisection in `V_n`.
///
/// Needs `n_grid >= 16`. Branch jumps across folds are recorded in the
/// result; a Hopf point is reported only when the remaining eigenvalues
/// are strictly stable at the crossing.
pub fn find_hopf(
    dev: &DeviceParams,
    r_n: f64,
    fs: &impl OverlapSource,
    v_n_range: (f64, f64),
    n_grid: usize,
) -> Result<HopfScan> {
    if n_grid < 16 {
        return Err(Error::Config(format!(
            "Hopf scan needs at least 16 grid points, got {n_grid}"
        )));
    }
    if !(v_n_range.0.is_finite() && v_n_range.1.is_finite() && v_n_range.0 < v_n_range.1) {
        return Err(Error::Config(format!(
            "bad V_n range [{}, {}]",
            v_n_range.0, v_n_range.1
        )));
    }

    let mut scan = HopfScan::default();
    let h = (v_n_range.1 - v_n_range.0) / (n_grid - 1) as f64;

    // Walk the branch by nearest-root continuation.
    let branch_eq = |v_n: f64, prev: Option<f64>| -> Result<Equilibrium> {
        let circ = CircuitParams { r_n, v_n };
        let eqs = equilibria::find_equilibria(dev, &circ, fs)?;
        let pick = match prev {
            None => eqs.into_iter().min_by(|a, b| a.v_star.total_cmp(&b.v_star)),
            Some(p) => eqs
                .into_iter()
                .min_by(|a, b| (a.v_star - p).abs().total_cmp(&(b.v_star - p).abs())),
        };
        pick.ok_or_else(|| Error::Internal("equilibrium branch lost".into()))
    };

    let mut prev_vn = v_n_range.0;
    let mut prev_eq = branch_eq(prev_vn, None)?;
    let mut prev_re = pair_real_part(&prev_eq);

    for k in 1..n_grid {
        let v_n = v_n_range.0 + h * k as f64;
        let eq = branch_eq(v_n, Some(prev_eq.v_star))?;
        if (eq.v_star - prev_eq.v_star).abs() > 0.2 * (1.0 + prev_eq.v_star.abs()) {
            scan.branch_jumps.push(v_n);
        }
        let re = pair_real_part(&eq);
        if let (Some((re_a, _)), Some((re_b, _))) = (prev_re, re) {
            if re_a != 0.0 && re_a.signum() != re_b.signum() {
                if let Some(point) = refine_hopf(prev_vn, v_n, prev_eq.v_star, &branch_eq)? {
                    scan.points.push(point);
                }
            }
        }
        prev_vn = v_n;
        prev_eq = eq;
        prev_re = re;
    }
    Ok(scan)
}

fn refine_hopf<F>(
    mut lo: f64,
    mut hi: f64,
    v_star_guess: f64,
    branch_eq: &F,
) -> Result<Option<HopfPoint>>
where
    F: Fn(f64, Option<f64>) -> Result<Equilibrium>,
{
    let mut guess = v_star_guess;
    let eq_lo = branch_eq(lo, Some(guess))?;
    let mut re_lo = match pair_real_part(&eq_lo) {
        Some((re, _)) => re,
        None => return Ok(None),
    };
    let mut best = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let eq = branch_eq(mid, Some(guess))?;
        guess = eq.v_star;
        let (re, im) = match pair_real_part(&eq) {
            Some(p) => p,
            None => return Ok(None),
        };
        // The pair crosses zero transversally; the other eigenvalues must
        // stay in the left half plane for a genuine Hopf point.
        let others_stable = eq
            .eigenvalues
            .iter()
            .filter(|ev| ev.im.abs() <= 1e-12)
            .all(|ev| ev.re < 0.0);
        best = Some((mid, eq.v_star, im, re, others_stable));
        if re.abs() < 1e-7 || (hi - lo) < 1e-13 {
            break;
        }
        if re.signum() == re_lo.signum() {
            lo = mid;
            re_lo = re;
        } else {
            hi = mid;
        }
    }
    Ok(best.and_then(|(v_n, v_star, im, re, ok)| {
        (ok && re.abs() < 1e-7).then_some(HopfPoint {
            v_n_hopf: v_n,
            v_star,
            omega_hopf: im.abs(),
        })
    }))
}

/// Eigenfrequency `Ω̃ = √(Ω² + Γ²)` of the reduced oscillator picture;
/// a diagnostic upper-bound check for small-amplitude cycle frequencies
/// (`Ω̃ > Ω`), not used in any computation.
pub fn reduced_frequency(dev: &DeviceParams) -> f64 {
    (dev.omega * dev.omega + dev.gamma * dev.gamma).sqrt()
}

/// CSV rows `type,V_n,R_n,V_star,omega` for located bifurcation points
/// (`omega` blank for cusp and fold rows).
pub fn bifurcation_csv(
    cusps: &[CuspPoint],
    folds: &[(f64, SaddleNodePoint)],
    hopfs: &[(f64, HopfPoint)],
) -> String {
    let mut out = String::from("type,V_n,R_n,V_star,omega\n");
    for c in cusps {
        out.push_str(&format!(
            "cusp,{},{},{},\n",
            c.v_n_cusp, c.r_n_cusp, c.v_cusp
        ));
    }
    for (r_n, f) in folds {
        out.push_str(&format!(
            "saddle-node,{},{},{},\n",
            f.v_n_fold, r_n, f.v_fold
        ));
    }
    for (r_n, h) in hopfs {
        out.push_str(&format!(
            "hopf,{},{},{},{}\n",
            h.v_n_hopf, r_n, h.v_star, h.omega_hopf
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlap::{Geometry, OverlapEvaluator, OverlapTable};
    use std::sync::OnceLock;

    /// Table-backed source for the grid-heavy Hopf tests.
    fn cached() -> &'static OverlapTable {
        static TABLE: OnceLock<OverlapTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            OverlapTable::covering(fs(0.8), -15.0, 15.0).unwrap()
        })
    }

    fn dev(gamma: f64, z_t: f64, x0: f64) -> DeviceParams {
        DeviceParams {
            omega: 7.0,
            gamma,
            alpha: 1.0,
            z_t,
            geom: Geometry::new(0.5, x0, 0.13).unwrap(),
        }
    }

    fn fs(x0: f64) -> OverlapEvaluator {
        OverlapEvaluator::new(Geometry::new(0.5, x0, 0.13).unwrap()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn cusp_at_the_default_geometry() {
        let d = dev(1.0, 1.0, 0.8);
        let e = fs(0.8);
        let cusps = find_cusp(&d, &e);
        let hit = cusps
            .iter()
            .find(|c| rel(c.v_cusp, 1.8866) < 1e-3)
            .unwrap_or_else(|| panic!("no cusp near 1.8866 in {cusps:?}"));
        assert!(rel(hit.r_n_cusp, 1.7779) < 1e-3, "{hit:?}");
        assert!(rel(hit.v_n_cusp, 2.4454) < 1e-3, "{hit:?}");
    }

    #[test]
    fn cusp_defining_conditions_hold() {
        let d = dev(1.0, 1.0, 0.8);
        let e = fs(0.8);
        let c = find_cusp(&d, &e)
            .into_iter()
            .find(|c| c.v_cusp > 0.0)
            .unwrap();
        let circ = CircuitParams {
            r_n: c.r_n_cusp,
            v_n: c.v_n_cusp,
        };
        // f = 0, df/dV = 0, d²f/dV² = 0 and d³f/dV³ < 0 after substitution.
        assert!(equilibria::f_of_v(c.v_cusp, &d, &circ, &e).abs() < 1e-8);
        assert!(equilibria::df_dv(c.v_cusp, &d, &circ, &e).abs() < 1e-8);
        assert!(d2f_dv2(c.v_cusp, &d, c.r_n_cusp, &e).abs() < 1e-8);
        let h = 1e-4;
        let d3f = (d2f_dv2(c.v_cusp + h, &d, c.r_n_cusp, &e)
            - d2f_dv2(c.v_cusp - h, &d, c.r_n_cusp, &e))
            / (2.0 * h);
        assert!(d3f < 0.0, "d3f = {d3f}");
    }

    #[test]
    fn centered_geometry_gives_mirrored_cusp_branches() {
        let d = dev(1.0, 1.0, 0.0);
        let e = fs(0.0);
        let cusps = find_cusp(&d, &e);
        assert!(cusps.len() >= 2, "{cusps:?}");
        for c in &cusps {
            let mirror = cusps
                .iter()
                .find(|m| (m.v_cusp + c.v_cusp).abs() < 1e-6)
                .unwrap_or_else(|| panic!("no mirror for {c:?} in {cusps:?}"));
            assert!((mirror.v_n_cusp + c.v_n_cusp).abs() < 1e-6);
            assert!((mirror.r_n_cusp - c.r_n_cusp).abs() < 1e-6);
        }
    }

    #[test]
    fn saddle_nodes_at_rn_8_match_the_fold_window() {
        let d = dev(1.0, 1.0, 0.8);
        let e = fs(0.8);
        let folds = find_saddle_nodes(&d, 8.0, &e);
        assert_eq!(folds.len(), 2, "{folds:?}");
        assert!(rel(folds[0].v_fold, 1.4336) < 1e-3, "{folds:?}");
        assert!(rel(folds[0].v_n_fold, 5.4501) < 1e-3, "{folds:?}");
        assert!(rel(folds[1].v_fold, 2.6689) < 1e-3, "{folds:?}");
        assert!(rel(folds[1].v_n_fold, 2.9232) < 1e-3, "{folds:?}");
    }

    #[test]
    fn no_folds_below_the_cusp() {
        let d = dev(1.0, 1.0, 0.8);
        let e = fs(0.8);
        assert!(find_saddle_nodes(&d, 1.0, &e).is_empty());
        assert!(find_saddle_nodes(&d, 0.0, &e).is_empty());
    }

    #[test]
    fn folds_coincide_at_the_cusp_resistance() {
        let d = dev(1.0, 1.0, 0.8);
        let e = fs(0.8);
        let c = find_cusp(&d, &e)
            .into_iter()
            .find(|c| c.v_cusp > 0.0)
            .unwrap();
        let folds = find_saddle_nodes(&d, c.r_n_cusp, &e);
        let near: Vec<_> = folds
            .iter()
            .filter(|f| (f.v_fold - c.v_cusp).abs() < 1e-4)
            .collect();
        assert!(near.len() >= 2, "folds at R_n_cusp: {folds:?}");
    }

    #[test]
    fn fold_bias_feeds_back_to_a_near_tangent_equilibrium_pair() {
        let d = dev(1.0, 1.0, 0.8);
        let e = fs(0.8);
        for f in find_saddle_nodes(&d, 8.0, &e) {
            let circ = CircuitParams {
                r_n: 8.0,
                v_n: f.v_n_fold,
            };
            let eqs = equilibria::find_equilibria(&d, &circ, &e).unwrap();
            let near: Vec<_> = eqs
                .iter()
                .filter(|q| (q.v_star - f.v_fold).abs() < 1e-3)
                .collect();
            let pair = near.len() >= 2 || near.iter().any(|q| q.near_saddle_node);
            assert!(pair, "fold {f:?} gave equilibria {eqs:?}");
        }
    }

    #[test]
    fn hopf_window_at_rn_5() {
        let d = dev(0.1, 1.0, 0.8);
        let scan = find_hopf(&d, 5.0, cached(), (0.05, 4.0), 64).unwrap();
        assert_eq!(scan.points.len(), 2, "{:?}", scan.points);
        let onset = &scan.points[0];
        let offset = &scan.points[1];
        assert!((onset.v_n_hopf - 0.23).abs() < 0.01, "{onset:?}");
        assert!((offset.v_n_hopf - 3.31).abs() < 0.01, "{offset:?}");
        assert!(rel(onset.omega_hopf, 7.0224) < 5e-3, "{onset:?}");
        // Reduced-model diagnostic: small cycles run slightly above Ω̃ > Ω.
        let omega_tilde = reduced_frequency(&d);
        println!(
            "hopf onset omega = {:.4}, reduced frequency = {:.4}",
            onset.omega_hopf, omega_tilde
        );
        assert!(omega_tilde > d.omega);
    }

    #[test]
    fn no_hopf_at_infinite_temperature() {
        let d = dev(0.1, 0.0, 0.8);
        let scan = find_hopf(&d, 5.0, cached(), (0.05, 4.0), 64).unwrap();
        assert!(scan.points.is_empty(), "{:?}", scan.points);
    }

    #[test]
    fn fold_crossings_are_reported_as_branch_jumps() {
        // At R_n = 8 the low equilibrium branch ends at the fold near
        // V_n = 5.45; the tracker must restart on the surviving branch
        // and say so.
        let d = dev(1.0, 1.0, 0.8);
        let scan = find_hopf(&d, 8.0, cached(), (0.05, 7.0), 32).unwrap();
        assert!(
            scan.branch_jumps.iter().any(|v| (5.2..5.8).contains(v)),
            "jumps: {:?}",
            scan.branch_jumps
        );
    }

    #[test]
    fn fold_and_hopf_detectors_run_independently() {
        // Both structures exist at R_n = 5 with weak dephasing; locating
        // one must not disturb the other.
        let d = dev(0.1, 1.0, 0.8);
        let e = cached();
        let folds = find_saddle_nodes(&d, 5.0, e);
        let hopf = find_hopf(&d, 5.0, e, (0.05, 4.0), 64).unwrap();
        assert_eq!(folds.len(), 2, "{folds:?}");
        assert_eq!(hopf.points.len(), 2, "{:?}", hopf.points);
        let folds_again = find_saddle_nodes(&d, 5.0, e);
        assert_eq!(folds.len(), folds_again.len());
        for (a, b) in folds.iter().zip(&folds_again) {
            assert_eq!(a.v_fold, b.v_fold);
        }
    }

    #[test]
    fn reduced_frequency_closed_form() {
        let mut d = dev(0.0, 1.0, 0.8);
        assert_eq!(reduced_frequency(&d), 7.0);
        d.gamma = 0.1;
        assert!((reduced_frequency(&d) - 49.01f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hopf_scan_rejects_bad_grids() {
        let d = dev(0.1, 1.0, 0.8);
        let e = fs(0.8);
        assert!(matches!(
            find_hopf(&d, 5.0, &e, (0.05, 4.0), 8),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            find_hopf(&d, 5.0, &e, (4.0, 0.05), 64),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let cusps = vec![CuspPoint {
            v_cusp: 1.0,
            r_n_cusp: 2.0,
            v_n_cusp: 3.0,
        }];
        let folds = vec![(
            8.0,
            SaddleNodePoint {
                v_fold: 1.5,
                v_n_fold: 5.0,
            },
        )];
        let hopfs = vec![(
            5.0,
            HopfPoint {
                v_n_hopf: 0.23,
                v_star: 0.2,
                omega_hopf: 7.02,
            },
        )];
        let csv = bifurcation_csv(&cusps, &folds, &hopfs);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "type,V_n,R_n,V_star,omega");
        assert_eq!(lines[1], "cusp,3,2,1,");
        assert_eq!(lines[2], "saddle-node,5,8,1.5,");
        assert_eq!(lines[3], "hopf,0.23,5,0.2,7.02");
    }
}
