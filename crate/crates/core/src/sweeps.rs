//! Orchestrated parameter studies: hysteresis sweeps with state
//! continuation, oscillation-amplitude curves with square-root onset
//! fits, and 2-D parameter scans of the oscillation span.

use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;

use crate::dynamics::{integrate, steady_span, IntegrateOpts, SteadySpan, SPAN_THRESHOLD};
use crate::error::{Error, Result};
use crate::model::{self, CircuitParams, DeviceParams, State};
use crate::overlap::OverlapSource;

/// Scannable model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanParam {
    Vn,
    Rn,
    Gamma,
    Zt,
    Alpha,
}

impl ScanParam {
    pub fn apply(&self, dev: &mut DeviceParams, circ: &mut CircuitParams, value: f64) {
        match self {
            ScanParam::Vn => circ.v_n = value,
            ScanParam::Rn => circ.r_n = value,
            ScanParam::Gamma => dev.gamma = value,
            ScanParam::Zt => dev.z_t = value,
            ScanParam::Alpha => dev.alpha = value,
        }
    }
}

impl fmt::Display for ScanParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanParam::Vn => "Vn",
            ScanParam::Rn => "Rn",
            ScanParam::Gamma => "Gamma",
            ScanParam::Zt => "ZT",
            ScanParam::Alpha => "alpha",
        })
    }
}

impl FromStr for ScanParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Vn" | "V_n" => Ok(ScanParam::Vn),
            "Rn" | "R_n" => Ok(ScanParam::Rn),
            "Gamma" => Ok(ScanParam::Gamma),
            "ZT" | "Z_T" | "Zt" => Ok(ScanParam::Zt),
            "alpha" | "Alpha" => Ok(ScanParam::Alpha),
            other => Err(Error::Config(format!("unknown scan parameter {other:?}"))),
        }
    }
}

/// Settings shared by the sweep and scan drivers.
#[derive(Debug, Clone, Copy)]
pub struct ScanOpts {
    pub base: IntegrateOpts,
    /// Transient fraction discarded for the reported span.
    pub settle_fraction: f64,
    /// Integration horizon doubles until the span converges or this cap
    /// is hit (growth rates collapse near onset boundaries, so a fixed
    /// horizon would bias spans there).
    pub max_t_end: f64,
}

impl Default for ScanOpts {
    fn default() -> Self {
        ScanOpts {
            base: IntegrateOpts {
                t_end: 600.0,
                rel_tol: 1e-7,
                abs_tol: 1e-9,
                sample_dt: 0.02,
            },
            settle_fraction: 0.6,
            max_t_end: 2400.0,
        }
    }
}

/// Span over the window `[c1·T, c2·T]` of the trajectory time span.
fn window_span(traj: &crate::dynamics::Trajectory, c1: f64, c2: f64) -> f64 {
    let t0 = traj.t[0];
    let t_tot = traj.t[traj.len() - 1] - t0;
    let lo = traj.t.partition_point(|&t| t < t0 + c1 * t_tot);
    let hi = traj.t.partition_point(|&t| t < t0 + c2 * t_tot);
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    for s in &traj.states[lo..hi.max(lo + 1).min(traj.len())] {
        v_min = v_min.min(s.v);
        v_max = v_max.max(s.v);
    }
    v_max - v_min
}

/// Integrate from `s0` until the long-term span stops changing (two
/// consecutive quarter-windows agree within 1% or an absolute floor)
/// and return the settled span.
pub(crate) fn converged_span(
    s0: &State,
    dev: &DeviceParams,
    circ: &CircuitParams,
    fs: &impl OverlapSource,
    opts: &ScanOpts,
) -> Result<SteadySpan> {
    let mut t_end = opts.base.t_end;
    loop {
        let traj = integrate(
            s0,
            dev,
            circ,
            fs,
            &IntegrateOpts {
                t_end,
                ..opts.base
            },
        )?;
        let a = window_span(&traj, 0.5, 0.75);
        let b = window_span(&traj, 0.75, 1.0);
        if (a - b).abs() <= (0.01 * b).max(5e-5) || t_end >= opts.max_t_end {
            return steady_span(&traj, 0.5);
        }
        t_end = (2.0 * t_end).min(opts.max_t_end);
    }
}

/// Sweep direction tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Up,
    Down,
}

impl fmt::Display for SweepDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepDirection::Up => "up",
            SweepDirection::Down => "down",
        })
    }
}

/// Long-term characterization of one bias step of a hysteresis sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepEntry {
    pub direction: SweepDirection,
    pub v_n: f64,
    /// Settled voltage (steady) or oscillation band `[v_low, v_high]`.
    pub v_low: f64,
    pub v_high: f64,
    pub oscillating: bool,
    /// False when the step neither settled nor produced a bounded
    /// oscillation (flagged, never silently dropped).
    pub settled: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
}

impl SweepResult {
    /// CSV dump with columns `direction,V_n,V_low,V_high`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("direction,V_n,V_low,V_high\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.direction, e.v_n, e.v_low, e.v_high
            ));
        }
        out
    }

    /// `V_n` intervals `(before, after)` where the settled mid-voltage
    /// jumps by more than `min_jump` between consecutive steps of the
    /// given direction.
    pub fn jumps(&self, direction: SweepDirection, min_jump: f64) -> Vec<(f64, f64)> {
        let mids: Vec<(f64, f64)> = self
            .entries
            .iter()
            .filter(|e| e.direction == direction && e.settled)
            .map(|e| (e.v_n, 0.5 * (e.v_low + e.v_high)))
            .collect();
        let mut out = Vec::new();
        for w in mids.windows(2) {
            if (w[1].1 - w[0].1).abs() > min_jump {
                out.push((w[0].0, w[1].0));
            }
        }
        out
    }
}

/// Ramp `0 → top → 0` with the given step, inclusive at both turning
/// points.
pub fn ramp_path(top: f64, step: f64) -> Vec<f64> {
    let n = (top / step).round() as usize;
    let mut path: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    path.extend((0..n).rev().map(|k| k as f64 * step));
    path
}

/// Hysteresis sweep: step the bias along `v_n_path`, integrating for
/// `t_relax` at each step and carrying the final state into the next
/// (continuation). The settled voltage (or oscillation band) of each
/// step's tail quarter is recorded.
pub fn hysteresis_sweep(
    dev: &DeviceParams,
    r_n: f64,
    v_n_path: &[f64],
    t_relax: f64,
    fs: &impl OverlapSource,
) -> Result<SweepResult> {
    if v_n_path.is_empty() {
        return Err(Error::Config("empty sweep path".into()));
    }
    if !(t_relax > 0.0) {
        return Err(Error::Config(format!(
            "relaxation time must be positive, got {t_relax}"
        )));
    }
    let opts = IntegrateOpts {
        t_end: t_relax,
        rel_tol: 1e-7,
        abs_tol: 1e-9,
        sample_dt: 0.02,
    };
    let mut state = State::default();
    let mut entries = Vec::with_capacity(v_n_path.len());
    for (k, &v_n) in v_n_path.iter().enumerate() {
        let direction = if k == 0 {
            if v_n_path.len() > 1 && v_n_path[1] < v_n_path[0] {
                SweepDirection::Down
            } else {
                SweepDirection::Up
            }
        } else if v_n_path[k] >= v_n_path[k - 1] {
            SweepDirection::Up
        } else {
            SweepDirection::Down
        };
        let circ = CircuitParams { r_n, v_n };
        match integrate(&state, dev, &circ, fs, &opts) {
            Ok(traj) => {
                state = *traj.last_state().unwrap();
                let span = steady_span(&traj, 0.75)?;
                let (v_low, v_high) = if span.oscillating {
                    (span.v_min, span.v_max)
                } else {
                    (state.v, state.v)
                };
                entries.push(SweepEntry {
                    direction,
                    v_n,
                    v_low,
                    v_high,
                    oscillating: span.oscillating,
                    settled: true,
                });
            }
            Err(Error::Config(e)) => return Err(Error::Config(e)),
            Err(_) => {
                // Flag the step and restart from the default state.
                entries.push(SweepEntry {
                    direction,
                    v_n,
                    v_low: f64::NAN,
                    v_high: f64::NAN,
                    oscillating: false,
                    settled: false,
                });
                state = State::default();
            }
        }
    }
    Ok(SweepResult { entries })
}

/// Side of the threshold a square-root onset law grows from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitSide {
    /// `span = c·√(p - p0)` for `p > p0`.
    Above,
    /// `span = c·√(p0 - p)` for `p < p0`.
    Below,
}

impl fmt::Display for FitSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitSide::Above => "above",
            FitSide::Below => "below",
        })
    }
}

/// Fitted square-root onset law.
#[derive(Debug, Clone, Copy)]
pub struct SqrtFit {
    pub c: f64,
    pub p0: f64,
    /// RMS misfit of span².
    pub residual: f64,
    pub side: FitSide,
}

/// Least-squares fit of `span² = ±c²·(p - p0)` by linear regression on
/// span²; closed form, no iteration.
///
/// Needs at least 5 points with span above [`SPAN_THRESHOLD`]; constant
/// or wrong-signed data is rejected as degenerate.
pub fn fit_sqrt_law(points: &[(f64, f64)], side: FitSide) -> Result<SqrtFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(p, s)| p.is_finite() && s.is_finite() && *s > SPAN_THRESHOLD)
        .map(|&(p, s)| (p, s * s))
        .collect();
    if pts.len() < 5 {
        return Err(Error::Fit(format!(
            "need at least 5 oscillating points, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(p, _)| p).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(p, _)| p * p).sum();
    let sxy: f64 = pts.iter().map(|(p, y)| p * y).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return Err(Error::Fit("degenerate fit: parameter grid has no spread".into()));
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;

    let y_mean = sy / n;
    let ss_tot: f64 = pts.iter().map(|(_, y)| (y - y_mean).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|(p, y)| (y - slope * p - intercept).powi(2))
        .sum();
    if ss_tot < 1e-300 {
        return Err(Error::Fit("degenerate fit: constant spans".into()));
    }
    if ss_res > 0.5 * ss_tot {
        return Err(Error::Fit(format!(
            "degenerate fit: residual dominates (R² = {:.3})",
            1.0 - ss_res / ss_tot
        )));
    }
    let signed = match side {
        FitSide::Above => slope,
        FitSide::Below => -slope,
    };
    if signed <= 0.0 {
        return Err(Error::Fit(format!(
            "degenerate fit: span² slope {slope:.3e} has the wrong sign for side {side}"
        )));
    }
    Ok(SqrtFit {
        c: signed.sqrt(),
        p0: -intercept / slope,
        residual: (ss_res / n).sqrt(),
        side,
    })
}

/// Oscillation amplitude against one parameter, with the near-threshold
/// square-root fit when enough of the curve oscillates.
#[derive(Debug, Clone)]
pub struct AmplitudeCurve {
    pub param: ScanParam,
    /// `(parameter value, span)` in grid order.
    pub points: Vec<(f64, f64)>,
    pub oscillating: Vec<bool>,
    pub fit: Option<SqrtFit>,
}

impl AmplitudeCurve {
    /// CSV dump with columns `<param>,span,oscillating`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},span,oscillating\n", self.param);
        for ((p, s), osc) in self.points.iter().zip(&self.oscillating) {
            out.push_str(&format!("{},{},{}\n", p, s, osc));
        }
        out
    }
}

/// Span of the settled regime at each grid value of `param` (`Vn` or
/// `Zt`), each integrated independently from the default initial state.
///
/// The onset fit uses only near-threshold points (span above
/// [`SPAN_THRESHOLD`] but below 40% of the curve maximum, where the
/// normal-form law is valid); the fit side is inferred from the growth
/// direction. A curve with no oscillating points is returned with
/// `fit: None`.
pub fn amplitude_sweep(
    dev: &DeviceParams,
    circ: &CircuitParams,
    param: ScanParam,
    grid: &[f64],
    fs: &impl OverlapSource,
    opts: &ScanOpts,
) -> Result<AmplitudeCurve> {
    if !matches!(param, ScanParam::Vn | ScanParam::Zt) {
        return Err(Error::Config(format!(
            "amplitude sweeps support Vn and ZT, got {param}"
        )));
    }
    if grid.is_empty() {
        return Err(Error::Config("empty amplitude grid".into()));
    }
    let spans: Result<Vec<f64>> = grid
        .par_iter()
        .map(|&value| {
            let mut d = *dev;
            let mut c = *circ;
            param.apply(&mut d, &mut c, value);
            converged_span(&State::default(), &d, &c, fs, opts).map(|s| s.span)
        })
        .collect();
    let spans = spans?;
    let points: Vec<(f64, f64)> = grid.iter().copied().zip(spans.iter().copied()).collect();
    let oscillating: Vec<bool> = spans.iter().map(|&s| s > SPAN_THRESHOLD).collect();

    let s_max = spans.iter().copied().fold(0.0f64, f64::max);
    let window: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(_, s)| s > SPAN_THRESHOLD && s < 0.4 * s_max)
        .collect();
    let fit = if window.len() >= 5 {
        let n = window.len() as f64;
        let mean_p = window.iter().map(|(p, _)| p).sum::<f64>() / n;
        let mean_y = window.iter().map(|(_, s)| s * s).sum::<f64>() / n;
        let cov: f64 = window
            .iter()
            .map(|(p, s)| (p - mean_p) * (s * s - mean_y))
            .sum();
        let side = if cov >= 0.0 { FitSide::Above } else { FitSide::Below };
        fit_sqrt_law(&window, side).ok()
    } else {
        None
    };
    Ok(AmplitudeCurve {
        param,
        points,
        oscillating,
        fit,
    })
}

/// One scan axis: a parameter and its grid values.
#[derive(Debug, Clone)]
pub struct AxisSpec {
    pub param: ScanParam,
    pub values: Vec<f64>,
}

impl AxisSpec {
    pub fn linspace(param: ScanParam, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(lo < hi) {
            return Err(Error::Config(format!(
                "axis {param} needs lo < hi and at least 2 points, got [{lo}, {hi}] x {n}"
            )));
        }
        let h = (hi - lo) / (n - 1) as f64;
        Ok(AxisSpec {
            param,
            values: (0..n).map(|k| lo + h * k as f64).collect(),
        })
    }
}

/// Per-cell outcome of a 2-D scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellFlag {
    Steady,
    Oscillating,
    /// Parameters failed validation (for example α > 2); span is NaN.
    Invalid,
    /// Integration failed; span is NaN.
    Failed,
}

impl fmt::Display for CellFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellFlag::Steady => "steady",
            CellFlag::Oscillating => "oscillating",
            CellFlag::Invalid => "invalid",
            CellFlag::Failed => "failed",
        })
    }
}

/// 2-D map of the oscillation span over two parameter axes; rows follow
/// `axis1`, columns `axis2`.
#[derive(Debug, Clone)]
pub struct GridMap {
    pub axis1: AxisSpec,
    pub axis2: AxisSpec,
    pub span: Vec<Vec<f64>>,
    pub flags: Vec<Vec<CellFlag>>,
}

impl GridMap {
    /// Span matrix as CSV: header row carries the axis-2 grid, the first
    /// column the axis-1 grid; invalid and failed cells stay explicit
    /// NaN markers so the grid remains rectangular.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\\{}", self.axis1.param, self.axis2.param);
        for w in &self.axis2.values {
            out.push_str(&format!(",{w}"));
        }
        out.push('\n');
        for (v, row) in self.axis1.values.iter().zip(&self.span) {
            out.push_str(&format!("{v}"));
            for s in row {
                out.push_str(&format!(",{s}"));
            }
            out.push('\n');
        }
        out
    }

    /// Companion flags file, same layout as [`GridMap::to_csv`].
    pub fn flags_csv(&self) -> String {
        let mut out = format!("{}\\{}", self.axis1.param, self.axis2.param);
        for w in &self.axis2.values {
            out.push_str(&format!(",{w}"));
        }
        out.push('\n');
        for (v, row) in self.axis1.values.iter().zip(&self.flags) {
            out.push_str(&format!("{v}"));
            for f in row {
                out.push_str(&format!(",{f}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn oscillating_cells(&self) -> usize {
        self.flags
            .iter()
            .flatten()
            .filter(|f| **f == CellFlag::Oscillating)
            .count()
    }
}

/// Span and oscillation flag for every cell of the `axis1 × axis2` grid,
/// starting each cell from the default initial state. Cells whose
/// parameters fail validation are marked invalid (NaN span) and
/// integration failures are recorded per cell; neither aborts the scan.
/// Cells are independent and evaluated in parallel.
pub fn scan2d(
    dev: &DeviceParams,
    circ: &CircuitParams,
    axis1: &AxisSpec,
    axis2: &AxisSpec,
    fs: &impl OverlapSource,
    opts: &ScanOpts,
) -> Result<GridMap> {
    if axis1.param == axis2.param {
        return Err(Error::Config(format!(
            "scan axes must be distinct, both are {}",
            axis1.param
        )));
    }
    if axis1.values.is_empty() || axis2.values.is_empty() {
        return Err(Error::Config("empty scan axis".into()));
    }
    let n2 = axis2.values.len();
    let cells: Vec<(f64, CellFlag)> = (0..axis1.values.len() * n2)
        .into_par_iter()
        .map(|idx| {
            let v1 = axis1.values[idx / n2];
            let v2 = axis2.values[idx % n2];
            let mut d = *dev;
            let mut c = *circ;
            axis1.param.apply(&mut d, &mut c, v1);
            axis2.param.apply(&mut d, &mut c, v2);
            if model::require_valid(&d, &c).is_err() {
                return (f64::NAN, CellFlag::Invalid);
            }
            match converged_span(&State::default(), &d, &c, fs, opts) {
                Ok(s) => (
                    s.span,
                    if s.oscillating {
                        CellFlag::Oscillating
                    } else {
                        CellFlag::Steady
                    },
                ),
                Err(_) => (f64::NAN, CellFlag::Failed),
            }
        })
        .collect();
    let mut span = Vec::with_capacity(axis1.values.len());
    let mut flags = Vec::with_capacity(axis1.values.len());
    for chunk in cells.chunks(n2) {
        span.push(chunk.iter().map(|c| c.0).collect());
        flags.push(chunk.iter().map(|c| c.1).collect());
    }
    Ok(GridMap {
        axis1: axis1.clone(),
        axis2: axis2.clone(),
        span,
        flags,
    })
}
