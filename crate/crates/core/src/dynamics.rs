//! Time integration of the neuron equations and stationary-regime
//! analysis: an embedded Dormand-Prince 5(4) pair with dense output for
//! uniform sampling, long-term voltage span extraction, and Hann-windowed
//! power spectra of `V(t)`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::{rhs_array, CircuitParams, DeviceParams, State};
use crate::overlap::OverlapSource;

/// Span above which the long-term voltage signal counts as oscillating:
/// two orders below the smallest reported span scale and three above
/// integrator noise.
pub const SPAN_THRESHOLD: f64 = 1e-3;

/// Integration settings. Tolerances must lie in `(0, 1e-2]`.
#[derive(Debug, Clone, Copy)]
pub struct IntegrateOpts {
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Uniform dense-output sampling interval.
    pub sample_dt: f64,
}

impl Default for IntegrateOpts {
    /// 600 time units (hundreds of cycle periods), tolerances well below
    /// every reported-figure tolerance, 0.01 sampling (Nyquist far above
    /// the low harmonics of interest).
    fn default() -> Self {
        IntegrateOpts {
            t_end: 600.0,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            sample_dt: 0.01,
        }
    }
}

impl IntegrateOpts {
    fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        for (name, tol) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(tol > 0.0 && tol <= 1e-2) {
                return Err(Error::Config(format!(
                    "{name} must lie in (0, 1e-2], got {tol}"
                )));
            }
        }
        if !(self.sample_dt > 0.0) || self.sample_dt > self.t_end {
            return Err(Error::Config(format!(
                "sample_dt must lie in (0, t_end], got {}",
                self.sample_dt
            )));
        }
        Ok(())
    }
}

/// Integrator counters and the purity watermark.
#[derive(Debug, Clone, Copy, Default)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub max_purity: f64,
}

impl IntegratorStats {
    /// Bloch-ball confinement is proven only for the undriven system, so
    /// purity is monitored rather than enforced; this reports a breach of
    /// the watch level.
    pub fn purity_exceeded(&self) -> bool {
        self.max_purity > 1.0 + 1e-6
    }
}

/// Uniformly sampled solution of one integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<State>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn sample_dt(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }

    pub fn last_state(&self) -> Option<&State> {
        self.states.last()
    }

    /// Copy of the trajectory with the first `settle_fraction` of the
    /// time span discarded.
    pub fn tail(&self, settle_fraction: f64) -> Result<Trajectory> {
        let start = self.settle_index(settle_fraction)?;
        Ok(Trajectory {
            t: self.t[start..].to_vec(),
            states: self.states[start..].to_vec(),
            stats: self.stats,
        })
    }

    fn settle_index(&self, settle_fraction: f64) -> Result<usize> {
        if !(settle_fraction > 0.0 && settle_fraction < 1.0) {
            return Err(Error::Config(format!(
                "settle fraction must lie in (0, 1), got {settle_fraction}"
            )));
        }
        if self.t.is_empty() {
            return Err(Error::InsufficientData("empty trajectory".into()));
        }
        let t_cut = self.t[0] + settle_fraction * (self.t[self.len() - 1] - self.t[0]);
        Ok(self.t.partition_point(|&t| t < t_cut))
    }

    /// Min/max of `V` over an index range.
    fn v_extrema(&self, range: std::ops::Range<usize>) -> (f64, f64) {
        let mut v_min = f64::INFINITY;
        let mut v_max = f64::NEG_INFINITY;
        for s in &self.states[range] {
            v_min = v_min.min(s.v);
            v_max = v_max.max(s.v);
        }
        (v_min, v_max)
    }

    /// CSV dump with columns `t,X,Y,Z,V`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,X,Y,Z,V\n");
        for (t, s) in self.t.iter().zip(&self.states) {
            out.push_str(&format!("{},{},{},{},{}\n", t, s.x, s.y, s.z, s.v));
        }
        out
    }
}

/// Long-term voltage characterization from the post-transient window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadySpan {
    pub v_min: f64,
    pub v_max: f64,
    pub span: f64,
    pub oscillating: bool,
}

/// Discard the first `settle_fraction` of the trajectory and return the
/// `V` extrema of the remainder; `oscillating` when the span exceeds
/// [`SPAN_THRESHOLD`]. The retained window must still hold enough samples
/// to bound an oscillation (at least 32).
pub fn steady_span(traj: &Trajectory, settle_fraction: f64) -> Result<SteadySpan> {
    let start = traj.settle_index(settle_fraction)?;
    if traj.len() - start < 32 {
        return Err(Error::InsufficientData(format!(
            "only {} samples left after the transient cut",
            traj.len() - start
        )));
    }
    let (v_min, v_max) = traj.v_extrema(start..traj.len());
    let span = v_max - v_min;
    Ok(SteadySpan {
        v_min,
        v_max,
        span,
        oscillating: span > SPAN_THRESHOLD,
    })
}

/// One-sided power spectral density with its dominant peak.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Angular frequency grid (ascending, nonnegative).
    pub omega: Vec<f64>,
    /// Power density per angular frequency.
    pub power: Vec<f64>,
    /// Dominant peak after parabolic refinement on log power.
    pub peak_omega: f64,
    pub peak_power: f64,
}

impl Spectrum {
    /// CSV dump with columns `omega,power`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,power\n");
        for (w, p) in self.omega.iter().zip(&self.power) {
            out.push_str(&format!("{},{}\n", w, p));
        }
        out
    }

    /// Power at the grid point nearest a given angular frequency.
    pub fn power_near(&self, omega: f64) -> f64 {
        if self.omega.len() < 2 {
            return 0.0;
        }
        let dw = self.omega[1] - self.omega[0];
        let k = ((omega / dw).round() as usize).min(self.power.len() - 1);
        self.power[k]
    }

    /// Median power, a robust noise-floor estimate.
    pub fn floor(&self) -> f64 {
        let mut p = self.power.clone();
        p.sort_by(f64::total_cmp);
        p[p.len() / 2]
    }
}

/// Mean-subtracted, Hann-windowed periodogram of `V(t)`.
///
/// The trajectory must be uniformly sampled (dense output guarantees
/// this) and hold at least 64 samples; pass a post-transient tail for
/// stationary spectra. The dominant peak is refined by parabolic
/// interpolation on log power.
pub fn power_spectrum(traj: &Trajectory) -> Result<Spectrum> {
    let n = traj.len();
    if n < 64 {
        return Err(Error::InsufficientData(format!(
            "power spectrum needs at least 64 samples, got {n}"
        )));
    }
    let dt = traj.sample_dt();
    for w in traj.t.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::Config(
                "power spectrum requires uniform sampling".into(),
            ));
        }
    }

    let mean = traj.states.iter().map(|s| s.v).sum::<f64>() / n as f64;
    let mut window_norm = 0.0;
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|k| {
            let w = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos());
            window_norm += w * w;
            Complex::new((traj.states[k].v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let n_freq = n / 2 + 1;
    let d_omega = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    let scale = 2.0 * dt / window_norm;
    let mut omega = Vec::with_capacity(n_freq);
    let mut power = Vec::with_capacity(n_freq);
    for (k, value) in buf.iter().take(n_freq).enumerate() {
        let one_sided = if k == 0 || (n % 2 == 0 && k == n / 2) {
            0.5
        } else {
            1.0
        };
        omega.push(d_omega * k as f64);
        power.push(one_sided * scale * value.norm_sqr());
    }

    // Dominant non-DC peak, refined on log power where the neighbors
    // allow it.
    let mut k_peak = 1;
    for k in 2..n_freq {
        if power[k] > power[k_peak] {
            k_peak = k;
        }
    }
    let (peak_omega, peak_power) = if k_peak + 1 < n_freq
        && power[k_peak - 1] > 0.0
        && power[k_peak] > 0.0
        && power[k_peak + 1] > 0.0
    {
        let lm = power[k_peak - 1].ln();
        let l0 = power[k_peak].ln();
        let lp = power[k_peak + 1].ln();
        let denom = lm - 2.0 * l0 + lp;
        if denom.abs() > 1e-300 {
            let delta = 0.5 * (lm - lp) / denom;
            (
                d_omega * (k_peak as f64 + delta),
                (l0 - 0.25 * (lm - lp) * delta).exp(),
            )
        } else {
            (omega[k_peak], power[k_peak])
        }
    } else {
        (omega[k_peak], power[k_peak])
    };

    Ok(Spectrum {
        omega,
        power,
        peak_omega,
        peak_power,
    })
}

// Dormand-Prince 5(4) tableau (autonomous system, so the stage times are
// not needed), error weights and dense-output weights.
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 10.0;
const MAX_STEPS: usize = 50_000_000;

#[inline]
fn axpyn(y: &[f64; 4], h: f64, ks: &[(&[f64; 4], f64)]) -> [f64; 4] {
    let mut out = *y;
    for i in 0..4 {
        let mut acc = 0.0;
        for (k, c) in ks {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// Integrate the neuron equations from `s0` with adaptive Dormand-Prince
/// 5(4) stepping and 4th-order dense output on a uniform grid.
///
/// Fails with a configuration error for bad options, a stiffness error if
/// the step size underflows (reporting the time reached) and a numerical
/// error if the state stops being finite.
pub fn integrate(
    s0: &State,
    dev: &DeviceParams,
    circ: &CircuitParams,
    fs: &impl OverlapSource,
    opts: &IntegrateOpts,
) -> Result<Trajectory> {
    opts.validate()?;
    crate::model::require_valid(dev, circ)?;
    if !s0.is_finite() {
        return Err(Error::Domain(format!("initial state not finite: {s0:?}")));
    }

    let f = |y: &[f64; 4]| rhs_array(y, dev, circ, fs);
    let mut stats = IntegratorStats {
        max_purity: s0.purity(),
        ..Default::default()
    };

    let n_samples = (opts.t_end / opts.sample_dt + 1e-9).floor() as usize;
    let mut t_grid = Vec::with_capacity(n_samples + 1);
    let mut states = Vec::with_capacity(n_samples + 1);
    t_grid.push(0.0);
    states.push(*s0);
    let mut next_sample = 1usize;

    let mut t = 0.0;
    let mut y = s0.to_array();
    let mut k1 = f(&y);
    stats.rhs_evals += 1;

    // Initial step from the local derivative scale.
    let mut h = initial_step(&y, &k1, opts, &f, &mut stats);
    let mut fac_old: f64 = 1e-4;

    while t < opts.t_end {
        if stats.steps + stats.rejected >= MAX_STEPS {
            return Err(Error::Numerical {
                what: format!("step budget exhausted at t = {t}"),
                residual: opts.t_end - t,
            });
        }
        if h < 1e-13 * t.abs().max(1.0) {
            return Err(Error::Stiffness { t_reached: t });
        }
        h = h.min(opts.t_end - t);

        let k2 = f(&axpyn(&y, h, &[(&k1, A2[0])]));
        let k3 = f(&axpyn(&y, h, &[(&k1, A3[0]), (&k2, A3[1])]));
        let k4 = f(&axpyn(&y, h, &[(&k1, A4[0]), (&k2, A4[1]), (&k3, A4[2])]));
        let k5 = f(&axpyn(
            &y,
            h,
            &[(&k1, A5[0]), (&k2, A5[1]), (&k3, A5[2]), (&k4, A5[3])],
        ));
        let k6 = f(&axpyn(
            &y,
            h,
            &[
                (&k1, A6[0]),
                (&k2, A6[1]),
                (&k3, A6[2]),
                (&k4, A6[3]),
                (&k5, A6[4]),
            ],
        ));
        let y_new = axpyn(
            &y,
            h,
            &[
                (&k1, B[0]),
                (&k3, B[2]),
                (&k4, B[3]),
                (&k5, B[4]),
                (&k6, B[5]),
            ],
        );
        let k7 = f(&y_new);
        stats.rhs_evals += 6;

        let mut err_sq = 0.0;
        for i in 0..4 {
            let e_i = h
                * (E[0] * k1[i]
                    + E[2] * k3[i]
                    + E[3] * k4[i]
                    + E[4] * k5[i]
                    + E[5] * k6[i]
                    + E[6] * k7[i]);
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err_sq += (e_i / sc) * (e_i / sc);
        }
        let err = (err_sq / 4.0).sqrt();

        if !err.is_finite() {
            // A stage blew up; retry with a much smaller step.
            stats.rejected += 1;
            h *= 0.1;
            continue;
        }

        if err <= 1.0 {
            // Accept; fill dense output over [t, t + h].
            let t_new = t + h;
            if !y_new.iter().all(|c| c.is_finite()) {
                return Err(Error::Numerical {
                    what: format!("state became non-finite at t = {t_new}"),
                    residual: err,
                });
            }
            let ydiff = [
                y_new[0] - y[0],
                y_new[1] - y[1],
                y_new[2] - y[2],
                y_new[3] - y[3],
            ];
            let mut cont = [[0.0f64; 4]; 5];
            for i in 0..4 {
                let bspl = h * k1[i] - ydiff[i];
                cont[0][i] = y[i];
                cont[1][i] = ydiff[i];
                cont[2][i] = bspl;
                cont[3][i] = ydiff[i] - h * k7[i] - bspl;
                cont[4][i] = h
                    * (D[0] * k1[i]
                        + D[2] * k3[i]
                        + D[3] * k4[i]
                        + D[4] * k5[i]
                        + D[5] * k6[i]
                        + D[6] * k7[i]);
            }
            while next_sample <= n_samples {
                let ts = next_sample as f64 * opts.sample_dt;
                if ts > t_new + 1e-12 {
                    break;
                }
                let theta = ((ts - t) / h).clamp(0.0, 1.0);
                let th1 = 1.0 - theta;
                let mut s = [0.0f64; 4];
                for i in 0..4 {
                    s[i] = cont[0][i]
                        + theta
                            * (cont[1][i]
                                + th1 * (cont[2][i] + theta * (cont[3][i] + th1 * cont[4][i])));
                }
                t_grid.push(ts);
                states.push(State::from_array(s));
                next_sample += 1;
            }

            t = t_new;
            y = y_new;
            k1 = k7; // first-same-as-last
            stats.steps += 1;
            stats.max_purity = stats.max_purity.max(State::from_array(y).purity());

            let fac11 = err.max(1e-10).powf(0.2 - BETA * 0.75);
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / MAX_SCALE, 1.0 / MIN_SCALE);
            h /= fac;
            fac_old = err.max(1e-4);
        } else {
            stats.rejected += 1;
            let fac11 = err.powf(0.2 - BETA * 0.75);
            h /= (fac11 / SAFETY).min(1.0 / MIN_SCALE);
        }
    }

    Ok(Trajectory {
        t: t_grid,
        states,
        stats,
    })
}

/// Standard two-evaluation starting-step heuristic.
fn initial_step<F: Fn(&[f64; 4]) -> [f64; 4]>(
    y: &[f64; 4],
    f0: &[f64; 4],
    opts: &IntegrateOpts,
    f: &F,
    stats: &mut IntegratorStats,
) -> f64 {
    let sc =
        |i: usize| opts.abs_tol + opts.rel_tol * y[i].abs();
    let d0 = (0..4).map(|i| (y[i] / sc(i)).powi(2)).sum::<f64>().sqrt();
    let d1 = (0..4).map(|i| (f0[i] / sc(i)).powi(2)).sum::<f64>().sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1 = axpyn(y, h0, &[(f0, 1.0)]);
    let f1 = f(&y1);
    stats.rhs_evals += 1;
    let d2 = (0..4)
        .map(|i| ((f1[i] - f0[i]) / sc(i)).powi(2))
        .sum::<f64>()
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) < 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(opts.t_end)
}
