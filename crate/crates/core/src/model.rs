//! Dimensionless model of the artificial neuron: parameter and state
//! types, the explicit right-hand side of the coupled Bloch-circuit
//! equations, the device conductance, unit conversion from physical
//! parameters and parameter validation.
//!
//! State is the 4-vector `(X, Y, Z, V)`: the Bloch components of the
//! two-level shuttling particle plus the dimensionless voltage across the
//! memristive element. Time is measured in units of the circuit constant
//! `τ_c = C_ext·R_ext`.
//!
//! The two-level truncation assumes the trap is anharmonic enough that
//! dissipation cannot resonantly populate higher levels (the anharmonic
//! level shift must dominate the total decoherence rate `γ + γ_T`). That
//! shift is not a parameter of the dimensionless model, so the condition
//! is a modeling caveat rather than a validated invariant.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::overlap::{Deriv, Geometry, OverlapSource};

/// Dimensionless parameters of the quantum element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    /// Oscillator frequency `Ω = Ω_p·τ_c`.
    pub omega: f64,
    /// Pure dephasing rate `Γ = γ·τ_c`.
    pub gamma: f64,
    /// Relaxation-to-dephasing ratio `α = γ_T/γ`, physical for `α ∈ [0, 2]`.
    pub alpha: f64,
    /// Thermal equilibrium Bloch-Z, `tanh(ħΩ_p/2k_BT) ∈ [0, 1]`.
    pub z_t: f64,
    /// Tunneling geometry.
    pub geom: Geometry,
}

/// Dimensionless parameters of the external circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitParams {
    /// External-to-minimal resistance ratio `R_n = R_ext/R_0`.
    pub r_n: f64,
    /// Dimensionless bias voltage.
    pub v_n: f64,
}

/// Bloch vector plus memristor voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub v: f64,
}

impl State {
    pub fn new(x: f64, y: f64, z: f64, v: f64) -> Self {
        State { x, y, z, v }
    }

    /// Bloch-vector norm squared; at most 1 for physical states.
    pub fn purity(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.v.is_finite()
    }

    pub(crate) fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.z, self.v]
    }

    pub(crate) fn from_array(a: [f64; 4]) -> Self {
        State {
            x: a[0],
            y: a[1],
            z: a[2],
            v: a[3],
        }
    }
}

impl Default for State {
    /// Pure ground state with an uncharged circuit, `(0, 0, 1, 0)`.
    ///
    /// Regime selection can depend on the initial condition where
    /// oscillations coexist with a stable equilibrium, so every analysis
    /// accepts an explicit override.
    fn default() -> Self {
        State::new(0.0, 0.0, 1.0, 0.0)
    }
}

/// Dimensional parameters of the device and circuit; the input of
/// [`to_dimensionless`]. All quantities in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Shuttling particle mass.
    pub mass: f64,
    /// Shuttling particle charge.
    pub charge: f64,
    /// Angular frequency of the trapping potential.
    pub omega_p: f64,
    /// Half the terminal separation (length unit after rescaling).
    pub half_gap: f64,
    /// Oscillator length `√(ħ/(m·Ω_p))`.
    pub osc_length: f64,
    /// Offset of the potential minimum.
    pub x0: f64,
    /// Electron tunneling length.
    pub tunneling_length: f64,
    /// Pure dephasing rate `γ`.
    pub gamma: f64,
    /// Relaxation rate `γ_T`.
    pub gamma_t: f64,
    /// Temperature in kelvin.
    pub temperature: f64,
    /// External capacitance.
    pub c_ext: f64,
    /// External resistance.
    pub r_ext: f64,
    /// Minimal device resistance.
    pub r_0: f64,
    /// Applied bias voltage.
    pub v_ext: f64,
    /// Voltage across the memristor.
    pub v_m: f64,
}

const HBAR: f64 = 1.054_571_817e-34;
const K_B: f64 = 1.380_649e-23;

/// Thermal equilibrium Bloch-Z from `θ = ħΩ_p/(2·k_B·T)`.
///
/// `θ = 0` is the infinite-temperature limit (`Z_T = 0`) and `θ → ∞` the
/// zero-temperature limit (`Z_T → 1`).
pub fn thermal_z(theta: f64) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!(
            "thermal argument must be nonnegative, got {theta}"
        )));
    }
    Ok(theta.tanh())
}

/// Convert physical parameters to the dimensionless sets. Also returns
/// the dimensionless memristor voltage corresponding to `v_m`, the
/// natural initial `V` for a simulation started from a measured device
/// state.
pub fn to_dimensionless(p: &PhysicalParams) -> Result<(DeviceParams, CircuitParams, f64)> {
    let tau_c = p.c_ext * p.r_ext;
    if !(tau_c > 0.0) {
        return Err(Error::Domain(format!(
            "circuit time constant C_ext*R_ext must be positive, got {tau_c}"
        )));
    }
    if p.gamma == 0.0 && p.gamma_t > 0.0 {
        return Err(Error::Domain(
            "relaxation without dephasing leaves the ratio alpha undefined".into(),
        ));
    }
    for (name, val) in [
        ("mass", p.mass),
        ("omega_p", p.omega_p),
        ("half_gap", p.half_gap),
        ("osc_length", p.osc_length),
        ("tunneling_length", p.tunneling_length),
        ("temperature", p.temperature),
        ("r_0", p.r_0),
    ] {
        if !(val > 0.0) {
            return Err(Error::Domain(format!("{name} must be positive, got {val}")));
        }
    }
    let alpha = if p.gamma == 0.0 {
        0.0
    } else {
        p.gamma_t / p.gamma
    };
    let volt_scale =
        p.charge / (2.0 * SQRT_2 * p.mass * p.omega_p * p.omega_p * p.half_gap * p.osc_length);
    let geom = Geometry::new(
        p.osc_length / p.half_gap,
        p.x0 / p.half_gap,
        p.tunneling_length / p.half_gap,
    )?;
    let dev = DeviceParams {
        omega: p.omega_p * tau_c,
        gamma: p.gamma * tau_c,
        alpha,
        z_t: thermal_z(HBAR * p.omega_p / (2.0 * K_B * p.temperature))?,
        geom,
    };
    let circ = CircuitParams {
        r_n: p.r_ext / p.r_0,
        v_n: volt_scale * p.v_ext,
    };
    Ok((dev, circ, volt_scale * p.v_m))
}

/// Severity of a validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// Hard violation: the model is outside its physical domain.
    Violation,
    /// The parameters are admissible but a caveat applies.
    Warning,
}

#[derive(Debug, Clone)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

impl Finding {
    fn violation(msg: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Violation,
            message: msg.into(),
        }
    }

    fn warning(msg: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Warning,
            message: msg.into(),
        }
    }
}

/// Check parameter invariants; reports findings, never fails.
///
/// An empty list means every invariant holds with no caveats.
pub fn validate(dev: &DeviceParams, circ: &CircuitParams) -> Vec<Finding> {
    let mut findings = Vec::new();
    if let Err(e) = dev.geom.validate() {
        findings.push(Finding::violation(e.to_string()));
    }
    if !(dev.omega > 0.0) || !dev.omega.is_finite() {
        findings.push(Finding::violation(format!(
            "Omega must be positive and finite, got {}",
            dev.omega
        )));
    }
    if !(dev.gamma >= 0.0) || !dev.gamma.is_finite() {
        findings.push(Finding::violation(format!(
            "Gamma must be nonnegative and finite, got {}",
            dev.gamma
        )));
    } else if dev.gamma == 0.0 {
        findings.push(Finding::warning(
            "Gamma = 0 (coherent limit): the DC equilibrium conditions assume nonzero \
             dephasing and relaxation",
        ));
    }
    if !(dev.alpha >= 0.0) || !dev.alpha.is_finite() {
        findings.push(Finding::violation(format!(
            "alpha must be nonnegative, got {}",
            dev.alpha
        )));
    } else if dev.alpha > 2.0 {
        findings.push(Finding::violation(format!(
            "alpha = {} exceeds 2: relaxation faster than twice the dephasing rate drives \
             the Bloch vector outside the unit ball",
            dev.alpha
        )));
    }
    if !(0.0..=1.0).contains(&dev.z_t) {
        findings.push(Finding::violation(format!(
            "Z_T must lie in [0, 1] (infinite- to zero-temperature limits), got {}",
            dev.z_t
        )));
    }
    if !(circ.r_n >= 0.0) || !circ.r_n.is_finite() {
        findings.push(Finding::violation(format!(
            "R_n must be nonnegative and finite, got {}",
            circ.r_n
        )));
    }
    if !circ.v_n.is_finite() {
        findings.push(Finding::violation(format!(
            "V_n must be finite, got {}",
            circ.v_n
        )));
    }
    findings
}

/// Return an error if any hard violation is present.
pub fn require_valid(dev: &DeviceParams, circ: &CircuitParams) -> Result<()> {
    let hard: Vec<String> = validate(dev, circ)
        .into_iter()
        .filter(|f| f.severity == Severity::Violation)
        .map(|f| f.message)
        .collect();
    if hard.is_empty() {
        Ok(())
    } else {
        Err(Error::Domain(hard.join("; ")))
    }
}

/// Dimensionless conductance for an arbitrary state:
/// `G = (1+Z)/2·F_00 + X·F_01 + (1-Z)/2·F_11` at `x_V = x0 - l·√2·V`.
pub fn conductance(s: &State, dev: &DeviceParams, fs: &impl OverlapSource) -> f64 {
    let [f00, f01, f11] = fs.row(dev.geom.x_v(s.v), Deriv::Value);
    0.5 * (1.0 + s.z) * f00 + s.x * f01 + 0.5 * (1.0 - s.z) * f11
}

/// Conductance and current `I = G·V` for a state.
pub fn conductance_and_current(
    s: &State,
    dev: &DeviceParams,
    fs: &impl OverlapSource,
) -> (f64, f64) {
    let g = conductance(s, dev, fs);
    (g, g * s.v)
}

/// Conductance of the static characteristic (`X = 0`, `Z = Z_T`).
pub fn static_conductance(v: f64, dev: &DeviceParams, fs: &impl OverlapSource) -> f64 {
    let [f00, _, f11] = fs.row(dev.geom.x_v(v), Deriv::Value);
    0.5 * (1.0 + dev.z_t) * f00 + 0.5 * (1.0 - dev.z_t) * f11
}

#[inline]
pub(crate) fn rhs_array(
    s: &[f64; 4],
    dev: &DeviceParams,
    circ: &CircuitParams,
    fs: &impl OverlapSource,
) -> [f64; 4] {
    let [x, y, z, v] = *s;
    let [f00, f01, f11] = fs.row(dev.geom.x_v(v), Deriv::Value);
    let g = 0.5 * ((1.0 + z) * f00 + 2.0 * x * f01 + (1.0 - z) * f11);
    // The voltage equation is substituted into the Bloch equations, which
    // keeps the system fully explicit.
    let v_dot = circ.v_n - (1.0 + circ.r_n * g) * v;
    let z_dot = -2.0 * v_dot * x - dev.alpha * dev.gamma * (z - dev.z_t);
    let x_dot = dev.omega * y + 2.0 * v_dot * z - dev.gamma * x;
    let y_dot = -dev.omega * x - dev.gamma * y;
    [x_dot, y_dot, z_dot, v_dot]
}

/// Time derivative of the state under the coupled Bloch-circuit equations.
pub fn rhs(
    s: &State,
    dev: &DeviceParams,
    circ: &CircuitParams,
    fs: &impl OverlapSource,
) -> Result<State> {
    require_valid(dev, circ)?;
    Ok(State::from_array(rhs_array(&s.to_array(), dev, circ, fs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlap::OverlapEvaluator;
    use approx::assert_abs_diff_eq;

    fn dev(gamma: f64, z_t: f64) -> DeviceParams {
        DeviceParams {
            omega: 7.0,
            gamma,
            alpha: 1.0,
            z_t,
            geom: Geometry::new(0.5, 0.8, 0.13).unwrap(),
        }
    }

    fn fs() -> OverlapEvaluator {
        OverlapEvaluator::new(Geometry::new(0.5, 0.8, 0.13).unwrap()).unwrap()
    }

    #[test]
    fn thermal_z_limits() {
        assert_eq!(thermal_z(0.0).unwrap(), 0.0);
        assert!((thermal_z(50.0).unwrap() - 1.0).abs() < 1e-15);
        assert_abs_diff_eq!(thermal_z(1.0).unwrap(), 1.0f64.tanh());
        assert!(thermal_z(-0.1).is_err());
        assert!(thermal_z(f64::NAN).is_err());
    }

    fn physical() -> PhysicalParams {
        // An electron-like particle in a nanoscale trap; the specific
        // numbers only need to be positive and self-consistent.
        let mass = 9.109e-31;
        let omega_p = 1.0e12;
        let osc_length = (HBAR / (mass * omega_p)).sqrt();
        PhysicalParams {
            mass,
            charge: 1.602e-19,
            omega_p,
            half_gap: 2.0 * osc_length,
            osc_length,
            x0: 1.6 * osc_length,
            tunneling_length: 0.26 * osc_length,
            gamma: 1.0e10,
            gamma_t: 1.0e10,
            temperature: 4.0,
            c_ext: 1.0e-15,
            r_ext: 7.0e3,
            r_0: 7.0e3,
            v_ext: 1.0e-3,
            v_m: 0.0,
        }
    }

    #[test]
    fn dimensionless_conversion_ratios() {
        let p = physical();
        let (dev, circ, _) = to_dimensionless(&p).unwrap();
        assert_abs_diff_eq!(dev.alpha, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(circ.r_n, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dev.omega, p.omega_p * p.c_ext * p.r_ext, epsilon = 1e-12);
        assert_abs_diff_eq!(dev.geom.l, 0.5, epsilon = 1e-12);

        // Doubling the applied bias doubles V_n, everything else fixed.
        let mut p2 = p;
        p2.v_ext *= 2.0;
        let (_, circ2, _) = to_dimensionless(&p2).unwrap();
        assert_abs_diff_eq!(circ2.v_n, 2.0 * circ.v_n, epsilon = 1e-15);
    }

    #[test]
    fn dimensionless_conversion_rejects_degenerate_inputs() {
        let mut p = physical();
        p.gamma = 0.0;
        assert!(matches!(to_dimensionless(&p), Err(Error::Domain(_))));
        let mut p = physical();
        p.c_ext = 0.0;
        assert!(matches!(to_dimensionless(&p), Err(Error::Domain(_))));
    }

    #[test]
    fn validation_findings() {
        let circ = CircuitParams { r_n: 5.0, v_n: 0.23 };
        let clean = validate(&dev(0.1, 1.0), &circ);
        assert!(clean.is_empty(), "{clean:?}");

        let mut d = dev(0.1, 1.0);
        d.alpha = 2.5;
        let findings = validate(&d, &circ);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].severity, Severity::Violation);
        assert!(findings[0].message.contains("alpha"));

        let warn = validate(&dev(0.0, 1.0), &circ);
        assert_eq!(warn.len(), 1);
        assert_eq!(warn[0].severity, Severity::Warning);

        let mut d = dev(0.1, 1.0);
        d.z_t = 1.5;
        assert!(validate(&d, &circ)
            .iter()
            .any(|f| f.severity == Severity::Violation && f.message.contains("Z_T")));
    }

    #[test]
    fn decoupled_circuit_rhs() {
        // R_n = 0 removes the conductance feedback: V relaxes toward V_n
        // and the bias still drives the Bloch vector through 2·V̇·Z.
        let d = dev(0.1, 1.0);
        let circ = CircuitParams { r_n: 0.0, v_n: 0.23 };
        let s = State::new(0.0, 0.0, 1.0, 0.0);
        let dot = rhs(&s, &d, &circ, &fs()).unwrap();
        assert_abs_diff_eq!(dot.v, 0.23, epsilon = 1e-15);
        assert_abs_diff_eq!(dot.z, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dot.x, 2.0 * 0.23 * 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dot.y, 0.0, epsilon = 1e-15);

        // Fully quiescent input: every derivative vanishes.
        let circ0 = CircuitParams { r_n: 0.0, v_n: 0.0 };
        let dot0 = rhs(&s, &d, &circ0, &fs()).unwrap();
        for c in dot0.to_array() {
            assert_abs_diff_eq!(c, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn conductance_at_zero_voltage() {
        let d = dev(0.1, 1.0);
        let e = fs();
        let s = State::new(0.0, 0.0, 1.0, 0.0);
        let (g, i) = conductance_and_current(&s, &d, &e);
        let f00 = e.f(0, 0, 0.8, Deriv::Value).unwrap();
        assert_abs_diff_eq!(g, f00, epsilon = 1e-14);
        assert_eq!(i, 0.0);
    }

    #[test]
    fn ground_state_conductance_ignores_upper_level() {
        // With Z = 1 and X = 0 the (1-Z)/2 weight of F_11 vanishes.
        let d = dev(0.1, 1.0);
        let e = fs();
        for v in [0.0, 0.7, 1.9] {
            let s = State::new(0.0, 0.0, 1.0, v);
            let g = conductance(&s, &d, &e);
            let f00 = e.f(0, 0, d.geom.x_v(v), Deriv::Value).unwrap();
            assert_abs_diff_eq!(g, f00, epsilon = 1e-14);
        }
    }

    #[test]
    fn conductance_bounded_for_physical_states() {
        let d = dev(0.1, 1.0);
        let e = fs();
        for k in 0..120 {
            // Deterministic sweep of Bloch-ball states and voltages.
            let a = k as f64 * 0.37;
            let s = State::new(
                0.9 * a.sin() * a.cos(),
                0.9 * a.sin() * a.sin(),
                0.9 * a.cos(),
                -1.5 + 0.03 * k as f64,
            );
            assert!(s.purity() <= 1.0);
            let g = conductance(&s, &d, &e);
            assert!(g > 0.0 && g <= 1.0, "G = {g} at {s:?}");
        }
    }
}
