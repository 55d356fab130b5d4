//! Run configuration: a flat key = value namespace with layered
//! precedence (defaults, then a config file, then command-line
//! overrides). Every key appears in the JSON sidecar written next to
//! each artifact, so a run can be replayed from its sidecar alone.

use anyhow::{anyhow, bail, Result};
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;

use qmem_core::model::{CircuitParams, DeviceParams, State};
use qmem_core::overlap::Geometry;

/// Fully resolved parameter set for one run.
#[derive(Debug, Clone)]
pub struct RunParams {
    // Device and circuit.
    pub l: f64,
    pub x0: f64,
    pub lambda: f64,
    pub omega: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub z_t: f64,
    pub r_n: f64,
    pub v_n: f64,
    // Initial state.
    pub x_init: f64,
    pub y_init: f64,
    pub z_init: f64,
    pub v_init: f64,
    // Integration and spectra.
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub sample_dt: f64,
    pub settle: f64,
    // Overlap evaluation.
    pub nodes: usize,
    /// None defers to the per-command default (scans opt in).
    pub use_table: Option<bool>,
    // Bias ramps and Hopf scans.
    pub vn_min: f64,
    pub vn_max: f64,
    pub vn_step: f64,
    pub t_relax: f64,
    pub n_grid: usize,
    // Amplitude sweeps.
    pub param: String,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_count: usize,
    // 2-D scans, as `name:min:max:count`.
    pub ax1: String,
    pub ax2: String,
    // Static characteristic grid.
    pub v_min: f64,
    pub v_max: f64,
    pub v_count: usize,
    pub out_dir: String,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            l: 0.5,
            x0: 0.8,
            lambda: 0.13,
            omega: 7.0,
            gamma: 0.1,
            alpha: 1.0,
            z_t: 1.0,
            r_n: 5.0,
            v_n: 0.23,
            x_init: 0.0,
            y_init: 0.0,
            z_init: 1.0,
            v_init: 0.0,
            t_end: 600.0,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            sample_dt: 0.01,
            settle: 0.6,
            nodes: qmem_core::overlap::DEFAULT_QUAD_NODES,
            use_table: None,
            vn_min: 0.05,
            vn_max: 7.0,
            vn_step: 0.05,
            t_relax: 200.0,
            n_grid: 64,
            param: "Vn".into(),
            grid_min: 0.23,
            grid_max: 0.6,
            grid_count: 40,
            ax1: "Gamma:0.01:1:50".into(),
            ax2: "ZT:0:1:50".into(),
            v_min: 0.0,
            v_max: 4.0,
            v_count: 801,
            out_dir: "out".into(),
        }
    }
}

fn parse_num(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| anyhow!("malformed number for {key}: {value:?}"))
}

fn parse_count(key: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse::<usize>()
        .map_err(|_| anyhow!("malformed count for {key}: {value:?}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => bail!("malformed flag for {key}: {other:?}"),
    }
}

impl RunParams {
    /// Apply one key = value pair. Unknown keys are rejected.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "l" => self.l = parse_num(key, value)?,
            "x0" => self.x0 = parse_num(key, value)?,
            "lambda" => self.lambda = parse_num(key, value)?,
            "Omega" => self.omega = parse_num(key, value)?,
            "Gamma" => self.gamma = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "ZT" => self.z_t = parse_num(key, value)?,
            "Rn" => self.r_n = parse_num(key, value)?,
            "Vn" => self.v_n = parse_num(key, value)?,
            "x_init" => self.x_init = parse_num(key, value)?,
            "y_init" => self.y_init = parse_num(key, value)?,
            "z_init" => self.z_init = parse_num(key, value)?,
            "v_init" => self.v_init = parse_num(key, value)?,
            "t_end" => self.t_end = parse_num(key, value)?,
            "rel_tol" => self.rel_tol = parse_num(key, value)?,
            "abs_tol" => self.abs_tol = parse_num(key, value)?,
            "sample_dt" => self.sample_dt = parse_num(key, value)?,
            "settle" => self.settle = parse_num(key, value)?,
            "nodes" => self.nodes = parse_count(key, value)?,
            "use_table" => self.use_table = Some(parse_bool(key, value)?),
            "vn_min" => self.vn_min = parse_num(key, value)?,
            "vn_max" => self.vn_max = parse_num(key, value)?,
            "vn_step" => self.vn_step = parse_num(key, value)?,
            "t_relax" => self.t_relax = parse_num(key, value)?,
            "n_grid" => self.n_grid = parse_count(key, value)?,
            "param" => self.param = value.trim().to_string(),
            "grid_min" => self.grid_min = parse_num(key, value)?,
            "grid_max" => self.grid_max = parse_num(key, value)?,
            "grid_count" => self.grid_count = parse_count(key, value)?,
            "ax1" => self.ax1 = value.trim().to_string(),
            "ax2" => self.ax2 = value.trim().to_string(),
            "v_min" => self.v_min = parse_num(key, value)?,
            "v_max" => self.v_max = parse_num(key, value)?,
            "v_count" => self.v_count = parse_count(key, value)?,
            "out_dir" => self.out_dir = value.trim().to_string(),
            other => bail!("unknown key {other:?}"),
        }
        Ok(())
    }

    /// Parse a `key = value` document with `#` comments, applying each
    /// assignment in order. Errors name the offending line.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value, got {raw:?}", idx + 1))?;
            self.apply(key.trim(), value)
                .map_err(|e| anyhow!("line {}: {e}", idx + 1))?;
        }
        Ok(())
    }

    pub fn geometry(&self) -> qmem_core::Result<Geometry> {
        Geometry::new(self.l, self.x0, self.lambda)
    }

    pub fn device(&self) -> qmem_core::Result<DeviceParams> {
        Ok(DeviceParams {
            omega: self.omega,
            gamma: self.gamma,
            alpha: self.alpha,
            z_t: self.z_t,
            geom: self.geometry()?,
        })
    }

    pub fn circuit(&self) -> CircuitParams {
        CircuitParams {
            r_n: self.r_n,
            v_n: self.v_n,
        }
    }

    pub fn initial_state(&self) -> State {
        State::new(self.x_init, self.y_init, self.z_init, self.v_init)
    }

    /// Whether this command reads overlaps through the interpolation
    /// table. Grid-heavy analyses opt in; single evaluations stay on the
    /// direct quadrature path.
    pub fn table_enabled(&self, command: &str) -> bool {
        self.use_table
            .unwrap_or(matches!(command, "sweep" | "amplitude" | "scan" | "bifurcations"))
    }

    /// Every key with its resolved value, for the artifact sidecar.
    pub fn to_map(&self, command: &str) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        m.insert("l".into(), json!(self.l));
        m.insert("x0".into(), json!(self.x0));
        m.insert("lambda".into(), json!(self.lambda));
        m.insert("Omega".into(), json!(self.omega));
        m.insert("Gamma".into(), json!(self.gamma));
        m.insert("alpha".into(), json!(self.alpha));
        m.insert("ZT".into(), json!(self.z_t));
        m.insert("Rn".into(), json!(self.r_n));
        m.insert("Vn".into(), json!(self.v_n));
        m.insert("x_init".into(), json!(self.x_init));
        m.insert("y_init".into(), json!(self.y_init));
        m.insert("z_init".into(), json!(self.z_init));
        m.insert("v_init".into(), json!(self.v_init));
        m.insert("t_end".into(), json!(self.t_end));
        m.insert("rel_tol".into(), json!(self.rel_tol));
        m.insert("abs_tol".into(), json!(self.abs_tol));
        m.insert("sample_dt".into(), json!(self.sample_dt));
        m.insert("settle".into(), json!(self.settle));
        m.insert("nodes".into(), json!(self.nodes));
        m.insert("use_table".into(), json!(self.table_enabled(command)));
        m.insert("vn_min".into(), json!(self.vn_min));
        m.insert("vn_max".into(), json!(self.vn_max));
        m.insert("vn_step".into(), json!(self.vn_step));
        m.insert("t_relax".into(), json!(self.t_relax));
        m.insert("n_grid".into(), json!(self.n_grid));
        m.insert("param".into(), json!(self.param));
        m.insert("grid_min".into(), json!(self.grid_min));
        m.insert("grid_max".into(), json!(self.grid_max));
        m.insert("grid_count".into(), json!(self.grid_count));
        m.insert("ax1".into(), json!(self.ax1));
        m.insert("ax2".into(), json!(self.ax2));
        m.insert("v_min".into(), json!(self.v_min));
        m.insert("v_max".into(), json!(self.v_max));
        m.insert("v_count".into(), json!(self.v_count));
        m.insert("out_dir".into(), json!(self.out_dir));
        m
    }
}

/// Sidecar document written next to each artifact.
pub fn sidecar_json(
    command: &str,
    params: &RunParams,
    result: Option<Value>,
) -> String {
    let mut doc = Map::new();
    doc.insert("tool".into(), json!("qmem"));
    doc.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    doc.insert("command".into(), json!(command));
    doc.insert("deterministic".into(), json!(true));
    doc.insert(
        "params".into(),
        Value::Object(params.to_map(command).into_iter().collect()),
    );
    if let Some(result) = result {
        doc.insert("result".into(), result);
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("sidecar json");
    text.push('\n');
    text
}

/// Axis spec in `name:min:max:count` form.
pub fn parse_axis(spec: &str) -> Result<qmem_core::sweeps::AxisSpec> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 4 {
        bail!("axis spec must be name:min:max:count, got {spec:?}");
    }
    let param: qmem_core::sweeps::ScanParam = parts[0]
        .parse()
        .map_err(|e| anyhow!("axis spec {spec:?}: {e}"))?;
    let lo = parse_num("axis min", parts[1])?;
    let hi = parse_num("axis max", parts[2])?;
    let n = parse_count("axis count", parts[3])?;
    qmem_core::sweeps::AxisSpec::linspace(param, lo, hi, n).map_err(|e| anyhow!("{e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_parameter_set() {
        let p = RunParams::default();
        assert_eq!(
            (p.l, p.x0, p.lambda, p.omega, p.alpha, p.z_t),
            (0.5, 0.8, 0.13, 7.0, 1.0, 1.0)
        );
    }

    #[test]
    fn config_text_layering_and_comments() {
        let mut p = RunParams::default();
        p.apply_config_text("# comment\nRn = 8\n\nGamma = 1 # inline\n")
            .unwrap();
        assert_eq!(p.r_n, 8.0);
        assert_eq!(p.gamma, 1.0);
        // Command-line overrides land after the file.
        p.apply("Rn", "5").unwrap();
        assert_eq!(p.r_n, 5.0);
    }

    #[test]
    fn errors_name_the_line() {
        let mut p = RunParams::default();
        let err = p.apply_config_text("Rn = 8\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = p.apply_config_text("Rn = abc\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        let err = p.apply_config_text("just words\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn axis_spec_parsing() {
        let ax = parse_axis("Gamma:0.01:1:50").unwrap();
        assert_eq!(ax.values.len(), 50);
        assert!(parse_axis("Gamma:0.01:1").is_err());
        assert!(parse_axis("Bogus:0:1:10").is_err());
        assert!(parse_axis("Gamma:1:0:10").is_err());
    }

    #[test]
    fn table_defaults_per_command() {
        let p = RunParams::default();
        assert!(!p.table_enabled("simulate"));
        assert!(!p.table_enabled("equilibria"));
        assert!(p.table_enabled("scan"));
        assert!(p.table_enabled("sweep"));
        let mut p = p;
        p.apply("use_table", "true").unwrap();
        assert!(p.table_enabled("simulate"));
    }
}
