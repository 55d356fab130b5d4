//! `qmem`: simulation and bifurcation analyses of an artificial neuron
//! circuit with a quantum memristive element, emitting machine-readable
//! CSV artifacts with JSON sidecars.

mod commands;
mod config;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;

use config::RunParams;

#[derive(Parser)]
#[command(
    name = "qmem",
    version,
    about = "Quantum-memristor neuron circuit: simulation, equilibria, bifurcations and scans",
    after_help = "Parameter precedence: defaults, then --config file (key = value lines, \
                  # comments), then command-line flags. Every artifact gets a .meta.json \
                  sidecar with the fully resolved parameters; QMEM_THREADS caps scan \
                  parallelism."
)]
struct Cli {
    /// Configuration file with key = value lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long = "out", global = true, value_name = "DIR")]
    out: Option<String>,

    /// Oscillator length (units of the half-gap).
    #[arg(long, global = true, value_name = "L")]
    l: Option<f64>,
    /// Potential-minimum offset.
    #[arg(long, global = true, value_name = "X0")]
    x0: Option<f64>,
    /// Tunneling length.
    #[arg(long, global = true, value_name = "LAM")]
    lambda: Option<f64>,
    /// Dimensionless oscillator frequency.
    #[arg(long = "Omega", global = true, value_name = "W")]
    omega: Option<f64>,
    /// Dimensionless pure-dephasing rate.
    #[arg(long = "Gamma", global = true, value_name = "G")]
    gamma: Option<f64>,
    /// Relaxation-to-dephasing ratio (0 to 2).
    #[arg(long, global = true, value_name = "A")]
    alpha: Option<f64>,
    /// Thermal equilibrium Bloch-Z (0 to 1).
    #[arg(long = "ZT", global = true, value_name = "ZT")]
    z_t: Option<f64>,
    /// External-to-minimal resistance ratio.
    #[arg(long = "Rn", global = true, value_name = "RN")]
    r_n: Option<f64>,
    /// Dimensionless bias voltage.
    #[arg(long = "Vn", global = true, value_name = "VN")]
    v_n: Option<f64>,

    /// Initial Bloch X.
    #[arg(long, global = true, value_name = "X")]
    x_init: Option<f64>,
    /// Initial Bloch Y.
    #[arg(long, global = true, value_name = "Y")]
    y_init: Option<f64>,
    /// Initial Bloch Z.
    #[arg(long, global = true, value_name = "Z")]
    z_init: Option<f64>,
    /// Initial memristor voltage.
    #[arg(long, global = true, value_name = "V")]
    v_init: Option<f64>,

    /// Integration horizon (dimensionless time).
    #[arg(long, global = true, value_name = "T")]
    t_end: Option<f64>,
    /// Relative tolerance of the adaptive integrator.
    #[arg(long, global = true, value_name = "TOL")]
    rel_tol: Option<f64>,
    /// Absolute tolerance of the adaptive integrator.
    #[arg(long, global = true, value_name = "TOL")]
    abs_tol: Option<f64>,
    /// Dense-output sampling interval.
    #[arg(long, global = true, value_name = "DT")]
    sample_dt: Option<f64>,
    /// Transient fraction discarded before spans and spectra.
    #[arg(long, global = true, value_name = "FRAC")]
    settle: Option<f64>,

    /// Gauss-Hermite quadrature order (minimum 200).
    #[arg(long, global = true, value_name = "N")]
    nodes: Option<usize>,
    /// Read overlaps through the interpolation table (grid commands
    /// default to true, single evaluations to false).
    #[arg(long, global = true, value_name = "BOOL")]
    use_table: Option<bool>,

    /// Lower bias bound for Hopf scans.
    #[arg(long, global = true, value_name = "VN")]
    vn_min: Option<f64>,
    /// Upper bias bound for Hopf scans and ramp top for sweeps.
    #[arg(long, global = true, value_name = "VN")]
    vn_max: Option<f64>,
    /// Bias step of the hysteresis ramp.
    #[arg(long, global = true, value_name = "DV")]
    vn_step: Option<f64>,
    /// Relaxation time per sweep step.
    #[arg(long, global = true, value_name = "T")]
    t_relax: Option<f64>,
    /// Grid points of the Hopf scan (minimum 16).
    #[arg(long, global = true, value_name = "N")]
    n_grid: Option<usize>,

    /// Swept parameter for amplitude curves (Vn or ZT).
    #[arg(long, global = true, value_name = "NAME")]
    param: Option<String>,
    /// Amplitude grid lower bound.
    #[arg(long, global = true, value_name = "P")]
    grid_min: Option<f64>,
    /// Amplitude grid upper bound.
    #[arg(long, global = true, value_name = "P")]
    grid_max: Option<f64>,
    /// Amplitude grid size.
    #[arg(long, global = true, value_name = "N")]
    grid_count: Option<usize>,

    /// First scan axis as name:min:max:count.
    #[arg(long, global = true, value_name = "SPEC")]
    ax1: Option<String>,
    /// Second scan axis as name:min:max:count.
    #[arg(long, global = true, value_name = "SPEC")]
    ax2: Option<String>,

    /// Static-curve voltage lower bound.
    #[arg(long, global = true, value_name = "V")]
    v_min: Option<f64>,
    /// Static-curve voltage upper bound.
    #[arg(long, global = true, value_name = "V")]
    v_max: Option<f64>,
    /// Static-curve grid size.
    #[arg(long, global = true, value_name = "N")]
    v_count: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate the equations of motion; writes trajectory and spectrum.
    Simulate,
    /// Static current-voltage characteristic.
    IvCurve,
    /// DC equilibria with eigenvalues and stability classes.
    Equilibria,
    /// Cusp, saddle-node and Hopf points.
    Bifurcations,
    /// Hysteresis ramp of the bias up and back down.
    Sweep,
    /// Oscillation span against one parameter, with the onset fit.
    Amplitude,
    /// 2-D span map over two parameters.
    Scan,
    /// Power spectrum of the settled voltage signal.
    Spectrum,
}

impl Command {
    fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::IvCurve => "iv-curve",
            Command::Equilibria => "equilibria",
            Command::Bifurcations => "bifurcations",
            Command::Sweep => "sweep",
            Command::Amplitude => "amplitude",
            Command::Scan => "scan",
            Command::Spectrum => "spectrum",
        }
    }
}

fn resolve_params(cli: &Cli) -> Result<RunParams> {
    let mut p = RunParams::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        p.apply_config_text(&text)
            .with_context(|| format!("config {}", path.display()))?;
    }
    let mut set_num = |key: &str, v: &Option<f64>| -> Result<()> {
        if let Some(v) = v {
            p.apply(key, &v.to_string())?;
        }
        Ok(())
    };
    set_num("l", &cli.l)?;
    set_num("x0", &cli.x0)?;
    set_num("lambda", &cli.lambda)?;
    set_num("Omega", &cli.omega)?;
    set_num("Gamma", &cli.gamma)?;
    set_num("alpha", &cli.alpha)?;
    set_num("ZT", &cli.z_t)?;
    set_num("Rn", &cli.r_n)?;
    set_num("Vn", &cli.v_n)?;
    set_num("x_init", &cli.x_init)?;
    set_num("y_init", &cli.y_init)?;
    set_num("z_init", &cli.z_init)?;
    set_num("v_init", &cli.v_init)?;
    set_num("t_end", &cli.t_end)?;
    set_num("rel_tol", &cli.rel_tol)?;
    set_num("abs_tol", &cli.abs_tol)?;
    set_num("sample_dt", &cli.sample_dt)?;
    set_num("settle", &cli.settle)?;
    set_num("vn_min", &cli.vn_min)?;
    set_num("vn_max", &cli.vn_max)?;
    set_num("vn_step", &cli.vn_step)?;
    set_num("t_relax", &cli.t_relax)?;
    set_num("grid_min", &cli.grid_min)?;
    set_num("grid_max", &cli.grid_max)?;
    set_num("v_min", &cli.v_min)?;
    set_num("v_max", &cli.v_max)?;
    if let Some(n) = cli.nodes {
        p.apply("nodes", &n.to_string())?;
    }
    if let Some(b) = cli.use_table {
        p.apply("use_table", &b.to_string())?;
    }
    if let Some(n) = cli.n_grid {
        p.apply("n_grid", &n.to_string())?;
    }
    if let Some(s) = &cli.param {
        p.apply("param", s)?;
    }
    if let Some(n) = cli.grid_count {
        p.apply("grid_count", &n.to_string())?;
    }
    if let Some(s) = &cli.ax1 {
        p.apply("ax1", s)?;
    }
    if let Some(s) = &cli.ax2 {
        p.apply("ax2", s)?;
    }
    if let Some(n) = cli.v_count {
        p.apply("v_count", &n.to_string())?;
    }
    if let Some(dir) = &cli.out {
        p.apply("out_dir", dir)?;
    }
    Ok(p)
}

fn main() -> Result<()> {
    if let Ok(threads) = std::env::var("QMEM_THREADS") {
        let n: usize = threads
            .parse()
            .with_context(|| format!("QMEM_THREADS must be a count, got {threads:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cli = Cli::parse();
    let params = resolve_params(&cli)?;
    let written = commands::execute(cli.command.as_str(), &params)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
