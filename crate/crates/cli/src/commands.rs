//! Command implementations: each analysis writes CSV artifacts plus a
//! JSON sidecar holding the fully resolved parameter set.

use anyhow::{bail, Context, Result};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

use qmem_core::bifurcation::{bifurcation_csv, find_cusp, find_hopf, find_saddle_nodes};
use qmem_core::dynamics::{integrate, power_spectrum, steady_span, IntegrateOpts, Trajectory};
use qmem_core::equilibria::{equilibria_csv, find_equilibria};
use qmem_core::model::{self, conductance_and_current, Severity, State};
use qmem_core::overlap::{Deriv, Geometry, OverlapEvaluator, OverlapSource, OverlapTable};
use qmem_core::sweeps::{amplitude_sweep, hysteresis_sweep, ramp_path, scan2d, ScanOpts};

use crate::config::{parse_axis, sidecar_json, RunParams};

/// Overlap access for a run: the direct quadrature path or the
/// interpolation table.
enum Source {
    Direct(OverlapEvaluator),
    Table(OverlapTable),
}

impl OverlapSource for Source {
    fn geometry(&self) -> &Geometry {
        match self {
            Source::Direct(e) => e.geometry(),
            Source::Table(t) => t.geometry(),
        }
    }

    fn row(&self, x_v: f64, deriv: Deriv) -> [f64; 3] {
        match self {
            Source::Direct(e) => e.row(x_v, deriv),
            Source::Table(t) => t.row(x_v, deriv),
        }
    }
}

fn write_artifact(
    dir: &Path,
    stem: &str,
    csv: &str,
    command: &str,
    params: &RunParams,
    result: Option<serde_json::Value>,
) -> Result<PathBuf> {
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;
    let meta_path = dir.join(format!("{stem}.meta.json"));
    fs::write(&meta_path, sidecar_json(command, params, result))
        .with_context(|| format!("writing {}", meta_path.display()))?;
    Ok(csv_path)
}

fn integrate_opts(p: &RunParams) -> IntegrateOpts {
    IntegrateOpts {
        t_end: p.t_end,
        rel_tol: p.rel_tol,
        abs_tol: p.abs_tol,
        sample_dt: p.sample_dt,
    }
}

fn scan_opts(p: &RunParams) -> ScanOpts {
    ScanOpts {
        base: integrate_opts(p),
        settle_fraction: p.settle,
        max_t_end: 4.0 * p.t_end,
    }
}

fn run_trajectory(p: &RunParams, fs: &Source) -> Result<Trajectory> {
    let dev = p.device()?;
    let circ = p.circuit();
    let traj = integrate(&p.initial_state(), &dev, &circ, fs, &integrate_opts(p))?;
    if traj.stats.purity_exceeded() {
        eprintln!(
            "warning: Bloch purity reached {:.9}; the state left the unit ball beyond the \
             monitored tolerance",
            traj.stats.max_purity
        );
    }
    Ok(traj)
}

/// Run one command, returning the artifact paths written.
pub fn execute(command: &str, params: &RunParams) -> Result<Vec<PathBuf>> {
    let dev = params.device()?;
    let circ = params.circuit();
    let findings = model::validate(&dev, &circ);
    let violations: Vec<&str> = findings
        .iter()
        .filter(|f| f.severity == Severity::Violation)
        .map(|f| f.message.as_str())
        .collect();
    if !violations.is_empty() {
        bail!("invalid parameters: {}", violations.join("; "));
    }
    for f in findings.iter().filter(|f| f.severity == Severity::Warning) {
        eprintln!("warning: {}", f.message);
    }

    let evaluator = OverlapEvaluator::with_nodes(dev.geom, params.nodes)?;
    let source = if params.table_enabled(command) {
        Source::Table(OverlapTable::covering(evaluator, -15.0, 15.0)?)
    } else {
        Source::Direct(evaluator)
    };

    let dir = PathBuf::from(&params.out_dir);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();

    match command {
        "simulate" | "spectrum" => {
            let traj = run_trajectory(params, &source)?;
            let span = steady_span(&traj, params.settle)?;
            let spec = power_spectrum(&traj.tail(params.settle)?)?;
            let result = json!({
                "span": span.span,
                "v_min": span.v_min,
                "v_max": span.v_max,
                "oscillating": span.oscillating,
                "peak_omega": spec.peak_omega,
                "peak_power": spec.peak_power,
                "steps": traj.stats.steps,
                "rejected_steps": traj.stats.rejected,
                "max_purity": traj.stats.max_purity,
            });
            if command == "simulate" {
                written.push(write_artifact(
                    &dir,
                    "trajectory",
                    &traj.to_csv(),
                    command,
                    params,
                    Some(result.clone()),
                )?);
            }
            written.push(write_artifact(
                &dir,
                "spectrum",
                &spec.to_csv(),
                command,
                params,
                Some(result),
            )?);
        }
        "iv-curve" => {
            if params.v_count < 2 || !(params.v_min < params.v_max) {
                bail!(
                    "iv-curve grid needs v_min < v_max and at least 2 points, got [{}, {}] x {}",
                    params.v_min,
                    params.v_max,
                    params.v_count
                );
            }
            let mut csv = String::from("V,G,I\n");
            let h = (params.v_max - params.v_min) / (params.v_count - 1) as f64;
            for k in 0..params.v_count {
                let v = params.v_min + h * k as f64;
                let s = State::new(0.0, 0.0, dev.z_t, v);
                let (g, i) = conductance_and_current(&s, &dev, &source);
                csv.push_str(&format!("{v},{g},{i}\n"));
            }
            written.push(write_artifact(&dir, "iv_curve", &csv, command, params, None)?);
        }
        "equilibria" => {
            let eqs = find_equilibria(&dev, &circ, &source)?;
            let result = json!({
                "count": eqs.len(),
                "v_star": eqs.iter().map(|q| q.v_star).collect::<Vec<_>>(),
                "stability": eqs.iter().map(|q| q.stability.to_string()).collect::<Vec<_>>(),
            });
            written.push(write_artifact(
                &dir,
                "equilibria",
                &equilibria_csv(&circ, &eqs),
                command,
                params,
                Some(result),
            )?);
        }
        "bifurcations" => {
            let cusps = find_cusp(&dev, &source);
            let folds: Vec<_> = find_saddle_nodes(&dev, circ.r_n, &source)
                .into_iter()
                .map(|f| (circ.r_n, f))
                .collect();
            let hopf = find_hopf(
                &dev,
                circ.r_n,
                &source,
                (params.vn_min, params.vn_max),
                params.n_grid,
            )?;
            let hopfs: Vec<_> = hopf.points.iter().map(|h| (circ.r_n, *h)).collect();
            if !hopf.branch_jumps.is_empty() {
                eprintln!(
                    "note: equilibrium branch jumped across a fold near V_n = {:?}; the tracker \
                     restarted on the surviving branch",
                    hopf.branch_jumps
                );
            }
            let result = json!({
                "cusps": cusps.iter().map(|c| json!({
                    "V": c.v_cusp, "Rn": c.r_n_cusp, "Vn": c.v_n_cusp,
                })).collect::<Vec<_>>(),
                "saddle_nodes": folds.iter().map(|(_, f)| json!({
                    "V": f.v_fold, "Vn": f.v_n_fold,
                })).collect::<Vec<_>>(),
                "hopf": hopfs.iter().map(|(_, h)| json!({
                    "Vn": h.v_n_hopf, "V": h.v_star, "omega": h.omega_hopf,
                })).collect::<Vec<_>>(),
                "branch_jumps": hopf.branch_jumps,
            });
            written.push(write_artifact(
                &dir,
                "bifurcations",
                &bifurcation_csv(&cusps, &folds, &hopfs),
                command,
                params,
                Some(result),
            )?);
        }
        "sweep" => {
            if !(params.vn_step > 0.0) || !(params.vn_max > 0.0) {
                bail!(
                    "sweep needs positive vn_max and vn_step, got {} and {}",
                    params.vn_max,
                    params.vn_step
                );
            }
            let path = ramp_path(params.vn_max, params.vn_step);
            let sweep = hysteresis_sweep(&dev, circ.r_n, &path, params.t_relax, &source)?;
            let result = json!({
                "up_jumps": sweep.jumps(qmem_core::sweeps::SweepDirection::Up, 0.3),
                "down_jumps": sweep.jumps(qmem_core::sweeps::SweepDirection::Down, 0.3),
                "flagged_steps": sweep.entries.iter().filter(|e| !e.settled).count(),
            });
            written.push(write_artifact(
                &dir,
                "sweep",
                &sweep.to_csv(),
                command,
                params,
                Some(result),
            )?);
        }
        "amplitude" => {
            let param = params.param.parse()?;
            if params.grid_count < 2 || !(params.grid_min < params.grid_max) {
                bail!(
                    "amplitude grid needs grid_min < grid_max and at least 2 points, got [{}, {}] x {}",
                    params.grid_min,
                    params.grid_max,
                    params.grid_count
                );
            }
            let h = (params.grid_max - params.grid_min) / (params.grid_count - 1) as f64;
            let grid: Vec<f64> = (0..params.grid_count)
                .map(|k| params.grid_min + h * k as f64)
                .collect();
            let curve = amplitude_sweep(&dev, &circ, param, &grid, &source, &scan_opts(params))?;
            let result = json!({
                "oscillating_points": curve.oscillating.iter().filter(|o| **o).count(),
                "fit": curve.fit.map(|f| json!({
                    "c": f.c, "p0": f.p0, "residual": f.residual, "side": f.side.to_string(),
                })),
            });
            written.push(write_artifact(
                &dir,
                "amplitude",
                &curve.to_csv(),
                command,
                params,
                Some(result),
            )?);
        }
        "scan" => {
            let ax1 = parse_axis(&params.ax1)?;
            let ax2 = parse_axis(&params.ax2)?;
            let map = scan2d(&dev, &circ, &ax1, &ax2, &source, &scan_opts(params))?;
            let result = json!({
                "oscillating_cells": map.oscillating_cells(),
                "cells": ax1.values.len() * ax2.values.len(),
            });
            written.push(write_artifact(
                &dir,
                "scan",
                &map.to_csv(),
                command,
                params,
                Some(result.clone()),
            )?);
            written.push(write_artifact(
                &dir,
                "scan_flags",
                &map.flags_csv(),
                command,
                params,
                Some(result),
            )?);
        }
        other => bail!("unknown command {other:?}"),
    }

    Ok(written)
}
