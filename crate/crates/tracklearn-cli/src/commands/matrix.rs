//! `matrix`: the one-to-all study. Every learned source trajectory
//! warm-starts every target trajectory (itself included) on the target
//! vehicle; first-iteration errors with and without transfer populate the
//! grid.

use std::path::Path;

use rayon::prelude::*;

use tracklearn::sim::trajectory_library;

use crate::artifacts::LearnedArtifact;
use crate::config::{resolve_plant, ExperimentConfig};
use crate::pipeline::{
    derive_seed, first_iteration_pair, learning_session, reduction_percent, transfer_from_artifact,
    ControlStack,
};
use crate::report::{fmt, write_report, ColumnKind, ReportSchema};
use crate::CmdError;

const MATRIX_SCHEMA: ReportSchema = ReportSchema {
    name: "one-to-all-matrix",
    columns: &[
        ("source", ColumnKind::Str),
        ("target", ColumnKind::Str),
        ("error_no_transfer", ColumnKind::Float),
        ("error_transfer", ColumnKind::Float),
        ("reduction_percent", ColumnKind::Float),
    ],
};

pub struct MatrixOutcome {
    pub mean_reduction: f64,
    pub diagonal_min: f64,
}

pub fn run(cfg: &ExperimentConfig, out_dir: &Path, quiet: bool) -> Result<MatrixOutcome, CmdError> {
    let missing: Vec<&String> = cfg
        .trajectories
        .iter()
        .filter(|t| !LearnedArtifact::exists(out_dir, t))
        .collect();
    if !missing.is_empty() {
        return Err(CmdError::Config(format!(
            "missing learned artifacts for {missing:?}; run `learn --all` first"
        )));
    }

    let l1 = cfg.l1.to_l1_config(cfg.axes)?;
    let mut plant = resolve_plant(&cfg.target_plant, l1.dt_ctrl)?;
    plant.noise_std = cfg.noise_std;

    let trajectories: Vec<_> = cfg
        .trajectories
        .iter()
        .map(|name| trajectory_library(name, cfg.duration_s, l1.dt_ctrl))
        .collect::<Result<_, _>>()
        .map_err(|e| CmdError::Config(e.to_string()))?;
    let n_steps = trajectories[0].n_steps();
    let ilc = cfg.ilc.to_ilc_config(n_steps * cfg.axes)?;
    let stack = ControlStack::build(l1, ilc, n_steps)?;

    let artifacts: Vec<LearnedArtifact> = cfg
        .trajectories
        .iter()
        .map(|t| LearnedArtifact::load(out_dir, t))
        .collect::<Result<_, _>>()?;

    // Control arm once per target; both arms share the seed so noisy runs
    // stay paired.
    let cold_errors: Vec<f64> = trajectories
        .par_iter()
        .enumerate()
        .map(|(t_idx, traj)| {
            let seed = derive_seed(cfg.seed, "matrix", t_idx as u64, 0);
            learning_session(&plant, &stack, traj, 1, seed, None)
                .map(|rec| rec.iterations[0].error)
        })
        .collect::<Result<_, _>>()?;

    let n = cfg.trajectories.len();
    let cells: Vec<(usize, usize)> = (0..n)
        .flat_map(|s| (0..n).map(move |t| (s, t)))
        .collect();
    let results: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|&(s, t)| {
            let correction =
                transfer_from_artifact(&artifacts[s], &stack, &stack, &trajectories[t])?;
            let seed = derive_seed(cfg.seed, "matrix", t as u64, 0);
            let warm = learning_session(&plant, &stack, &trajectories[t], 1, seed, Some(&correction))?;
            Ok((cold_errors[t], warm.iterations[0].error))
        })
        .collect::<Result<_, CmdError>>()?;

    let mut rows = Vec::with_capacity(cells.len());
    let mut total_reduction = 0.0;
    let mut diagonal_min = f64::INFINITY;
    for (&(s, t), &(e_cold, e_warm)) in cells.iter().zip(&results) {
        let red = reduction_percent(e_cold, e_warm);
        total_reduction += red;
        if s == t {
            diagonal_min = diagonal_min.min(red);
        }
        rows.push(vec![
            cfg.trajectories[s].clone(),
            cfg.trajectories[t].clone(),
            fmt(e_cold),
            fmt(e_warm),
            fmt(red),
        ]);
    }
    let mean_reduction = total_reduction / cells.len() as f64;

    write_report(
        &out_dir.join("matrix.csv"),
        &MATRIX_SCHEMA,
        &cfg.canonical_json(),
        &format!("matrix seed={}", cfg.seed),
        &[format!("mean_reduction_percent: {}", fmt(mean_reduction))],
        &rows,
    )?;
    if !quiet {
        println!(
            "one-to-all matrix: mean first-iteration error reduction {mean_reduction:.2}% over {} cells (diagonal min {diagonal_min:.2}%)",
            cells.len()
        );
    }
    Ok(MatrixOutcome {
        mean_reduction,
        diagonal_min,
    })
}

/// One matrix cell evaluated in isolation (used by the diff-ref consistency
/// check and the tests).
pub fn single_cell(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    source: &str,
    target: &str,
) -> Result<(f64, f64), CmdError> {
    let l1 = cfg.l1.to_l1_config(cfg.axes)?;
    let mut plant = resolve_plant(&cfg.target_plant, l1.dt_ctrl)?;
    plant.noise_std = cfg.noise_std;
    let traj = trajectory_library(target, cfg.duration_s, l1.dt_ctrl)
        .map_err(|e| CmdError::Config(e.to_string()))?;
    let ilc = cfg.ilc.to_ilc_config(traj.n_steps() * cfg.axes)?;
    let stack = ControlStack::build(l1, ilc, traj.n_steps())?;
    let artifact = LearnedArtifact::load(out_dir, source)?;
    let correction = transfer_from_artifact(&artifact, &stack, &stack, &traj)?;
    let t_idx = cfg
        .trajectories
        .iter()
        .position(|t| t == target)
        .unwrap_or(0) as u64;
    let seed = derive_seed(cfg.seed, "matrix", t_idx, 0);
    first_iteration_pair(&plant, &stack, &traj, &correction, seed)
}
