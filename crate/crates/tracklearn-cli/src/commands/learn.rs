//! `learn`: run the learning loop on the source vehicle for one (or every)
//! library trajectory, writing the per-iteration record and the learned
//! artifact the transfer commands consume.

use std::path::Path;

use tracklearn::lti::unstack_samples;
use tracklearn::sim::trajectory_library;

use crate::artifacts::{ArtifactMeta, LearnedArtifact};
use crate::config::{resolve_plant, ExperimentConfig};
use crate::pipeline::{derive_seed, learning_session, ControlStack};
use crate::report::{fmt, write_report, ColumnKind, ReportSchema};
use crate::CmdError;

const LEARNING_SCHEMA: ReportSchema = ReportSchema {
    name: "learning",
    columns: &[
        ("iteration", ColumnKind::Int),
        ("error", ColumnKind::Float),
        ("max_input", ColumnKind::Float),
        ("active_constraints", ColumnKind::Int),
    ],
};

pub fn run(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    trajectory: Option<&str>,
    all: bool,
    quiet: bool,
) -> Result<(), CmdError> {
    let names: Vec<String> = if all {
        cfg.trajectories.clone()
    } else {
        vec![trajectory
            .map(str::to_string)
            .unwrap_or_else(|| cfg.trajectories[0].clone())]
    };
    // One factorization serves every trajectory of the same horizon.
    let l1 = cfg.l1.to_l1_config(cfg.axes)?;
    let n_steps = (cfg.duration_s / l1.dt_ctrl).round() as usize;
    let ilc = cfg.ilc.to_ilc_config(n_steps * cfg.axes)?;
    let stack = ControlStack::build(l1, ilc, n_steps)?;
    for name in &names {
        learn_one(cfg, &stack, out_dir, name, quiet)?;
    }
    Ok(())
}

pub fn learn_one(
    cfg: &ExperimentConfig,
    stack: &ControlStack,
    out_dir: &Path,
    name: &str,
    quiet: bool,
) -> Result<(), CmdError> {
    let mut plant = resolve_plant(&cfg.source_plant, stack.l1.dt_ctrl)?;
    plant.noise_std = cfg.noise_std;
    let traj = trajectory_library(name, cfg.duration_s, stack.l1.dt_ctrl)
        .map_err(|e| CmdError::Config(e.to_string()))?;
    if traj.n_steps() * cfg.axes != stack.updater.lifted().dim() {
        return Err(CmdError::Config(format!(
            "trajectory '{name}' horizon does not match the prepared stack"
        )));
    }

    let traj_index = cfg
        .trajectories
        .iter()
        .position(|t| t == name)
        .unwrap_or(usize::MAX) as u64;
    let seed = derive_seed(cfg.seed, "learn", traj_index, 0);
    let record = learning_session(&plant, stack, &traj, cfg.iterations, seed, None)?;

    let rows: Vec<Vec<String>> = record
        .iterations
        .iter()
        .map(|it| {
            vec![
                it.iteration.to_string(),
                fmt(it.error),
                fmt(it.max_input),
                it.active_constraints.to_string(),
            ]
        })
        .collect();
    write_report(
        &out_dir.join(format!("learning_{name}.csv")),
        &LEARNING_SCHEMA,
        &cfg.canonical_json(),
        &format!("learn trajectory={name} seed={}", cfg.seed),
        &[],
        &rows,
    )?;

    let last = record
        .iterations
        .last()
        .ok_or_else(|| CmdError::Fault("learning produced no iterations".into()))?;
    let artifact = LearnedArtifact {
        meta: ArtifactMeta {
            trajectory: name.to_string(),
            plant: plant.name.clone(),
            iterations: record.iterations.len(),
            final_error: last.error,
            seed: cfg.seed,
            duration_s: cfg.duration_s,
            dt: traj.dt,
        },
        input: unstack_samples(&last.input, cfg.axes),
        desired: traj.samples.clone(),
        measured: unstack_samples(&last.output, cfg.axes),
    };
    artifact.save(out_dir)?;
    if !quiet {
        println!(
            "learned {name}: iteration-1 error {:.6} m, final error {:.6} m",
            record.iterations[0].error, last.error
        );
    }
    Ok(())
}
