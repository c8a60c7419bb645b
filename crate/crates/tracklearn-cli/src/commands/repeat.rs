//! `repeat`: repeatability statistics for one source→target pair — several
//! full learning processes per arm under distinct seeds, reported as
//! per-iteration mean and standard deviation.

use std::path::Path;

use rayon::prelude::*;

use tracklearn::sim::trajectory_library;

use crate::artifacts::LearnedArtifact;
use crate::config::{resolve_plant, ExperimentConfig};
use crate::pipeline::{derive_seed, learning_session, transfer_from_artifact, ControlStack};
use crate::report::{fmt, write_report, ColumnKind, ReportSchema};
use crate::CmdError;

const REPEAT_SCHEMA: ReportSchema = ReportSchema {
    name: "repeatability",
    columns: &[
        ("iteration", ColumnKind::Int),
        ("mean_no_transfer", ColumnKind::Float),
        ("std_no_transfer", ColumnKind::Float),
        ("mean_transfer", ColumnKind::Float),
        ("std_transfer", ColumnKind::Float),
    ],
};

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub struct RepeatOutcome {
    /// Per-iteration (mean, std) for the no-transfer arm.
    pub no_transfer: Vec<(f64, f64)>,
    /// Per-iteration (mean, std) for the transfer arm.
    pub transfer: Vec<(f64, f64)>,
}

pub fn run(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    repetitions: Option<usize>,
    quiet: bool,
) -> Result<RepeatOutcome, CmdError> {
    let reps = repetitions.unwrap_or(cfg.repeat.repetitions);
    if reps < 1 {
        return Err(CmdError::Config("repetitions must be at least 1".into()));
    }
    let l1 = cfg.l1.to_l1_config(cfg.axes)?;
    let mut plant = resolve_plant(&cfg.target_plant, l1.dt_ctrl)?;
    plant.noise_std = cfg.noise_std;
    let traj = trajectory_library(&cfg.repeat.target, cfg.duration_s, l1.dt_ctrl)
        .map_err(|e| CmdError::Config(e.to_string()))?;
    let ilc = cfg.ilc.to_ilc_config(traj.n_steps() * cfg.axes)?;
    let stack = ControlStack::build(l1, ilc, traj.n_steps())?;

    let artifact = LearnedArtifact::load(out_dir, &cfg.repeat.source)?;
    let correction = transfer_from_artifact(&artifact, &stack, &stack, &traj)?;

    let runs: Vec<(Vec<f64>, Vec<f64>)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(cfg.seed, "repeat", rep as u64, 0);
            let cold = learning_session(&plant, &stack, &traj, cfg.iterations, seed, None)?;
            let warm =
                learning_session(&plant, &stack, &traj, cfg.iterations, seed, Some(&correction))?;
            Ok((
                cold.iterations.iter().map(|it| it.error).collect(),
                warm.iterations.iter().map(|it| it.error).collect(),
            ))
        })
        .collect::<Result<_, CmdError>>()?;

    let mut rows = Vec::with_capacity(cfg.iterations);
    let mut no_transfer = Vec::with_capacity(cfg.iterations);
    let mut transfer = Vec::with_capacity(cfg.iterations);
    for j in 0..cfg.iterations {
        let cold_j: Vec<f64> = runs.iter().map(|(c, _)| c[j]).collect();
        let warm_j: Vec<f64> = runs.iter().map(|(_, w)| w[j]).collect();
        let (mc, sc) = mean_std(&cold_j);
        let (mw, sw) = mean_std(&warm_j);
        no_transfer.push((mc, sc));
        transfer.push((mw, sw));
        rows.push(vec![
            (j + 1).to_string(),
            fmt(mc),
            fmt(sc),
            fmt(mw),
            fmt(sw),
        ]);
    }

    write_report(
        &out_dir.join("repeat.csv"),
        &REPEAT_SCHEMA,
        &cfg.canonical_json(),
        &format!(
            "repeat source={} target={} repetitions={reps} seed={}",
            cfg.repeat.source, cfg.repeat.target, cfg.seed
        ),
        &[],
        &rows,
    )?;
    if !quiet {
        println!(
            "repeatability over {reps} runs: iteration-1 mean {:.6} m (no transfer) vs {:.6} m (transfer)",
            no_transfer[0].0, transfer[0].0
        );
    }
    Ok(RepeatOutcome {
        no_transfer,
        transfer,
    })
}
