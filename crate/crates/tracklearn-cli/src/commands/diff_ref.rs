//! `diff-ref`: transfer when the source and target controllers use
//! different reference models. The learned input is first carried across
//! reference models (replay the source's realized output, invert the
//! target), then the usual trajectory transfer runs against the target's
//! reference. A naive arm skips the reference-model map for comparison.

use std::path::Path;

use tracklearn::sim::trajectory_library;

use crate::artifacts::LearnedArtifact;
use crate::config::{resolve_plant, ExperimentConfig, L1Block, PerAxis};
use crate::pipeline::{
    derive_seed, learning_session, reduction_percent, transfer_from_artifact, ControlStack,
};
use crate::report::{fmt, write_report, ColumnKind, ReportSchema};
use crate::CmdError;

const DIFF_REF_SCHEMA: ReportSchema = ReportSchema {
    name: "different-reference-models",
    columns: &[
        ("arm", ColumnKind::Str),
        ("error_no_transfer", ColumnKind::Float),
        ("error_transfer", ColumnKind::Float),
        ("reduction_percent", ColumnKind::Float),
    ],
};

/// Default target-side modification when the config gives none: the
/// reference poles move from their source values to 8 rad/s.
fn default_target_block(source: &L1Block) -> L1Block {
    let mut block = source.clone();
    block.m = PerAxis::Scalar(8.0);
    block
}

pub struct DiffRefOutcome {
    pub mapped_reduction: f64,
    pub naive_reduction: f64,
}

pub fn run(cfg: &ExperimentConfig, out_dir: &Path, quiet: bool) -> Result<DiffRefOutcome, CmdError> {
    let l1_source = cfg.l1.to_l1_config(cfg.axes)?;
    let target_block = cfg
        .l1_target
        .clone()
        .unwrap_or_else(|| default_target_block(&cfg.l1));
    let l1_target = target_block.to_l1_config(cfg.axes)?;
    if (l1_target.dt_ctrl - l1_source.dt_ctrl).abs() > 1e-12 {
        return Err(CmdError::Config(
            "l1_target.dt_ctrl must match l1.dt_ctrl".into(),
        ));
    }

    let mut plant = resolve_plant(&cfg.target_plant, l1_target.dt_ctrl)?;
    plant.noise_std = cfg.noise_std;
    let traj = trajectory_library(&cfg.repeat.target, cfg.duration_s, l1_target.dt_ctrl)
        .map_err(|e| CmdError::Config(e.to_string()))?;
    let ilc = cfg.ilc.to_ilc_config(traj.n_steps() * cfg.axes)?;
    let source_stack = ControlStack::build(l1_source, ilc.clone(), traj.n_steps())?;
    let target_stack = ControlStack::build(l1_target, ilc, traj.n_steps())?;

    let artifact = LearnedArtifact::load(out_dir, &cfg.repeat.source)?;

    // Mapped arm: carry the input across reference models, then transfer.
    let mapped_correction =
        transfer_from_artifact(&artifact, &source_stack, &target_stack, &traj)?;
    // Naive arm: pretend the reference models are equal and fit/apply
    // against the source reference.
    let naive_correction =
        transfer_from_artifact(&artifact, &source_stack, &source_stack, &traj)?;

    let seed = derive_seed(cfg.seed, "diff-ref", 0, 0);
    let cold = learning_session(&plant, &target_stack, &traj, 1, seed, None)?;
    let e_cold = cold.iterations[0].error;
    let warm_mapped =
        learning_session(&plant, &target_stack, &traj, 1, seed, Some(&mapped_correction))?;
    let warm_naive =
        learning_session(&plant, &target_stack, &traj, 1, seed, Some(&naive_correction))?;
    let e_mapped = warm_mapped.iterations[0].error;
    let e_naive = warm_naive.iterations[0].error;
    let mapped_reduction = reduction_percent(e_cold, e_mapped);
    let naive_reduction = reduction_percent(e_cold, e_naive);

    write_report(
        &out_dir.join("diff_ref.csv"),
        &DIFF_REF_SCHEMA,
        &cfg.canonical_json(),
        &format!(
            "diff-ref source={} target={} seed={}",
            cfg.repeat.source, cfg.repeat.target, cfg.seed
        ),
        &[],
        &[
            vec![
                "mapped".into(),
                fmt(e_cold),
                fmt(e_mapped),
                fmt(mapped_reduction),
            ],
            vec![
                "naive".into(),
                fmt(e_cold),
                fmt(e_naive),
                fmt(naive_reduction),
            ],
        ],
    )?;
    if !quiet {
        println!(
            "different reference models: reduction {mapped_reduction:.2}% with the reference map, {naive_reduction:.2}% naive"
        );
    }
    Ok(DiffRefOutcome {
        mapped_reduction,
        naive_reduction,
    })
}
