//! `transfer`: fit the map from one learned artifact and emit the input for a
//! target trajectory, plus the serialized map itself.

use std::path::Path;

use tracklearn::lti::unstack_samples;
use tracklearn::sim::trajectory_library;
use tracklearn::transfer::{
    apply_transfer_map_online, build_window_io, fit_transfer_map_io, SimulatedIoFeedback,
};

use crate::artifacts::LearnedArtifact;
use crate::config::ExperimentConfig;
use crate::pipeline::{absolute_inputs, fit_map_from_pair, transferred_correction, ControlStack};
use crate::report::fmt;
use crate::CmdError;

use nalgebra::DVector;

pub fn run(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    source: &str,
    target: &str,
    io_variant: bool,
    quiet: bool,
) -> Result<(), CmdError> {
    let l1 = cfg.l1.to_l1_config(cfg.axes)?;
    let artifact = LearnedArtifact::load(out_dir, source)?;
    let target_traj = trajectory_library(target, cfg.duration_s, l1.dt_ctrl)
        .map_err(|e| CmdError::Config(e.to_string()))?;
    let ilc = cfg.ilc.to_ilc_config(target_traj.n_steps() * cfg.axes)?;
    let stack = ControlStack::build(l1, ilc, target_traj.n_steps())?;

    let u_abs = absolute_inputs(&artifact);
    let (map, correction) = if io_variant {
        // Measurement-only path: windows of the applied inputs and measured
        // outputs stand in for the state.
        let n_bar = stack.reference.state_dim();
        let mut outputs = vec![DVector::zeros(cfg.axes)];
        outputs.extend(artifact.measured.iter().cloned());
        let w = build_window_io(&u_abs, &outputs, &artifact.desired, &stack.vrd, n_bar)
            .map_err(|e| CmdError::Fault(format!("io regressor: {e}")))?;
        let map = fit_transfer_map_io(&w, &u_abs, &stack.vrd, n_bar)
            .map_err(|e| CmdError::Fault(format!("io fit: {e}")))?;
        let desired = target_traj.desired_padded(stack.vrd.max_degree());
        let mut feedback = SimulatedIoFeedback::new(&stack.reference, n_bar);
        let u_new = apply_transfer_map_online(&map, &desired, &mut feedback)
            .map_err(|e| CmdError::Fault(format!("io application: {e}")))?;
        let corrections: Vec<DVector<f64>> = u_new
            .iter()
            .take(target_traj.n_steps())
            .enumerate()
            .map(|(k, u)| u - &target_traj.samples[k])
            .collect();
        (map, tracklearn::lti::stack_samples(&corrections))
    } else {
        let map = fit_map_from_pair(&stack.reference, &stack.vrd, &u_abs, &artifact.desired)?;
        let correction = transferred_correction(&map, &stack.reference, &stack.vrd, &target_traj)?;
        (map, correction)
    };

    let map_path = out_dir.join(format!("transfer_map_{source}.json"));
    std::fs::write(&map_path, map.to_json().map_err(|e| CmdError::Fault(e.to_string()))?)
        .map_err(|e| CmdError::Fault(format!("cannot write {}: {e}", map_path.display())))?;

    let input_path = out_dir.join(format!("transfer_input_{source}_to_{target}.txt"));
    let samples = unstack_samples(&correction, cfg.axes);
    let mut text = String::new();
    for s in &samples {
        let fields: Vec<String> = s.iter().map(|v| fmt(*v)).collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    std::fs::write(&input_path, text)
        .map_err(|e| CmdError::Fault(format!("cannot write {}: {e}", input_path.display())))?;

    if !quiet {
        println!(
            "transfer {source} -> {target}: map residual {:.3e}, wrote {}",
            map.diagnostics().residual_norm,
            input_path.display()
        );
    }
    Ok(())
}
