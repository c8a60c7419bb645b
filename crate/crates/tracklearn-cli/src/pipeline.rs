//! Shared experiment machinery: seed derivation, learning sessions on the
//! simulated vehicles, transfer-map fitting from artifacts, and warm-started
//! first-iteration evaluation.

use nalgebra::DVector;

use tracklearn::ilc::{run_ilc, IlcUpdater, LearningRecord};
use tracklearn::l1::L1Config;
use tracklearn::lti::{
    stack_samples, unstack_samples, vector_relative_degree, LiftedModel, StateSpaceModel,
    VectorRelativeDegree, DEFAULT_MARKOV_TOL,
};
use tracklearn::sim::{rollout, PlantModel, Trajectory};
use tracklearn::transfer::{
    apply_transfer_map_online, build_window_state, fit_transfer_map_state,
    map_between_reference_models, SimulatedStateFeedback, TransferMap,
};

use crate::artifacts::LearnedArtifact;
use crate::CmdError;

/// Split one base seed into independent streams per (command, cell, trial).
pub fn derive_seed(base: u64, command: &str, cell: u64, trial: u64) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for byte in command.bytes() {
        h = (h ^ byte as u64).wrapping_mul(0x100_0000_01B3);
    }
    h = (h ^ cell).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ trial).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^ (h >> 31)
}

/// One controller/model stack: the reference model, its relative degree and
/// the lifted-domain update machinery for a given horizon.
pub struct ControlStack {
    pub l1: L1Config,
    pub reference: StateSpaceModel,
    pub vrd: VectorRelativeDegree,
    pub updater: IlcUpdater,
}

impl ControlStack {
    pub fn build(
        l1: L1Config,
        ilc: tracklearn::ilc::IlcConfig,
        n_steps: usize,
    ) -> Result<Self, CmdError> {
        let reference = l1
            .reference_model()
            .map_err(|e| CmdError::Config(format!("reference model: {e}")))?;
        let vrd = vector_relative_degree(&reference, DEFAULT_MARKOV_TOL)
            .map_err(|e| CmdError::Config(format!("reference relative degree: {e}")))?;
        let lifted = LiftedModel::from_model(&reference, n_steps)
            .map_err(|e| CmdError::Config(format!("lifted model: {e}")))?;
        let updater = IlcUpdater::new(ilc, lifted)
            .map_err(|e| CmdError::Config(format!("ilc setup: {e}")))?;
        Ok(Self {
            l1,
            reference,
            vrd,
            updater,
        })
    }
}

/// Run a learning session: `iterations` closed-loop trials on `plant`,
/// estimator update after each, input update between trials.
pub fn learning_session(
    plant: &PlantModel,
    stack: &ControlStack,
    traj: &Trajectory,
    iterations: usize,
    seed: u64,
    warm_start: Option<&DVector<f64>>,
) -> Result<LearningRecord, CmdError> {
    let p = plant.axes;
    let y_desired = stack_samples(&traj.samples[1..]);
    let mut trial = 0u64;
    let record = run_ilc(
        |u_lifted: &DVector<f64>| {
            let ff = unstack_samples(u_lifted, p);
            let rollout_seed = derive_seed(seed, "trial", 0, trial);
            trial += 1;
            let rec = rollout(plant, &stack.l1, Some(&ff), traj, rollout_seed)?;
            Ok(stack_samples(&rec.y2[1..]))
        },
        &stack.updater,
        &y_desired,
        iterations,
        warm_start,
    )
    .map_err(|e| CmdError::Fault(format!("learning session: {e}")))?;
    if let Some(fault) = &record.fault {
        return Err(CmdError::Fault(format!("learning session aborted: {fault}")));
    }
    Ok(record)
}

/// Absolute position references of an artifact: `u₂(k) = y*(k) + ũ(k)`.
pub fn absolute_inputs(artifact: &LearnedArtifact) -> Vec<DVector<f64>> {
    artifact
        .input
        .iter()
        .enumerate()
        .map(|(k, u)| &artifact.desired[k] + u)
        .collect()
}

/// Fit the state-based transfer map from a learned pair against a reference
/// model: regressor states come from the reference realization driven by the
/// absolute applied inputs.
pub fn fit_map_from_pair(
    reference: &StateSpaceModel,
    vrd: &VectorRelativeDegree,
    u_absolute: &[DVector<f64>],
    desired: &[DVector<f64>],
) -> Result<TransferMap, CmdError> {
    let sim = reference
        .simulate(u_absolute, &DVector::zeros(reference.state_dim()))
        .map_err(|e| CmdError::Fault(format!("reference replay: {e}")))?;
    let w = build_window_state(&sim.states, desired, vrd)
        .map_err(|e| CmdError::Fault(format!("regressor: {e}")))?;
    fit_transfer_map_state(&w, u_absolute, vrd, reference.state_dim())
        .map_err(|e| CmdError::Fault(format!("transfer fit: {e}")))
}

/// Apply a fitted map to a new trajectory against the reference realization,
/// returning the lifted feedforward correction `ũ = u₂ − y*`.
pub fn transferred_correction(
    map: &TransferMap,
    reference: &StateSpaceModel,
    vrd: &VectorRelativeDegree,
    traj: &Trajectory,
) -> Result<DVector<f64>, CmdError> {
    let max_r = vrd.max_degree();
    let desired = traj.desired_padded(max_r);
    let mut feedback = SimulatedStateFeedback::new(reference);
    let u_abs = apply_transfer_map_online(map, &desired, &mut feedback)
        .map_err(|e| CmdError::Fault(format!("transfer application: {e}")))?;
    let n = traj.n_steps();
    let corrections: Vec<DVector<f64>> = u_abs
        .iter()
        .take(n)
        .enumerate()
        .map(|(k, u)| u - &traj.samples[k])
        .collect();
    Ok(stack_samples(&corrections))
}

/// Fit from an artifact and produce the warm-start correction for a target
/// trajectory, optionally carrying the input across different reference
/// models first.
pub fn transfer_from_artifact(
    artifact: &LearnedArtifact,
    source_stack: &ControlStack,
    target_stack: &ControlStack,
    target_traj: &Trajectory,
) -> Result<DVector<f64>, CmdError> {
    let u_src = absolute_inputs(artifact);
    let same_reference = source_stack.reference == target_stack.reference;
    let (fit_reference, fit_vrd, u_fit) = if same_reference {
        (&source_stack.reference, &source_stack.vrd, u_src)
    } else {
        let mapped = map_between_reference_models(
            &u_src,
            &source_stack.reference,
            &target_stack.reference,
        )
        .map_err(|e| CmdError::Fault(format!("reference-model map: {e}")))?;
        (&target_stack.reference, &target_stack.vrd, mapped)
    };
    let map = fit_map_from_pair(fit_reference, fit_vrd, &u_fit, &artifact.desired)?;
    transferred_correction(&map, fit_reference, fit_vrd, target_traj)
}

/// First-iteration errors with and without a warm start, paired on the same
/// seed. Returns `(error_without, error_with)`.
pub fn first_iteration_pair(
    plant: &PlantModel,
    stack: &ControlStack,
    traj: &Trajectory,
    correction: &DVector<f64>,
    seed: u64,
) -> Result<(f64, f64), CmdError> {
    let cold = learning_session(plant, stack, traj, 1, seed, None)?;
    let warm = learning_session(plant, stack, traj, 1, seed, Some(correction))?;
    Ok((cold.iterations[0].error, warm.iterations[0].error))
}

/// Percentage error reduction on first-iteration errors.
pub fn reduction_percent(error_without: f64, error_with: f64) -> f64 {
    100.0 * (error_without - error_with) / error_without
}
