//! Deterministic simulated vehicles, the closed-loop rollout engine and the
//! tracking-error metric.

mod trajectory;

pub use trajectory::{
    trajectory_library, trajectory_library_scaled, Trajectory, SMOOTHNESS_ACCEL_BOUND,
    TRAJECTORY_NAMES,
};

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::l1::{l1_step, L1Config, L1State};
use crate::lti::{stack_samples, StateSpaceModel};

/// A simulated quadrotor-like vehicle: per-axis velocity dynamics behind an
/// actuator lag and an input delay, plus a repetitive disturbance and a
/// Lipschitz state-dependent term, both entering at the plant input.
#[derive(Debug, Clone)]
pub struct PlantModel {
    pub name: String,
    /// Steady-state thrust effectiveness (dimensionless).
    pub gain: f64,
    /// Actuator lag time constant (s).
    pub tau: f64,
    /// Aerodynamic drag coefficient (1/s).
    pub drag: f64,
    /// Command-path delay in whole samples.
    pub delay_samples: usize,
    /// Velocity-tracking rate of the inner dynamics (1/s).
    pub velocity_rate: f64,
    /// Gain of the saturated-linear state-dependent disturbance; this is its
    /// Lipschitz constant.
    pub lipschitz_gain: f64,
    /// Saturation scale (m/s) of the state-dependent disturbance.
    pub lipschitz_scale: f64,
    /// Amplitude of the repetitive two-sinusoid input disturbance.
    pub disturbance_amplitude: f64,
    /// Standard deviation of the per-step input noise (0 disables sampling).
    pub noise_std: f64,
    pub dt: f64,
    pub axes: usize,
}

impl PlantModel {
    /// Slower, draggier vehicle used as the learning source.
    pub fn source_like(dt: f64) -> Self {
        Self {
            name: "source-like".into(),
            gain: 1.0,
            tau: 0.25,
            drag: 0.35,
            delay_samples: 2,
            velocity_rate: 4.0,
            lipschitz_gain: 0.25,
            lipschitz_scale: 0.5,
            disturbance_amplitude: 0.1,
            noise_std: 0.0,
            dt,
            axes: 3,
        }
    }

    /// Lighter, faster vehicle used as the transfer target.
    pub fn target_like(dt: f64) -> Self {
        Self {
            name: "target-like".into(),
            gain: 1.3,
            tau: 0.12,
            drag: 0.2,
            delay_samples: 1,
            velocity_rate: 4.0,
            lipschitz_gain: 0.25,
            lipschitz_scale: 0.5,
            disturbance_amplitude: 0.1,
            noise_std: 0.0,
            dt,
            axes: 3,
        }
    }

    /// Exact zero-order-hold matrices of the per-axis linear part
    /// `[lag, velocity, position]` driven by the (delayed, disturbed) input.
    fn discrete_matrices(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut aug = DMatrix::<f64>::zeros(4, 4);
        aug[(0, 0)] = -1.0 / self.tau;
        aug[(1, 0)] = self.velocity_rate * self.gain;
        aug[(1, 1)] = -(self.velocity_rate + self.drag);
        aug[(2, 1)] = 1.0;
        aug[(0, 3)] = 1.0 / self.tau;
        let disc = (aug * self.dt).exp();
        let ad = disc.view((0, 0), (3, 3)).into_owned();
        let bd = DVector::from_fn(3, |i, _| disc[(i, 3)]);
        (ad, bd)
    }

    /// Discrete state-space estimate of the input-to-velocity dynamics
    /// (block-diagonal over axes, delay not modeled) for norm-condition and
    /// analysis work.
    pub fn velocity_state_space(&self) -> Result<StateSpaceModel> {
        let (ad3, bd3) = self.discrete_matrices();
        let ad = ad3.view((0, 0), (2, 2)).into_owned();
        let bd = bd3.rows(0, 2).into_owned();
        let p = self.axes;
        let mut a = DMatrix::<f64>::zeros(2 * p, 2 * p);
        let mut b = DMatrix::<f64>::zeros(2 * p, p);
        let mut c = DMatrix::<f64>::zeros(p, 2 * p);
        for i in 0..p {
            a.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&ad);
            b.view_mut((2 * i, i), (2, 1)).copy_from(&bd);
            c[(i, 2 * i + 1)] = 1.0;
        }
        StateSpaceModel::new(a, b, c, self.dt)
    }

    /// Repetitive per-axis input disturbance, phase-locked to the trajectory
    /// clock: identical on every trial.
    pub fn repetitive_disturbance(&self, t: f64) -> DVector<f64> {
        let amp = self.disturbance_amplitude;
        DVector::from_fn(self.axes, |i, _| {
            let phi = i as f64 * std::f64::consts::TAU / 3.0;
            let psi = i as f64 * 0.7 + 0.5;
            amp * (0.6 * (std::f64::consts::TAU * 0.4 * t + phi).sin()
                + 0.4 * (std::f64::consts::TAU * 1.1 * t + psi).sin())
        })
    }

    /// Saturated-linear state-dependent disturbance; globally Lipschitz in
    /// the velocity with constant `lipschitz_gain`.
    pub fn state_disturbance(&self, velocity: &DVector<f64>) -> DVector<f64> {
        let v0 = self.lipschitz_scale;
        velocity.map(|v| -self.lipschitz_gain * v0 * (v / v0).tanh())
    }

    pub fn initial_state(&self) -> PlantState {
        PlantState {
            axes: vec![[0.0; 3]; self.axes],
            delay_buf: VecDeque::from(vec![DVector::zeros(self.axes); self.delay_samples]),
            step: 0,
        }
    }
}

/// Simulation state of one vehicle during one rollout.
#[derive(Debug, Clone)]
pub struct PlantState {
    /// Per-axis `[lag, velocity, position]`.
    axes: Vec<[f64; 3]>,
    delay_buf: VecDeque<DVector<f64>>,
    step: usize,
}

impl PlantState {
    pub fn velocities(&self) -> DVector<f64> {
        DVector::from_fn(self.axes.len(), |i, _| self.axes[i][1])
    }

    pub fn positions(&self) -> DVector<f64> {
        DVector::from_fn(self.axes.len(), |i, _| self.axes[i][2])
    }

    #[cfg(test)]
    pub(crate) fn set_velocity(&mut self, axis: usize, v: f64) {
        self.axes[axis][1] = v;
    }
}

/// Advance the plant one sample under command `u`, with disturbances and
/// (optionally) seeded input noise.
pub fn plant_step(
    plant: &PlantModel,
    matrices: &(DMatrix<f64>, DVector<f64>),
    state: &mut PlantState,
    u: &DVector<f64>,
    t: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let (ad, bd) = matrices;
    state.delay_buf.push_back(u.clone());
    let delayed = state.delay_buf.pop_front().expect("delay buffer non-empty");
    let d_rep = plant.repetitive_disturbance(t);
    let d_state = plant.state_disturbance(&state.velocities());
    for i in 0..plant.axes {
        let mut w = delayed[i] + d_rep[i] + d_state[i];
        if plant.noise_std > 0.0 {
            let xi: f64 = StandardNormal.sample(rng);
            w += plant.noise_std * xi;
        }
        let x = state.axes[i];
        let mut next = [0.0; 3];
        for r in 0..3 {
            next[r] = ad[(r, 0)] * x[0] + ad[(r, 1)] * x[1] + ad[(r, 2)] * x[2] + bd[r] * w;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedRollout { step: state.step });
        }
        state.axes[i] = next;
    }
    state.step += 1;
    Ok(())
}

/// Everything a closed-loop trial produces.
#[derive(Debug, Clone)]
pub struct RolloutRecord {
    /// Positions `y₂(0..N)`.
    pub y2: Vec<DVector<f64>>,
    /// Velocities `y₁(0..N)`.
    pub y1: Vec<DVector<f64>>,
    /// Position references fed to the controller, `u₂(0..N-1)`.
    pub u2_applied: Vec<DVector<f64>>,
    /// Adaptive commands issued, `u_{L1}(0..N-1)`.
    pub u_l1: Vec<DVector<f64>>,
    /// Reference-model states driven by the applied `u₂`, `x(0..N)`.
    pub ref_states: Vec<DVector<f64>>,
    /// Lifted output deviation `y₂(k) − y₂*(k)`, `k = 1..N`.
    pub deviation_lifted: DVector<f64>,
    /// Average position error along the trajectory.
    pub error: f64,
}

/// Run one full closed-loop trial: adaptive controller + plant + reference
/// tracking of `traj`, with an optional per-step feedforward correction added
/// to the desired positions. Deterministic given `seed`.
pub fn rollout(
    plant: &PlantModel,
    cfg: &L1Config,
    feedforward: Option<&[DVector<f64>]>,
    traj: &Trajectory,
    seed: u64,
) -> Result<RolloutRecord> {
    cfg.validate()?;
    let p = plant.axes;
    let n = traj.n_steps();
    if cfg.axes() != p || traj.channels() != p {
        return Err(Error::DimensionMismatch {
            context: "rollout axes",
            expected: format!("{p}"),
            found: format!("cfg {}, traj {}", cfg.axes(), traj.channels()),
        });
    }
    let dt = plant.dt;
    if (cfg.dt_ctrl - dt).abs() > 1e-12 * dt || (traj.dt - dt).abs() > 1e-12 * dt {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!(
                "plant {}, controller {}, trajectory {} must agree",
                dt, cfg.dt_ctrl, traj.dt
            ),
        });
    }
    if let Some(ff) = feedforward {
        if ff.len() != n {
            return Err(Error::DimensionMismatch {
                context: "feedforward",
                expected: format!("{n} samples"),
                found: format!("{}", ff.len()),
            });
        }
    }

    let reference = cfg.reference_model()?;
    let matrices = plant.discrete_matrices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plant_state = plant.initial_state();
    let mut l1_state = L1State::new(p);
    let mut x_ref = DVector::zeros(reference.state_dim());

    let mut record = RolloutRecord {
        y2: Vec::with_capacity(n + 1),
        y1: Vec::with_capacity(n + 1),
        u2_applied: Vec::with_capacity(n),
        u_l1: Vec::with_capacity(n),
        ref_states: Vec::with_capacity(n + 1),
        deviation_lifted: DVector::zeros(n * p),
        error: 0.0,
    };
    record.y2.push(plant_state.positions());
    record.y1.push(plant_state.velocities());
    record.ref_states.push(x_ref.clone());

    for k in 0..n {
        let y1 = plant_state.velocities();
        let y2 = plant_state.positions();
        let mut u2 = traj.samples[k].clone();
        if let Some(ff) = feedforward {
            u2 += &ff[k];
        }
        let u = l1_step(&mut l1_state, cfg, &u2, &y1, &y2)?;
        plant_step(plant, &matrices, &mut plant_state, &u, k as f64 * dt, &mut rng)?;
        x_ref = reference.step(&x_ref, &u2);

        record.u2_applied.push(u2);
        record.u_l1.push(u);
        record.y2.push(plant_state.positions());
        record.y1.push(plant_state.velocities());
        record.ref_states.push(x_ref.clone());
    }

    let deviations: Vec<DVector<f64>> = (1..=n)
        .map(|k| &record.y2[k] - &traj.samples[k])
        .collect();
    record.deviation_lifted = stack_samples(&deviations);
    record.error = tracking_error(&traj.samples[1..], &record.y2[1..])?;
    Ok(record)
}

/// Closed-loop position response of a plant under the adaptive controller
/// for a constant position command on every axis; returns `y₂(1..K)`.
pub fn closed_loop_step_response(
    plant: &PlantModel,
    cfg: &L1Config,
    magnitude: f64,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    cfg.validate()?;
    let p = plant.axes;
    let steps = (duration_s / plant.dt).round() as usize;
    let matrices = plant.discrete_matrices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plant_state = plant.initial_state();
    let mut l1_state = L1State::new(p);
    let u2 = DVector::from_element(p, magnitude);
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let y1 = plant_state.velocities();
        let y2 = plant_state.positions();
        let u = l1_step(&mut l1_state, cfg, &u2, &y1, &y2)?;
        plant_step(plant, &matrices, &mut plant_state, &u, k as f64 * plant.dt, &mut rng)?;
        out.push(plant_state.positions());
    }
    Ok(out)
}

/// Average position error along a trajectory: the per-sample Euclidean error
/// across axes, averaged over the samples.
pub fn tracking_error(desired: &[DVector<f64>], measured: &[DVector<f64>]) -> Result<f64> {
    if desired.len() != measured.len() {
        return Err(Error::DimensionMismatch {
            context: "tracking error",
            expected: format!("{} samples", desired.len()),
            found: format!("{}", measured.len()),
        });
    }
    if desired.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (d, m) in desired.iter().zip(measured) {
        if d.len() != m.len() {
            return Err(Error::DimensionMismatch {
                context: "tracking error sample",
                expected: format!("{}", d.len()),
                found: format!("{}", m.len()),
            });
        }
        total += (d - m).norm();
    }
    Ok(total / desired.len() as f64)
}

/// Tracking error on lifted (stacked) signals.
pub fn tracking_error_lifted(
    desired: &DVector<f64>,
    measured: &DVector<f64>,
    channels: usize,
) -> Result<f64> {
    if desired.len() != measured.len() || !desired.len().is_multiple_of(channels) {
        return Err(Error::DimensionMismatch {
            context: "lifted tracking error",
            expected: format!("multiple of {channels}, equal lengths"),
            found: format!("{} vs {}", desired.len(), measured.len()),
        });
    }
    let n = desired.len() / channels;
    let mut total = 0.0;
    for k in 0..n {
        total += (desired.rows(k * channels, channels) - measured.rows(k * channels, channels))
            .norm();
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::LiftedModel;

    #[test]
    fn identical_signals_have_zero_error() {
        let sig: Vec<DVector<f64>> = (0..10)
            .map(|k| DVector::from_vec(vec![k as f64, -1.0, 0.5]))
            .collect();
        assert_eq!(tracking_error(&sig, &sig).unwrap(), 0.0);
    }

    #[test]
    fn constant_unit_offset_gives_unit_error() {
        let desired = vec![DVector::from_vec(vec![0.0, 0.0, 0.0]); 20];
        let measured = vec![DVector::from_vec(vec![1.0, 0.0, 0.0]); 20];
        assert!((tracking_error(&desired, &measured).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pythagorean_offset_gives_five() {
        let desired = vec![DVector::from_vec(vec![0.0, 0.0, 0.0]); 7];
        let measured = vec![DVector::from_vec(vec![3.0, 4.0, 0.0]); 7];
        assert!((tracking_error(&desired, &measured).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let a = vec![DVector::zeros(3); 5];
        let b = vec![DVector::zeros(3); 4];
        assert!(tracking_error(&a, &b).is_err());
    }

    #[test]
    fn rest_trajectory_stays_at_rest() {
        let dt = 0.01;
        let mut plant = PlantModel::source_like(dt);
        plant.disturbance_amplitude = 0.0;
        let cfg = L1Config::default_for_axes(3);
        let traj = trajectory_library_scaled("circle", 2.0, dt, 0.0).unwrap();
        let rec = rollout(&plant, &cfg, None, &traj, 1).unwrap();
        assert_eq!(rec.error, 0.0);
        assert!(rec.y2.iter().all(|s| s.amax() == 0.0));
        assert!(rec.u_l1.iter().all(|s| s.amax() == 0.0));
    }

    #[test]
    fn velocity_decays_with_drag() {
        let dt = 0.01;
        let mut plant = PlantModel::source_like(dt);
        plant.disturbance_amplitude = 0.0;
        plant.lipschitz_gain = 0.0;
        let matrices = plant.discrete_matrices();
        let mut state = plant.initial_state();
        state.set_velocity(0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut last = 1.0f64;
        for k in 0..300 {
            plant_step(&plant, &matrices, &mut state, &DVector::zeros(3), k as f64 * dt, &mut rng)
                .unwrap();
            let v = state.velocities().norm();
            assert!(v <= last + 1e-12, "velocity grew at step {k}");
            last = v;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn lipschitz_bound_holds_empirically() {
        let plant = PlantModel::source_like(0.01);
        let mut worst: f64 = 0.0;
        for i in -50..50 {
            let a = DVector::from_element(3, i as f64 * 0.1);
            let b = DVector::from_element(3, i as f64 * 0.1 + 0.01);
            let df = (plant.state_disturbance(&a) - plant.state_disturbance(&b)).norm();
            let dv = (&a - &b).norm();
            worst = worst.max(df / dv);
        }
        assert!(worst <= plant.lipschitz_gain * (1.0 + 1e-9), "ratio {worst}");
    }

    #[test]
    fn repetitive_disturbance_is_trial_invariant() {
        let plant = PlantModel::source_like(0.01);
        for k in 0..100 {
            let t = k as f64 * 0.013;
            let a = plant.repetitive_disturbance(t);
            let b = plant.repetitive_disturbance(t);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rollouts_are_bit_identical_given_seed() {
        let dt = 0.01;
        let mut plant = PlantModel::target_like(dt);
        plant.noise_std = 0.004;
        let cfg = L1Config::default_for_axes(3);
        let traj = trajectory_library("lemniscate", 2.0, dt).unwrap();
        let a = rollout(&plant, &cfg, None, &traj, 99).unwrap();
        let b = rollout(&plant, &cfg, None, &traj, 99).unwrap();
        assert_eq!(a.error.to_bits(), b.error.to_bits());
        for (x, y) in a.y2.iter().zip(&b.y2) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn deviation_replayed_through_lifted_reference_is_consistent() {
        // Plant behaving exactly as the reference would make the deviation
        // equal F·ũ; the real plant only approximates it, but feeding zero
        // feedforward must reproduce the recorded measured deviation shape.
        let dt = 0.01;
        let cfg = L1Config::default_for_axes(3);
        let traj = trajectory_library("circle", 6.0, dt).unwrap();
        let mut plant = PlantModel::source_like(dt);
        plant.disturbance_amplitude = 0.0;
        let rec = rollout(&plant, &cfg, None, &traj, 5).unwrap();
        let reference = cfg.reference_model().unwrap();
        let lifted = LiftedModel::from_model(&reference, traj.n_steps()).unwrap();
        assert_eq!(rec.deviation_lifted.len(), lifted.dim());
        // The deviation is dominated by the reference-model tracking lag.
        assert!(rec.error > 1e-4);
        assert!(rec.error < 0.5);
    }
}
