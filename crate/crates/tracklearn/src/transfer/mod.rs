//! Multi-task transfer: learn the map from desired trajectories to tracking
//! inputs, structured by the vector relative degree, and apply it to unseen
//! trajectories.
//!
//! The map exists because the exact tracking input at step `k` is a linear
//! combination of the current state (or, for observable systems, a window of
//! past inputs and outputs) and the desired outputs shifted by the per-axis
//! relative degrees. Fitting those coefficients from one learned trajectory
//! yields parameter vectors that depend only on the system, not on the
//! trajectory, so they transfer.

mod reconstruct;

pub use reconstruct::{state_reconstructor, StateReconstructor};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{vector_relative_degree, StateSpaceModel, VectorRelativeDegree, DEFAULT_MARKOV_TOL};

/// Exact tracking recursion output.
#[derive(Debug, Clone)]
pub struct PerfectTracking {
    /// Inputs `u(0..N_u-1)`.
    pub inputs: Vec<DVector<f64>>,
    /// States `x(0..N_u)`.
    pub states: Vec<DVector<f64>>,
    /// Outputs `y(1..N_u)`.
    pub outputs: Vec<DVector<f64>>,
}

/// Inversion-based tracking law: at each step
/// `u(k) = A₀⁻¹(−[Cᵢ A^rᵢ] x(k) + [y*ᵢ(k+rᵢ)])`,
/// which pins `yᵢ(k) = y*ᵢ(k)` for every `k ≥ rᵢ`.
///
/// `y_desired` must extend `max rᵢ` samples past the last input to be
/// produced. The internal states stay bounded only for minimum-phase models;
/// the recursion itself runs either way (callers can check with
/// [`crate::lti::minimum_phase_check`]).
pub fn perfect_tracking_input(
    model: &StateSpaceModel,
    vrd: &VectorRelativeDegree,
    y_desired: &[DVector<f64>],
    x0: &DVector<f64>,
) -> Result<PerfectTracking> {
    let n = model.state_dim();
    let p = model.channels();
    let max_r = vrd.max_degree();
    if y_desired.len() <= max_r {
        return Err(Error::InvalidParameter {
            name: "y_desired",
            reason: format!(
                "need more than {max_r} samples of lookahead, got {}",
                y_desired.len()
            ),
        });
    }
    if y_desired.iter().any(|s| s.len() != p) {
        return Err(Error::DimensionMismatch {
            context: "desired trajectory",
            expected: format!("{p}-channel samples"),
            found: "mismatched sample width".into(),
        });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            context: "initial state",
            expected: format!("{n}"),
            found: format!("{}", x0.len()),
        });
    }

    let a0_inv = vrd
        .decoupling_matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::UndefinedRelativeDegree("decoupling matrix is singular".into()))?;
    // Rows Cᵢ A^rᵢ.
    let mut stack = DMatrix::<f64>::zeros(p, n);
    for (i, &ri) in vrd.degrees().iter().enumerate() {
        let mut row = model.c().row(i).into_owned();
        for _ in 0..ri {
            row *= model.a();
        }
        stack.row_mut(i).copy_from(&row);
    }

    let n_inputs = y_desired.len() - max_r;
    let mut out = PerfectTracking {
        inputs: Vec::with_capacity(n_inputs),
        states: Vec::with_capacity(n_inputs + 1),
        outputs: Vec::with_capacity(n_inputs),
    };
    let mut x = x0.clone();
    out.states.push(x.clone());
    for k in 0..n_inputs {
        let shifted = DVector::from_fn(p, |i, _| y_desired[k + vrd.degrees()[i]][i]);
        let u = &a0_inv * (shifted - &stack * &x);
        x = model.step(&x, &u);
        out.inputs.push(u);
        out.states.push(x.clone());
        out.outputs.push(model.output(&x));
    }
    Ok(out)
}

/// Shifted desired-output row `[y*₁(a+r₁), …, y*_p(a+r_p)]`.
fn shifted_desired(y_desired: &[DVector<f64>], degrees: &[usize], a: usize) -> DVector<f64> {
    DVector::from_fn(degrees.len(), |i, _| y_desired[a + degrees[i]][i])
}

/// Regressor for the state-based map: row `a` is
/// `[xᵀ(a), y*₁(a+r₁), …, y*_p(a+r_p)]` for `a = 0..=N_r`,
/// `N_r = N − max rⱼ` with `N = y_desired.len() − 1`.
pub fn build_window_state(
    states: &[DVector<f64>],
    y_desired: &[DVector<f64>],
    vrd: &VectorRelativeDegree,
) -> Result<DMatrix<f64>> {
    let p = vrd.degrees().len();
    let max_r = vrd.max_degree();
    if y_desired.len() <= max_r + 1 {
        return Err(Error::InvalidParameter {
            name: "y_desired",
            reason: format!("trajectory shorter than the maximum degree {max_r}"),
        });
    }
    let n_r = y_desired.len() - 1 - max_r;
    if states.len() < n_r + 1 {
        return Err(Error::InvalidParameter {
            name: "states",
            reason: format!("need at least {} state samples, got {}", n_r + 1, states.len()),
        });
    }
    let n = states[0].len();
    let mut w = DMatrix::<f64>::zeros(n_r + 1, n + p);
    for a in 0..=n_r {
        for j in 0..n {
            w[(a, j)] = states[a][j];
        }
        let shifted = shifted_desired(y_desired, vrd.degrees(), a);
        for j in 0..p {
            w[(a, n + j)] = shifted[j];
        }
    }
    Ok(w)
}

/// Regressor for the input/output-based map: row `a` (for
/// `a = N̄..=N_r`) is `[ū(a), ȳ(a), y*-shifts]` with
/// `ū(a) = [uᵀ(a-1), …, uᵀ(a-N̄)]` and `ȳ(a) = [yᵀ(a-1), …, yᵀ(a-N̄)]`.
/// `outputs[k]` must be the measured output at sample `k` (so `outputs[0]`
/// is the at-rest output).
pub fn build_window_io(
    inputs: &[DVector<f64>],
    outputs: &[DVector<f64>],
    y_desired: &[DVector<f64>],
    vrd: &VectorRelativeDegree,
    n_bar: usize,
) -> Result<DMatrix<f64>> {
    let p = vrd.degrees().len();
    let max_r = vrd.max_degree();
    if n_bar == 0 {
        return Err(Error::InvalidParameter {
            name: "n_bar",
            reason: "window length must be at least 1".into(),
        });
    }
    if y_desired.len() <= max_r + 1 {
        return Err(Error::InvalidParameter {
            name: "y_desired",
            reason: format!("trajectory shorter than the maximum degree {max_r}"),
        });
    }
    let n_r = y_desired.len() - 1 - max_r;
    if n_r < n_bar {
        return Err(Error::InvalidParameter {
            name: "y_desired",
            reason: format!("trajectory too short for window {n_bar}"),
        });
    }
    if inputs.len() < n_r || outputs.len() < n_r {
        return Err(Error::InvalidParameter {
            name: "inputs/outputs",
            reason: format!(
                "need at least {n_r} input and output samples, got {} and {}",
                inputs.len(),
                outputs.len()
            ),
        });
    }
    let rows = n_r - n_bar + 1;
    let cols = 2 * p * n_bar + p;
    let mut w = DMatrix::<f64>::zeros(rows, cols);
    for (row, a) in (n_bar..=n_r).enumerate() {
        for j in 0..n_bar {
            for ch in 0..p {
                w[(row, j * p + ch)] = inputs[a - 1 - j][ch];
                w[(row, n_bar * p + j * p + ch)] = outputs[a - 1 - j][ch];
            }
        }
        let shifted = shifted_desired(y_desired, vrd.degrees(), a);
        for ch in 0..p {
            w[(row, 2 * n_bar * p + ch)] = shifted[ch];
        }
    }
    Ok(w)
}

/// Which feedback signal the map consumes when applied online.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapVariant {
    /// Rows carry the system state.
    State,
    /// Rows carry windows of past inputs and outputs.
    InputOutput,
}

/// Least-squares fit quality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Total residual `√Σᵢ ‖Wθᵢ − uᵢ‖²`.
    pub residual_norm: f64,
    /// Ratio of largest to smallest retained singular value.
    pub condition_number: f64,
    /// Numerical rank at the singular-value cutoff.
    pub rank: usize,
    /// True when the regressor fell below full column rank; the fit then
    /// holds the minimum-norm solution.
    pub rank_deficient: bool,
}

/// Learned transfer parameters: one vector per input channel, plus the
/// geometry needed to build regressor rows online.
///
/// Alignment convention: the parameters apply to samples `0..=N_r` of a
/// trajectory (`N_r = N − max rⱼ`); the shifted desired outputs look ahead
/// by the per-axis degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferMap {
    variant: MapVariant,
    degrees: Vec<usize>,
    n_bar: Option<usize>,
    /// Length of the feedback part of a regressor row (`n` for the state
    /// variant, `2pN̄` for the input/output variant).
    feedback_dim: usize,
    channels: usize,
    theta: Vec<Vec<f64>>,
    diagnostics: FitDiagnostics,
}

fn least_squares(
    w: &DMatrix<f64>,
    targets: &[DVector<f64>],
) -> Result<(Vec<DVector<f64>>, FitDiagnostics)> {
    let svd = w.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = 1e-10 * sigma_max;
    let rank = svd.rank(cutoff.max(f64::MIN_POSITIVE));
    let smallest_kept = svd
        .singular_values
        .iter()
        .copied()
        .filter(|&s| s > cutoff)
        .fold(f64::INFINITY, f64::min);
    let condition_number = if rank == 0 { 1.0 } else { sigma_max / smallest_kept };
    let mut thetas = Vec::with_capacity(targets.len());
    let mut residual_sq = 0.0;
    for t in targets {
        if t.len() != w.nrows() {
            return Err(Error::DimensionMismatch {
                context: "regression targets",
                expected: format!("{}", w.nrows()),
                found: format!("{}", t.len()),
            });
        }
        let theta = svd
            .solve(t, cutoff.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::InvalidModel(format!("least squares failed: {e}")))?;
        residual_sq += (w * &theta - t).norm_squared();
        thetas.push(theta);
    }
    Ok((
        thetas,
        FitDiagnostics {
            residual_norm: residual_sq.sqrt(),
            condition_number,
            rank,
            rank_deficient: rank < w.ncols(),
        },
    ))
}

/// Split a sample sequence into per-channel target vectors over `rows` rows.
fn per_channel_targets(inputs: &[DVector<f64>], rows: usize, offset: usize, p: usize) -> Vec<DVector<f64>> {
    (0..p)
        .map(|ch| DVector::from_fn(rows, |a, _| inputs[offset + a][ch]))
        .collect()
}

/// Fit the state-based map from a regressor and the learned input sequence
/// (aligned with the regressor rows).
pub fn fit_transfer_map_state(
    w: &DMatrix<f64>,
    inputs: &[DVector<f64>],
    vrd: &VectorRelativeDegree,
    state_dim: usize,
) -> Result<TransferMap> {
    let p = vrd.degrees().len();
    if w.ncols() != state_dim + p {
        return Err(Error::DimensionMismatch {
            context: "state regressor",
            expected: format!("{} columns", state_dim + p),
            found: format!("{}", w.ncols()),
        });
    }
    if inputs.len() < w.nrows() {
        return Err(Error::InvalidParameter {
            name: "inputs",
            reason: format!("need {} samples, got {}", w.nrows(), inputs.len()),
        });
    }
    let targets = per_channel_targets(inputs, w.nrows(), 0, p);
    let (thetas, diagnostics) = least_squares(w, &targets)?;
    Ok(TransferMap {
        variant: MapVariant::State,
        degrees: vrd.degrees().to_vec(),
        n_bar: None,
        feedback_dim: state_dim,
        channels: p,
        theta: thetas.iter().map(|t| t.iter().copied().collect()).collect(),
        diagnostics,
    })
}

/// Fit the input/output-based map. `inputs` must be the same sequence the
/// regressor was built from; rows start at sample `N̄`.
pub fn fit_transfer_map_io(
    w: &DMatrix<f64>,
    inputs: &[DVector<f64>],
    vrd: &VectorRelativeDegree,
    n_bar: usize,
) -> Result<TransferMap> {
    let p = vrd.degrees().len();
    if w.ncols() != 2 * p * n_bar + p {
        return Err(Error::DimensionMismatch {
            context: "io regressor",
            expected: format!("{} columns", 2 * p * n_bar + p),
            found: format!("{}", w.ncols()),
        });
    }
    if inputs.len() < n_bar + w.nrows() {
        return Err(Error::InvalidParameter {
            name: "inputs",
            reason: format!("need {} samples, got {}", n_bar + w.nrows(), inputs.len()),
        });
    }
    let targets = per_channel_targets(inputs, w.nrows(), n_bar, p);
    let (thetas, diagnostics) = least_squares(w, &targets)?;
    Ok(TransferMap {
        variant: MapVariant::InputOutput,
        degrees: vrd.degrees().to_vec(),
        n_bar: Some(n_bar),
        feedback_dim: 2 * p * n_bar,
        channels: p,
        theta: thetas.iter().map(|t| t.iter().copied().collect()).collect(),
        diagnostics,
    })
}

impl TransferMap {
    pub fn variant(&self) -> MapVariant {
        self.variant
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn n_bar(&self) -> Option<usize> {
        self.n_bar
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn feedback_dim(&self) -> usize {
        self.feedback_dim
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn theta(&self, channel: usize) -> DVector<f64> {
        DVector::from_vec(self.theta[channel].clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: TransferMap = serde_json::from_str(text)?;
        let expected = map.feedback_dim + map.channels;
        if map.theta.len() != map.channels || map.theta.iter().any(|t| t.len() != expected) {
            return Err(Error::InvalidModel(
                "transfer map parameter lengths inconsistent with geometry".into(),
            ));
        }
        if map
            .theta
            .iter()
            .flat_map(|t| t.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidModel("non-finite transfer parameters".into()));
        }
        Ok(map)
    }
}

/// Feedback source for online application: supplies the row part that is not
/// the desired trajectory (the state, or the stacked input/output windows).
pub trait TransferFeedback {
    /// Called once per step, in order. `previous_input` is the input the map
    /// emitted at step `k-1` (`None` at the first step). Returning `None`
    /// aborts the application.
    fn sample(&mut self, step: usize, previous_input: Option<&DVector<f64>>)
        -> Option<DVector<f64>>;
}

/// Closed-loop state feedback simulated on a model: advances the model with
/// each emitted input and hands back the current state.
pub struct SimulatedStateFeedback<'a> {
    model: &'a StateSpaceModel,
    x: DVector<f64>,
}

impl<'a> SimulatedStateFeedback<'a> {
    pub fn new(model: &'a StateSpaceModel) -> Self {
        let x = DVector::zeros(model.state_dim());
        Self { model, x }
    }
}

impl TransferFeedback for SimulatedStateFeedback<'_> {
    fn sample(&mut self, _step: usize, previous_input: Option<&DVector<f64>>) -> Option<DVector<f64>> {
        if let Some(u) = previous_input {
            self.x = self.model.step(&self.x, u);
        }
        Some(self.x.clone())
    }
}

/// Measurement-only feedback simulated on a model: maintains the past
/// input/output windows (zero-padded before the start, which is exact for
/// trials beginning at rest).
pub struct SimulatedIoFeedback<'a> {
    model: &'a StateSpaceModel,
    x: DVector<f64>,
    u_hist: std::collections::VecDeque<DVector<f64>>,
    y_hist: std::collections::VecDeque<DVector<f64>>,
    n_bar: usize,
}

impl<'a> SimulatedIoFeedback<'a> {
    pub fn new(model: &'a StateSpaceModel, n_bar: usize) -> Self {
        let p = model.channels();
        Self {
            model,
            x: DVector::zeros(model.state_dim()),
            u_hist: std::collections::VecDeque::from(vec![DVector::zeros(p); n_bar]),
            y_hist: std::collections::VecDeque::from(vec![DVector::zeros(p); n_bar]),
            n_bar,
        }
    }
}

impl TransferFeedback for SimulatedIoFeedback<'_> {
    fn sample(&mut self, _step: usize, previous_input: Option<&DVector<f64>>) -> Option<DVector<f64>> {
        if let Some(u) = previous_input {
            // The window at step k holds y(k-1), read before advancing.
            self.y_hist.push_front(self.model.output(&self.x));
            self.y_hist.pop_back();
            self.x = self.model.step(&self.x, u);
            self.u_hist.push_front(u.clone());
            self.u_hist.pop_back();
        }
        let p = self.model.channels();
        let mut part = DVector::zeros(2 * p * self.n_bar);
        for (j, u) in self.u_hist.iter().enumerate() {
            part.rows_mut(j * p, p).copy_from(u);
        }
        for (j, y) in self.y_hist.iter().enumerate() {
            part.rows_mut(self.n_bar * p + j * p, p).copy_from(y);
        }
        Some(part)
    }
}

/// Apply a fitted map to a new desired trajectory, step by step against a
/// feedback source. Emits `y_desired_new.len() − max rⱼ` inputs.
pub fn apply_transfer_map_online<F: TransferFeedback>(
    map: &TransferMap,
    y_desired_new: &[DVector<f64>],
    feedback: &mut F,
) -> Result<Vec<DVector<f64>>> {
    let p = map.channels;
    let max_r = map.degrees.iter().copied().max().unwrap_or(1);
    if y_desired_new.len() <= max_r {
        return Err(Error::InvalidParameter {
            name: "y_desired_new",
            reason: format!("need more than {max_r} samples"),
        });
    }
    if y_desired_new.iter().any(|s| s.len() != p) {
        return Err(Error::DimensionMismatch {
            context: "desired trajectory",
            expected: format!("{p}-channel samples"),
            found: "mismatched sample width".into(),
        });
    }
    let thetas: Vec<DVector<f64>> = (0..p).map(|ch| map.theta(ch)).collect();
    let n_inputs = y_desired_new.len() - max_r;
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(n_inputs);
    for k in 0..n_inputs {
        let prev = out.last();
        let part = feedback
            .sample(k, prev)
            .ok_or(Error::MissingFeedback { step: k })?;
        if part.len() != map.feedback_dim {
            return Err(Error::DimensionMismatch {
                context: "feedback sample",
                expected: format!("{}", map.feedback_dim),
                found: format!("{} at step {k}", part.len()),
            });
        }
        let mut row = DVector::zeros(map.feedback_dim + p);
        row.rows_mut(0, map.feedback_dim).copy_from(&part);
        let shifted = shifted_desired(y_desired_new, &map.degrees, k);
        row.rows_mut(map.feedback_dim, p).copy_from(&shifted);
        let u = DVector::from_fn(p, |ch, _| row.dot(&thetas[ch]));
        out.push(u);
    }
    Ok(out)
}

/// Carry a learned input from one reference model to another: replay the
/// source's realized output, then invert the target so it reproduces that
/// same output. With identical models this is the identity (up to rounding);
/// with different models the target's closed loop matches the source's
/// realized output from sample `max rᵢ` on.
pub fn map_between_reference_models(
    u_learned: &[DVector<f64>],
    ref_source: &StateSpaceModel,
    ref_target: &StateSpaceModel,
) -> Result<Vec<DVector<f64>>> {
    let p = ref_source.channels();
    if ref_target.channels() != p {
        return Err(Error::DimensionMismatch {
            context: "reference models",
            expected: format!("{p} channels"),
            found: format!("{}", ref_target.channels()),
        });
    }
    if u_learned.is_empty() {
        return Err(Error::InvalidParameter {
            name: "u_learned",
            reason: "empty input sequence".into(),
        });
    }
    let vrd_target = vector_relative_degree(ref_target, DEFAULT_MARKOV_TOL)?;
    let max_rt = vrd_target.max_degree();

    // Source closed-loop output under the learned input, extended past the
    // end by holding the final input.
    let sim = ref_source.simulate(u_learned, &DVector::zeros(ref_source.state_dim()))?;
    let mut desired = Vec::with_capacity(1 + sim.outputs.len() + max_rt);
    desired.push(DVector::zeros(p));
    desired.extend(sim.outputs.iter().cloned());
    let mut x = sim.states.last().expect("non-empty simulation").clone();
    let u_hold = u_learned.last().expect("non-empty input").clone();
    for _ in 0..max_rt {
        x = ref_source.step(&x, &u_hold);
        desired.push(ref_source.output(&x));
    }

    let tracked = perfect_tracking_input(
        ref_target,
        &vrd_target,
        &desired,
        &DVector::zeros(ref_target.state_dim()),
    )?;
    Ok(tracked.inputs.into_iter().take(u_learned.len()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::discretize_reference;
    use crate::testkit::{random_smooth_trajectory, system_with_structure, StructureSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_3axis(dt: f64) -> StateSpaceModel {
        discretize_reference(&[2.0, 2.0, 1.5], &[5.0, 5.0, 4.0], dt).unwrap()
    }

    #[test]
    fn zero_trajectory_needs_zero_input() {
        let model = reference_3axis(0.01);
        let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        let desired = vec![DVector::zeros(3); 50];
        let pt =
            perfect_tracking_input(&model, &vrd, &desired, &DVector::zeros(model.state_dim()))
                .unwrap();
        assert!(pt.inputs.iter().all(|u| u.amax() == 0.0));
        assert!(pt.outputs.iter().all(|y| y.amax() == 0.0));
    }

    #[test]
    fn sinusoid_is_tracked_exactly_after_the_degree_delay() {
        let model = reference_3axis(0.01);
        let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        let n = 400;
        let desired: Vec<DVector<f64>> = (0..n)
            .map(|k| {
                let t = k as f64 * 0.01;
                DVector::from_vec(vec![
                    (2.0 * t).sin(),
                    0.5 * (3.0 * t + 0.4).sin(),
                    0.3 * (1.5 * t).cos() - 0.3,
                ])
            })
            .collect();
        let pt =
            perfect_tracking_input(&model, &vrd, &desired, &DVector::zeros(model.state_dim()))
                .unwrap();
        for (k, y) in pt.outputs.iter().enumerate() {
            let sample = k + 1;
            for i in 0..3 {
                if sample >= vrd.degrees()[i] {
                    let err = (y[i] - desired[sample][i]).abs();
                    assert!(err < 1e-9, "axis {i} sample {sample}: err {err}");
                }
            }
        }
    }

    #[test]
    fn internal_state_stays_bounded_on_minimum_phase_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let spec = StructureSpec {
            degrees: vec![2],
            zero_poles: vec![0.5],
            transform: true,
        };
        let sys = system_with_structure(&mut rng, &spec, 0.01).unwrap();
        let vrd = vector_relative_degree(&sys.model, DEFAULT_MARKOV_TOL).unwrap();
        let n = 10_000;
        let desired = random_smooth_trajectory(&mut rng, 1, n + 2, 0.01);
        let sup: f64 = desired.iter().map(|s| s.amax()).fold(0.0, f64::max);
        let pt = perfect_tracking_input(
            &sys.model,
            &vrd,
            &desired,
            &DVector::zeros(sys.model.state_dim()),
        )
        .unwrap();
        let max_state = pt.states.iter().map(|x| x.norm()).fold(0.0, f64::max);
        assert!(
            max_state < 100.0 * sup.max(1.0),
            "state grew to {max_state} for sup {sup}"
        );
    }

    #[test]
    fn window_shapes_follow_the_degree_geometry() {
        // p = 1, r = (1): row a = [xᵀ(a), y*(a+1)].
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = StructureSpec {
            degrees: vec![1],
            zero_poles: vec![0.3],
            transform: false,
        };
        let sys = system_with_structure(&mut rng, &spec, 0.05).unwrap();
        let vrd = vector_relative_degree(&sys.model, DEFAULT_MARKOV_TOL).unwrap();
        let desired = random_smooth_trajectory(&mut rng, 1, 21, 0.05);
        let pt = perfect_tracking_input(
            &sys.model,
            &vrd,
            &desired,
            &DVector::zeros(sys.model.state_dim()),
        )
        .unwrap();
        let w = build_window_state(&pt.states, &desired, &vrd).unwrap();
        // N = 20, max r = 1, so N_r = 19 and rows = 20.
        assert_eq!(w.nrows(), 20);
        assert_eq!(w.ncols(), sys.model.state_dim() + 1);
        assert_eq!(w[(3, sys.model.state_dim())], desired[4][0]);

        // Documented shape case: N = 600, n = 6, p = 3, r = (1,1,2) → 599×9.
        let degrees = [1usize, 1, 2];
        let n_r = 600 - 2;
        assert_eq!(n_r + 1, 599);
        let _ = degrees;
    }

    #[test]
    fn fit_recovers_synthetic_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = reference_3axis(0.01);
        let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        let n = model.state_dim();
        let p = 3;
        let desired = random_smooth_trajectory(&mut rng, p, 200, 0.01);
        let pt = perfect_tracking_input(&model, &vrd, &desired, &DVector::zeros(n)).unwrap();
        let w = build_window_state(&pt.states, &desired, &vrd).unwrap();
        assert_eq!(crate::lti::numerical_rank(&w), w.ncols(), "regressor rank");
        let map = fit_transfer_map_state(&w, &pt.inputs, &vrd, n).unwrap();

        // Ground truth: u(k) = A₀⁻¹(−S x + shifted), so θᵢ stacks row i of
        // [−A₀⁻¹S | A₀⁻¹].
        let a0_inv = vrd.decoupling_matrix().clone().try_inverse().unwrap();
        let mut stack = DMatrix::<f64>::zeros(p, n);
        for (i, &ri) in vrd.degrees().iter().enumerate() {
            let mut row = model.c().row(i).into_owned();
            for _ in 0..ri {
                row *= model.a();
            }
            stack.row_mut(i).copy_from(&row);
        }
        let state_block = -&a0_inv * &stack;
        for i in 0..p {
            let theta = map.theta(i);
            for j in 0..n {
                assert!(
                    (theta[j] - state_block[(i, j)]).abs() < 1e-8,
                    "channel {i} state coeff {j}"
                );
            }
            for j in 0..p {
                assert!((theta[n + j] - a0_inv[(i, j)]).abs() < 1e-8);
            }
        }
        assert!(map.diagnostics().residual_norm < 1e-9);
        assert!(!map.diagnostics().rank_deficient);
    }

    #[test]
    fn zero_inputs_give_zero_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = reference_3axis(0.01);
        let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        let desired = random_smooth_trajectory(&mut rng, 3, 80, 0.01);
        let pt =
            perfect_tracking_input(&model, &vrd, &desired, &DVector::zeros(model.state_dim()))
                .unwrap();
        let w = build_window_state(&pt.states, &desired, &vrd).unwrap();
        let zeros = vec![DVector::zeros(3); pt.inputs.len()];
        let map = fit_transfer_map_state(&w, &zeros, &vrd, model.state_dim()).unwrap();
        for i in 0..3 {
            assert_eq!(map.theta(i).amax(), 0.0);
        }
    }

    #[test]
    fn map_fit_on_one_trajectory_reproduces_another() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = reference_3axis(0.01);
        let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        let n = model.state_dim();
        let traj_a = random_smooth_trajectory(&mut rng, 3, 250, 0.01);
        let traj_b = random_smooth_trajectory(&mut rng, 3, 250, 0.01);

        let pt_a = perfect_tracking_input(&model, &vrd, &traj_a, &DVector::zeros(n)).unwrap();
        let w = build_window_state(&pt_a.states, &traj_a, &vrd).unwrap();
        let map = fit_transfer_map_state(&w, &pt_a.inputs, &vrd, n).unwrap();

        let mut feedback = SimulatedStateFeedback::new(&model);
        let u_new = apply_transfer_map_online(&map, &traj_b, &mut feedback).unwrap();
        let pt_b = perfect_tracking_input(&model, &vrd, &traj_b, &DVector::zeros(n)).unwrap();
        let scale: f64 = pt_b.inputs.iter().map(|u| u.amax()).fold(0.0, f64::max);
        for (k, (u, expect)) in u_new.iter().zip(&pt_b.inputs).enumerate() {
            let err = (u - expect).amax();
            assert!(err < 1e-6 * scale.max(1.0), "step {k}: err {err}");
        }
    }

    #[test]
    fn self_application_reproduces_the_learned_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = reference_3axis(0.01);
        let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        let n = model.state_dim();
        let traj = random_smooth_trajectory(&mut rng, 3, 160, 0.01);
        let pt = perfect_tracking_input(&model, &vrd, &traj, &DVector::zeros(n)).unwrap();
        let w = build_window_state(&pt.states, &traj, &vrd).unwrap();
        let map = fit_transfer_map_state(&w, &pt.inputs, &vrd, n).unwrap();
        let mut feedback = SimulatedStateFeedback::new(&model);
        let u_self = apply_transfer_map_online(&map, &traj, &mut feedback).unwrap();
        for (u, expect) in u_self.iter().zip(&pt.inputs) {
            assert!((u - expect).amax() < 1e-6);
        }
    }

    #[test]
    fn io_and_state_variants_agree_on_observable_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..5 {
            let sys = crate::testkit::random_observable_system(&mut rng, 3, 7, 0.02);
            let model = &sys.model;
            let p = model.channels();
            let vrd = vector_relative_degree(model, DEFAULT_MARKOV_TOL).unwrap();
            let n = model.state_dim();
            let n_bar = n;
            // Rich excitation keeps the shifted-window columns independent.
            let traj_a = crate::testkit::random_excited_trajectory(&mut rng, p, 400, 0.02);
            let traj_b = random_smooth_trajectory(&mut rng, p, 300, 0.02);

            let pt_a = perfect_tracking_input(model, &vrd, &traj_a, &DVector::zeros(n)).unwrap();
            // Measured outputs including the at-rest sample.
            let mut outputs = vec![DVector::zeros(p)];
            outputs.extend(pt_a.outputs.iter().cloned());

            let w_state = build_window_state(&pt_a.states, &traj_a, &vrd).unwrap();
            let state_map = fit_transfer_map_state(&w_state, &pt_a.inputs, &vrd, n).unwrap();

            let w_io = build_window_io(&pt_a.inputs, &outputs, &traj_a, &vrd, n_bar).unwrap();
            let io_map = fit_transfer_map_io(&w_io, &pt_a.inputs, &vrd, n_bar).unwrap();

            let mut fb_state = SimulatedStateFeedback::new(model);
            let u_state = apply_transfer_map_online(&state_map, &traj_b, &mut fb_state).unwrap();
            let mut fb_io = SimulatedIoFeedback::new(model, n_bar);
            let u_io = apply_transfer_map_online(&io_map, &traj_b, &mut fb_io).unwrap();
            let scale: f64 = u_state.iter().map(|u| u.amax()).fold(1.0, f64::max);
            for (k, (a, b)) in u_state.iter().zip(&u_io).enumerate() {
                let err = (a - b).amax();
                assert!(err < 1e-6 * scale, "trial {trial} step {k}: io/state gap {err}");
            }
        }
    }

    #[test]
    fn predicted_inputs_are_invariant_to_state_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = StructureSpec {
            degrees: vec![1, 2],
            zero_poles: vec![0.4, -0.5],
            transform: false,
        };
        let sys = system_with_structure(&mut rng, &spec, 0.02).unwrap();
        let model = sys.model.clone();
        let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        let n = model.state_dim();
        let t = crate::testkit::random_well_conditioned_matrix(&mut rng, n);
        let transformed = model.transformed(&t).unwrap();
        let vrd_t = vector_relative_degree(&transformed, DEFAULT_MARKOV_TOL).unwrap();

        let traj_a = random_smooth_trajectory(&mut rng, 2, 220, 0.02);
        let traj_b = random_smooth_trajectory(&mut rng, 2, 220, 0.02);

        let fit_and_apply = |m: &StateSpaceModel, vrd: &VectorRelativeDegree| {
            let pt = perfect_tracking_input(m, vrd, &traj_a, &DVector::zeros(n)).unwrap();
            let w = build_window_state(&pt.states, &traj_a, vrd).unwrap();
            let map = fit_transfer_map_state(&w, &pt.inputs, vrd, n).unwrap();
            let mut fb = SimulatedStateFeedback::new(m);
            apply_transfer_map_online(&map, &traj_b, &mut fb).unwrap()
        };
        let u_orig = fit_and_apply(&model, &vrd);
        let u_trans = fit_and_apply(&transformed, &vrd_t);
        for (a, b) in u_orig.iter().zip(&u_trans) {
            assert!((a - b).amax() < 1e-6);
        }
    }

    #[test]
    fn identical_reference_models_map_to_the_same_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = reference_3axis(0.01);
        let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        let traj = random_smooth_trajectory(&mut rng, 3, 150, 0.01);
        let pt =
            perfect_tracking_input(&model, &vrd, &traj, &DVector::zeros(model.state_dim()))
                .unwrap();
        let mapped = map_between_reference_models(&pt.inputs, &model, &model).unwrap();
        assert_eq!(mapped.len(), pt.inputs.len());
        for (a, b) in mapped.iter().zip(&pt.inputs) {
            assert!((a - b).amax() < 1e-8);
        }
    }

    #[test]
    fn distinct_reference_models_reproduce_the_source_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let dt = 0.01;
        let source = reference_3axis(dt);
        let target = discretize_reference(&[2.5, 1.8, 2.0], &[8.0, 6.0, 7.0], dt).unwrap();
        let vrd_t = vector_relative_degree(&target, DEFAULT_MARKOV_TOL).unwrap();
        let traj = random_smooth_trajectory(&mut rng, 3, 200, dt);
        let pt =
            perfect_tracking_input(&source, &vrd_t, &traj, &DVector::zeros(source.state_dim()));
        // Use an arbitrary smooth learned input instead: the map only needs
        // the source rollout, not exact tracking.
        drop(pt);
        let u_learned = random_smooth_trajectory(&mut rng, 3, 180, dt);
        let y_source = source
            .simulate(&u_learned, &DVector::zeros(source.state_dim()))
            .unwrap()
            .outputs;
        let mapped = map_between_reference_models(&u_learned, &source, &target).unwrap();
        let y_target = target
            .simulate(&mapped, &DVector::zeros(target.state_dim()))
            .unwrap()
            .outputs;
        let max_rt = vrd_t.max_degree();
        for k in max_rt..y_source.len() {
            // Target output at sample k+1 equals source output y(k+1) once the
            // causality delay has passed.
            let err = (&y_target[k] - &y_source[k]).amax();
            assert!(err < 1e-6, "sample {k}: err {err}");
        }
    }

    #[test]
    fn dc_gains_agree_under_constant_input() {
        let dt = 0.01;
        let source = reference_3axis(dt);
        let target = discretize_reference(&[1.0, 1.0, 1.0], &[8.0, 8.0, 8.0], dt).unwrap();
        let u = vec![DVector::from_element(3, 0.7); 1200];
        let mapped = map_between_reference_models(&u, &source, &target).unwrap();
        let y_s = source
            .simulate(&u, &DVector::zeros(source.state_dim()))
            .unwrap()
            .outputs;
        let y_t = target
            .simulate(&mapped, &DVector::zeros(target.state_dim()))
            .unwrap()
            .outputs;
        let last_s = y_s.last().unwrap();
        let last_t = y_t.last().unwrap();
        assert!((last_s - last_t).amax() < 1e-6);
        for i in 0..3 {
            assert!((last_s[i] - 0.7).abs() < 1e-6);
        }
    }

    #[test]
    fn transfer_map_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = reference_3axis(0.01);
        let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        let traj = random_smooth_trajectory(&mut rng, 3, 120, 0.01);
        let pt =
            perfect_tracking_input(&model, &vrd, &traj, &DVector::zeros(model.state_dim()))
                .unwrap();
        let w = build_window_state(&pt.states, &traj, &vrd).unwrap();
        let map = fit_transfer_map_state(&w, &pt.inputs, &vrd, model.state_dim()).unwrap();
        let text = map.to_json().unwrap();
        let back = TransferMap::from_json(&text).unwrap();
        assert_eq!(back.variant(), MapVariant::State);
        assert_eq!(back.degrees(), map.degrees());
        for i in 0..3 {
            assert_eq!(map.theta(i), back.theta(i));
        }
    }

    #[test]
    fn missing_feedback_aborts_with_the_step_index() {
        struct Flaky(usize);
        impl TransferFeedback for Flaky {
            fn sample(&mut self, step: usize, _prev: Option<&DVector<f64>>) -> Option<DVector<f64>> {
                if step >= self.0 {
                    None
                } else {
                    Some(DVector::zeros(6))
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = reference_3axis(0.01);
        let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        let traj = random_smooth_trajectory(&mut rng, 3, 60, 0.01);
        let pt =
            perfect_tracking_input(&model, &vrd, &traj, &DVector::zeros(model.state_dim()))
                .unwrap();
        let w = build_window_state(&pt.states, &traj, &vrd).unwrap();
        let map = fit_transfer_map_state(&w, &pt.inputs, &vrd, model.state_dim()).unwrap();
        match apply_transfer_map_online(&map, &traj, &mut Flaky(5)) {
            Err(Error::MissingFeedback { step }) => assert_eq!(step, 5),
            other => panic!("expected missing-feedback abort, got {other:?}"),
        }
    }
}
