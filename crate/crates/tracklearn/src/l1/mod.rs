//! Extended output-feedback adaptive controller.
//!
//! The controller forces an uncertain velocity-channel plant to behave as the
//! diagonal first-order reference `Mᵢ(s) = mᵢ/(s+mᵢ)` and, with the outer
//! proportional position loop, forces position to behave as the second-order
//! reference family produced by [`discretize_reference`]. Fast adaptation
//! with a projection-bounded disturbance estimate and a low-pass-filtered
//! control law.

mod norm_condition;

pub use norm_condition::{verify_l1_norm_condition, L1NormReport};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{discretize_reference, StateSpaceModel};

/// Controller parameters. All per-axis vectors must share the axis count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L1Config {
    /// Reference-model poles `mᵢ` (rad/s).
    pub m: Vec<f64>,
    /// Control-law low-pass cutoffs `ωᵢ` (rad/s).
    pub omega: Vec<f64>,
    /// Outer-loop proportional gains `Kᵢ`.
    pub kp: Vec<f64>,
    /// Adaptation rate.
    pub gamma: f64,
    /// Projection norm bound per axis.
    pub sigma_max: Vec<f64>,
    /// Projection tolerance.
    pub eps_proj: f64,
    /// Assumed disturbance Lipschitz constant.
    pub lipschitz: f64,
    /// Controller sample time (s).
    pub dt_ctrl: f64,
}

impl L1Config {
    /// Defaults: fast adaptation with filter-bandwidth separation.
    pub fn default_for_axes(axes: usize) -> Self {
        Self {
            m: vec![5.0; axes],
            omega: vec![25.0; axes],
            kp: vec![2.0; axes],
            gamma: 1000.0,
            sigma_max: vec![10.0; axes],
            eps_proj: 0.1,
            lipschitz: 1.0,
            dt_ctrl: 0.01,
        }
    }

    pub fn axes(&self) -> usize {
        self.m.len()
    }

    pub fn validate(&self) -> Result<()> {
        let axes = self.axes();
        if axes == 0 {
            return Err(Error::InvalidParameter {
                name: "m",
                reason: "need at least one axis".into(),
            });
        }
        if self.omega.len() != axes || self.kp.len() != axes || self.sigma_max.len() != axes {
            return Err(Error::DimensionMismatch {
                context: "controller config",
                expected: format!("{axes} entries per per-axis field"),
                found: format!(
                    "omega {}, kp {}, sigma_max {}",
                    self.omega.len(),
                    self.kp.len(),
                    self.sigma_max.len()
                ),
            });
        }
        let positive = |name: &'static str, vals: &[f64]| -> Result<()> {
            match vals.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                Some(v) => Err(Error::InvalidParameter {
                    name,
                    reason: format!("entries must be positive and finite, got {v}"),
                }),
                None => Ok(()),
            }
        };
        positive("m", &self.m)?;
        positive("omega", &self.omega)?;
        positive("kp", &self.kp)?;
        positive("sigma_max", &self.sigma_max)?;
        positive("gamma", &[self.gamma])?;
        positive("eps_proj", &[self.eps_proj])?;
        positive("dt_ctrl", &[self.dt_ctrl])?;
        if self.lipschitz < 0.0 || !self.lipschitz.is_finite() {
            return Err(Error::InvalidParameter {
                name: "lipschitz",
                reason: "must be nonnegative and finite".into(),
            });
        }
        // The Euler adaptation step dt·Γ must stay finite.
        if !(self.dt_ctrl * self.gamma).is_finite() {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: "dt_ctrl * gamma overflows".into(),
            });
        }
        Ok(())
    }

    /// The closed-loop position reference this controller aims for:
    /// per-axis `Kᵢmᵢ/(s² + mᵢ s + Kᵢmᵢ)` under a zero-order hold.
    pub fn reference_model(&self) -> Result<StateSpaceModel> {
        discretize_reference(&self.kp, &self.m, self.dt_ctrl)
    }
}

/// Controller memory for one rollout. Construct fresh per trajectory; the
/// disturbance estimate starts at zero.
#[derive(Debug, Clone)]
pub struct L1State {
    /// Predicted plant velocity.
    pub yhat1: DVector<f64>,
    /// Adaptive disturbance estimate.
    pub sigma_hat: DVector<f64>,
    /// Low-pass filter state (equals the last command).
    pub v_state: DVector<f64>,
    /// Last issued command.
    pub u_l1: DVector<f64>,
    /// Samples executed so far.
    pub step: usize,
}

impl L1State {
    pub fn new(axes: usize) -> Self {
        Self {
            yhat1: DVector::zeros(axes),
            sigma_hat: DVector::zeros(axes),
            v_state: DVector::zeros(axes),
            u_l1: DVector::zeros(axes),
            step: 0,
        }
    }
}

/// Boundary function of the projection set:
/// `f(λ) = ((ε+1)λᵀλ − λ_max²) / (ε λ_max²)`.
pub fn projection_boundary(lambda: &DVector<f64>, lambda_max: f64, eps: f64) -> f64 {
    ((eps + 1.0) * lambda.dot(lambda) - lambda_max * lambda_max) / (eps * lambda_max * lambda_max)
}

/// Projection operator keeping adaptation updates inside the smooth convex
/// set `{λ : f(λ) ≤ 1}`.
///
/// Passes `y` through when `f(λ) < 0`, or when `f(λ) ≥ 0` with `y` pointing
/// inward; otherwise removes the outward radial component scaled by `f(λ)`.
pub fn projection(lambda: &DVector<f64>, y: &DVector<f64>, lambda_max: f64, eps: f64) -> DVector<f64> {
    let f = projection_boundary(lambda, lambda_max, eps);
    if f < 0.0 {
        return y.clone();
    }
    let grad = lambda * (2.0 * (eps + 1.0) / (eps * lambda_max * lambda_max));
    let grad_dot_y = grad.dot(y);
    if grad_dot_y <= 0.0 {
        return y.clone();
    }
    let grad_norm_sq = grad.dot(&grad);
    // f ≥ 0 implies λ ≠ 0, so the gradient cannot vanish here.
    debug_assert!(grad_norm_sq > 0.0);
    y - &grad * (grad_dot_y / grad_norm_sq * f)
}

/// One controller sample.
///
/// Sub-steps in fixed order: read measurements, update the adaptation,
/// compute the filtered control, advance the output predictor. Returns the
/// command to apply to the plant over the coming sample interval.
pub fn l1_step(
    state: &mut L1State,
    cfg: &L1Config,
    u2: &DVector<f64>,
    y1: &DVector<f64>,
    y2: &DVector<f64>,
) -> Result<DVector<f64>> {
    let p = cfg.axes();
    for (what, v) in [("u2", u2), ("y1", y1), ("y2", y2)] {
        if v.len() != p {
            return Err(Error::DimensionMismatch {
                context: "controller sample",
                expected: format!("{p}"),
                found: format!("{} in {what}", v.len()),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::ControllerFault { step: state.step });
        }
    }
    let dt = cfg.dt_ctrl;

    // Adaptation: per-axis projection of the negative prediction error. The
    // Euler step can overshoot the projection set on large transients, so
    // the iterate is pulled back to the set's outer boundary afterwards —
    // the state invariant ‖σ̂ᵢ‖ ≤ λ_max √(1+ε) holds unconditionally.
    for i in 0..p {
        let lam = DVector::from_element(1, state.sigma_hat[i]);
        let err = DVector::from_element(1, -(state.yhat1[i] - y1[i]));
        let proj = projection(&lam, &err, cfg.sigma_max[i], cfg.eps_proj);
        let bound = cfg.sigma_max[i] * (1.0 + cfg.eps_proj).sqrt();
        state.sigma_hat[i] = (state.sigma_hat[i] + dt * cfg.gamma * proj[0]).clamp(-bound, bound);
    }

    // Control law: filtered proportional-position command minus the estimate.
    for i in 0..p {
        let u1 = cfg.kp[i] * (u2[i] - y2[i]);
        let a_v = (-cfg.omega[i] * dt).exp();
        state.v_state[i] = a_v * state.v_state[i] + (1.0 - a_v) * (u1 - state.sigma_hat[i]);
    }
    state.u_l1.copy_from(&state.v_state);

    // Predictor: one pole-matched step of the reference velocity model.
    for i in 0..p {
        let a_m = (-cfg.m[i] * dt).exp();
        state.yhat1[i] =
            a_m * state.yhat1[i] + (1.0 - a_m) * (state.u_l1[i] + state.sigma_hat[i]);
    }

    state.step += 1;
    Ok(state.u_l1.clone())
}
