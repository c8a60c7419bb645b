//! Optimization-based iterative learning control in the lifted domain.
//!
//! A whole trial is one static map `ỹ = F ũ + d∞`: the repetitive
//! disturbance `d∞` is estimated across iterations by a Kalman filter, and
//! the next trial's input minimizes predicted error plus control effort,
//! optionally under linear input/output constraints.

mod qp;

pub use qp::{solve_qp, QpOptions, QpSolution};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lti::LiftedModel;
use crate::sim::tracking_error_lifted;

/// Quadratic weight: a scaled identity for the common case, or a full matrix.
#[derive(Debug, Clone)]
pub enum Weight {
    Scaled(f64),
    Dense(DMatrix<f64>),
}

impl Weight {
    fn validate(&self, dim: usize, name: &'static str, strictly_positive: bool) -> Result<()> {
        match self {
            Weight::Scaled(v) => {
                let ok = if strictly_positive { *v > 0.0 } else { *v >= 0.0 };
                if !ok || !v.is_finite() {
                    return Err(Error::InvalidParameter {
                        name,
                        reason: format!("scale must be {} and finite, got {v}",
                            if strictly_positive { "positive" } else { "nonnegative" }),
                    });
                }
            }
            Weight::Dense(m) => {
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(Error::DimensionMismatch {
                        context: "weight matrix",
                        expected: format!("{dim}x{dim}"),
                        found: format!("{}x{}", m.nrows(), m.ncols()),
                    });
                }
                let sym = (m - m.transpose()).amax();
                if sym > 1e-9 * (1.0 + m.amax()) {
                    return Err(Error::InvalidParameter {
                        name,
                        reason: "matrix must be symmetric".into(),
                    });
                }
                let min_eig = m
                    .clone()
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .fold(f64::INFINITY, |a, &b| a.min(b));
                let floor = if strictly_positive { 1e-14 } else { -1e-10 };
                if min_eig < floor {
                    return Err(Error::InvalidParameter {
                        name,
                        reason: format!("matrix not {} (min eigenvalue {min_eig})",
                            if strictly_positive { "positive definite" } else { "positive semi-definite" }),
                    });
                }
            }
        }
        Ok(())
    }
}

/// One-sided linear constraint `matrix · signal ≤ bound`.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub matrix: DMatrix<f64>,
    pub bound: DVector<f64>,
}

/// Constraint block of the learning update.
#[derive(Debug, Clone)]
pub struct IlcConstraints {
    /// Rows on the (predicted) output signal.
    pub output: Option<LinearConstraint>,
    /// Rows on the input signal.
    pub input: Option<LinearConstraint>,
    /// Interpret the output rows on absolute signals (shifted by the desired
    /// trajectory) rather than on deviations. Physical limits are absolute.
    pub on_absolute_signals: bool,
}

/// Iteration-domain estimator settings.
#[derive(Debug, Clone)]
pub struct KalmanConfig {
    /// Initial covariance: a scalar multiple of the identity or a full matrix.
    pub p0: Covariance,
    /// Per-iteration random-walk process noise (≥ 0).
    pub q_proc: f64,
    /// Measurement noise (> 0).
    pub q_meas: f64,
}

impl KalmanConfig {
    pub fn scalar(p0: f64, q_proc: f64, q_meas: f64) -> Self {
        Self {
            p0: Covariance::Scalar { value: p0, dim: 0 },
            q_proc,
            q_meas,
        }
    }
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self::scalar(1.0, 1e-4, 1e-2)
    }
}

/// Learning configuration.
#[derive(Debug, Clone)]
pub struct IlcConfig {
    /// Output-error weight (positive semi-definite).
    pub q: Weight,
    /// Input-effort weight (positive definite).
    pub r: Weight,
    pub constraints: Option<IlcConstraints>,
    pub kalman: KalmanConfig,
}

impl Default for IlcConfig {
    fn default() -> Self {
        Self {
            q: Weight::Scaled(1.0),
            r: Weight::Scaled(1e-3),
            constraints: None,
            kalman: KalmanConfig::default(),
        }
    }
}

impl IlcConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        self.q.validate(dim, "q", false)?;
        self.r.validate(dim, "r", true)?;
        if !(self.kalman.q_meas > 0.0) {
            return Err(Error::InvalidParameter {
                name: "q_meas",
                reason: "must be strictly positive".into(),
            });
        }
        if self.kalman.q_proc < 0.0 {
            return Err(Error::InvalidParameter {
                name: "q_proc",
                reason: "must be nonnegative".into(),
            });
        }
        if let Covariance::Scalar { value, .. } = self.kalman.p0 {
            if value < 0.0 {
                return Err(Error::InvalidParameter {
                    name: "p0",
                    reason: "must be nonnegative".into(),
                });
            }
        }
        if let Some(cons) = &self.constraints {
            if let Some(c) = &cons.input {
                if c.matrix.ncols() != dim || c.bound.len() != c.matrix.nrows() {
                    return Err(Error::DimensionMismatch {
                        context: "input constraint",
                        expected: format!("matrix · x {dim} with matching bound"),
                        found: format!("{}x{}, bound {}", c.matrix.nrows(), c.matrix.ncols(), c.bound.len()),
                    });
                }
            }
            if let Some(c) = &cons.output {
                if c.matrix.ncols() != dim || c.bound.len() != c.matrix.nrows() {
                    return Err(Error::DimensionMismatch {
                        context: "output constraint",
                        expected: format!("matrix · y {dim} with matching bound"),
                        found: format!("{}x{}, bound {}", c.matrix.nrows(), c.matrix.ncols(), c.bound.len()),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Iteration-domain covariance, kept in scalar form when it starts as a
/// scalar multiple of the identity (the common configuration; the update
/// preserves that form exactly).
#[derive(Debug, Clone)]
pub enum Covariance {
    Scalar { value: f64, dim: usize },
    Dense(DMatrix<f64>),
}

impl Covariance {
    fn init(cfg: &KalmanConfig, dim: usize) -> Result<Self> {
        match &cfg.p0 {
            Covariance::Scalar { value, .. } => Ok(Covariance::Scalar { value: *value, dim }),
            Covariance::Dense(m) => {
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(Error::DimensionMismatch {
                        context: "initial covariance",
                        expected: format!("{dim}x{dim}"),
                        found: format!("{}x{}", m.nrows(), m.ncols()),
                    });
                }
                Ok(Covariance::Dense(m.clone()))
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Covariance::Scalar { dim, .. } => *dim,
            Covariance::Dense(m) => m.nrows(),
        }
    }

    /// Smallest eigenvalue (exact for the scalar form).
    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            Covariance::Scalar { value, .. } => *value,
            Covariance::Dense(m) => m
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b)),
        }
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        match self {
            Covariance::Scalar { value, dim } => DMatrix::identity(*dim, *dim) * *value,
            Covariance::Dense(m) => m.clone(),
        }
    }
}

/// Estimator state: the lifted disturbance estimate with its covariance and
/// the iteration counter.
#[derive(Debug, Clone)]
pub struct IlcState {
    pub d_hat: DVector<f64>,
    pub covariance: Covariance,
    pub iteration: usize,
}

impl IlcState {
    pub fn new(dim: usize, kalman: &KalmanConfig) -> Result<Self> {
        Ok(Self {
            d_hat: DVector::zeros(dim),
            covariance: Covariance::init(kalman, dim)?,
            iteration: 0,
        })
    }
}

/// Warm-start state from a transferred input: the disturbance estimate that
/// makes the one-step-ahead error prediction vanish under `u_transfer`.
pub fn init_from_transfer(
    u_transfer: &DVector<f64>,
    f: &LiftedModel,
    kalman: &KalmanConfig,
) -> Result<IlcState> {
    let d0 = -f.apply(u_transfer)?;
    Ok(IlcState {
        d_hat: d0,
        covariance: Covariance::init(kalman, f.dim())?,
        iteration: 0,
    })
}

/// One iteration-domain Kalman step from an executed trial.
///
/// `y_measured_dev` is the lifted output deviation of the trial that applied
/// `u_applied`. The innovation is measured against the current estimate;
/// gain and covariance follow the constant-state random-walk model.
pub fn kalman_update(
    state: &mut IlcState,
    cfg: &IlcConfig,
    f: &LiftedModel,
    u_applied: &DVector<f64>,
    y_measured_dev: &DVector<f64>,
) -> Result<()> {
    let dim = f.dim();
    cfg.validate(dim)?;
    if y_measured_dev.len() != dim || state.d_hat.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "kalman update",
            expected: format!("{dim}"),
            found: format!("y {}, d {}", y_measured_dev.len(), state.d_hat.len()),
        });
    }
    let innovation = y_measured_dev - f.apply(u_applied)? - &state.d_hat;
    let (q_proc, q_meas) = (cfg.kalman.q_proc, cfg.kalman.q_meas);
    match &mut state.covariance {
        Covariance::Scalar { value, .. } => {
            *value += q_proc;
            let gain = *value / (*value + q_meas);
            state.d_hat += gain * innovation;
            *value *= 1.0 - gain;
        }
        Covariance::Dense(p) => {
            *p += DMatrix::identity(dim, dim) * q_proc;
            let s = &*p + DMatrix::identity(dim, dim) * q_meas;
            // K = P S⁻¹ with S symmetric positive definite.
            let chol = nalgebra::linalg::Cholesky::new(s).expect("S is positive definite");
            let gain = chol.solve(&p.clone()).transpose();
            state.d_hat += &gain * innovation;
            let next = (DMatrix::identity(dim, dim) - gain) * &*p;
            *p = (&next + next.transpose()) * 0.5;
        }
    }
    state.iteration += 1;
    Ok(())
}

/// Precomputed update machinery for one lifted model and weight set.
///
/// Holds the factorization of `FᵀQF + R`, so building it is the expensive
/// step; every [`IlcUpdater::next_input`] call is then two triangular
/// solves (plus the QP when constraints are active). Reusable across
/// learning sessions that share the model.
pub struct IlcUpdater {
    f: LiftedModel,
    cfg: IlcConfig,
    hessian: DMatrix<f64>,
    factor: nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>,
    /// Output-constraint rows mapped through the lifted model.
    output_rows: Option<DMatrix<f64>>,
}

impl IlcUpdater {
    pub fn new(cfg: IlcConfig, f: LiftedModel) -> Result<Self> {
        let dim = f.dim();
        cfg.validate(dim)?;
        let ftqf = match &cfg.q {
            Weight::Scaled(q) => gram_of_lifted(&f) * *q,
            Weight::Dense(qm) => f.matrix().tr_mul(&(qm * f.matrix())),
        };
        let mut hessian = ftqf;
        match &cfg.r {
            Weight::Scaled(r) => {
                for i in 0..dim {
                    hessian[(i, i)] += *r;
                }
            }
            Weight::Dense(rm) => hessian += rm,
        }
        let factor = nalgebra::linalg::Cholesky::new(hessian.clone()).ok_or_else(|| {
            Error::InvalidParameter {
                name: "weights",
                reason: "FᵀQF + R is not positive definite".into(),
            }
        })?;
        let output_rows = cfg
            .constraints
            .as_ref()
            .and_then(|c| c.output.as_ref())
            .map(|c| &c.matrix * f.matrix());
        Ok(Self {
            f,
            cfg,
            hessian,
            factor,
            output_rows,
        })
    }

    pub fn lifted(&self) -> &LiftedModel {
        &self.f
    }

    pub fn config(&self) -> &IlcConfig {
        &self.cfg
    }

    /// Next input from the current disturbance estimate: the minimizer of
    /// `(Fu + d̂)ᵀQ(Fu + d̂) + uᵀRu` subject to the configured constraints.
    /// `y_desired` is required when output constraints act on absolute
    /// signals. Returns the input and the number of active constraints.
    pub fn next_input(
        &self,
        state: &IlcState,
        y_desired: Option<&DVector<f64>>,
    ) -> Result<(DVector<f64>, usize)> {
        let dim = self.f.dim();
        if state.d_hat.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "ilc update",
                expected: format!("{dim}"),
                found: format!("{}", state.d_hat.len()),
            });
        }
        let g = match &self.cfg.q {
            Weight::Scaled(q) => self.f.matrix().tr_mul(&state.d_hat) * *q,
            Weight::Dense(qm) => self.f.matrix().tr_mul(&(qm * &state.d_hat)),
        };

        let Some(cons) = &self.cfg.constraints else {
            return Ok((self.factor.solve(&(-g)), 0));
        };

        let mut rows = 0;
        if let Some(c) = &cons.input {
            rows += c.matrix.nrows();
        }
        if let Some(c) = &cons.output {
            rows += c.matrix.nrows();
        }
        if rows == 0 {
            return Ok((self.factor.solve(&(-g)), 0));
        }
        let mut a = DMatrix::<f64>::zeros(rows, dim);
        let mut b = DVector::<f64>::zeros(rows);
        let mut at = 0;
        if let Some(c) = &cons.input {
            a.view_mut((0, 0), (c.matrix.nrows(), dim)).copy_from(&c.matrix);
            b.rows_mut(0, c.bound.len()).copy_from(&c.bound);
            at = c.matrix.nrows();
        }
        if let Some(c) = &cons.output {
            let mapped = self.output_rows.as_ref().expect("precomputed with config");
            a.view_mut((at, 0), (c.matrix.nrows(), dim)).copy_from(mapped);
            let mut shift = state.d_hat.clone();
            if cons.on_absolute_signals {
                let y_star = y_desired.ok_or(Error::InvalidParameter {
                    name: "y_desired",
                    reason: "required for absolute-signal output constraints".into(),
                })?;
                shift += y_star;
            }
            b.rows_mut(at, c.bound.len())
                .copy_from(&(&c.bound - &c.matrix * shift));
        }
        let sol = solve_qp(&self.hessian, &g, &a, &b, &QpOptions::default())?;
        Ok((sol.x, sol.active.len()))
    }
}

/// `FᵀF` of a lifted model, exploiting the block-Toeplitz structure:
/// correlation suffix sums of the impulse-response blocks instead of a dense
/// `(Np)³` product.
fn gram_of_lifted(f: &LiftedModel) -> DMatrix<f64> {
    let n = f.horizon();
    let p = f.channels();
    let markov: Vec<DMatrix<f64>> = (0..n).map(|k| f.block(k + 1, 0)).collect();
    let mut gram = DMatrix::<f64>::zeros(n * p, n * p);
    for d in 0..n {
        let mut acc = DMatrix::<f64>::zeros(p, p);
        for m in 0..n - d {
            acc += markov[m + d].transpose() * &markov[m];
            let j = n - 1 - m;
            let i = j - d;
            gram.view_mut((i * p, j * p), (p, p)).copy_from(&acc);
            if d > 0 {
                gram.view_mut((j * p, i * p), (p, p)).copy_from(&acc.transpose());
            }
        }
    }
    gram
}

/// One-shot update: builds the machinery, then solves. Prefer
/// [`IlcUpdater`] when updating repeatedly against the same model.
pub fn ilc_update(
    state: &IlcState,
    cfg: &IlcConfig,
    f: &LiftedModel,
    y_desired: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let updater = IlcUpdater::new(cfg.clone(), f.clone())?;
    Ok(updater.next_input(state, y_desired)?.0)
}

/// Everything recorded about one executed learning iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    /// Lifted input applied on this trial.
    pub input: DVector<f64>,
    /// Lifted measured output of the trial.
    pub output: DVector<f64>,
    /// Average position error against the desired trajectory.
    pub error: f64,
    /// Largest input magnitude.
    pub max_input: f64,
    /// Active constraints in the update that produced this input.
    pub active_constraints: usize,
}

/// A learning session's per-iteration records; `fault` carries the first
/// rollout or solver failure, with all earlier iterations preserved.
#[derive(Debug, Clone, Default)]
pub struct LearningRecord {
    pub iterations: Vec<IterationRecord>,
    pub fault: Option<String>,
}

/// Run trials, estimate, update — `n_iterations` times.
///
/// `rollout` executes one full trajectory under a lifted deviation input and
/// returns the lifted measured output; `y_desired` is the stacked desired
/// output `y*(1..N)`. With a warm start the first trial applies the
/// transferred input and the estimator starts from
/// [`init_from_transfer`]. Rollout or solver faults abort the session with
/// the partial record preserved.
pub fn run_ilc<R>(
    mut rollout: R,
    updater: &IlcUpdater,
    y_desired: &DVector<f64>,
    n_iterations: usize,
    warm_start: Option<&DVector<f64>>,
) -> Result<LearningRecord>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let dim = updater.lifted().dim();
    let channels = updater.lifted().channels();
    if y_desired.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "run_ilc desired output",
            expected: format!("{dim}"),
            found: format!("{}", y_desired.len()),
        });
    }
    let mut record = LearningRecord::default();
    if n_iterations == 0 {
        return Ok(record);
    }

    let kalman = &updater.config().kalman;
    let (mut state, mut u_current) = match warm_start {
        Some(u0) => {
            if u0.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "warm start",
                    expected: format!("{dim}"),
                    found: format!("{}", u0.len()),
                });
            }
            (init_from_transfer(u0, updater.lifted(), kalman)?, u0.clone())
        }
        None => (IlcState::new(dim, kalman)?, DVector::zeros(dim)),
    };

    let mut active = 0usize;
    for j in 1..=n_iterations {
        let measured = match rollout(&u_current) {
            Ok(y) => y,
            Err(e) => {
                record.fault = Some(e.to_string());
                return Ok(record);
            }
        };
        if measured.len() != dim {
            record.fault = Some(format!(
                "rollout returned {} samples, expected {dim}",
                measured.len()
            ));
            return Ok(record);
        }
        let error = tracking_error_lifted(y_desired, &measured, channels)?;
        record.iterations.push(IterationRecord {
            iteration: j,
            input: u_current.clone(),
            output: measured.clone(),
            error,
            max_input: if u_current.is_empty() { 0.0 } else { u_current.amax() },
            active_constraints: active,
        });

        let deviation = &measured - y_desired;
        if let Err(e) = kalman_update(&mut state, updater.config(), updater.lifted(), &u_current, &deviation)
        {
            record.fault = Some(e.to_string());
            return Ok(record);
        }
        if j < n_iterations {
            match updater.next_input(&state, Some(y_desired)) {
                Ok((u, act)) => {
                    u_current = u;
                    active = act;
                }
                Err(e) => {
                    record.fault = Some(e.to_string());
                    return Ok(record);
                }
            }
        }
    }
    Ok(record)
}
