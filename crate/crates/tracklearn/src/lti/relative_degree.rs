//! Vector relative degree: analytic computation from the Markov parameters
//! and experimental estimation from step-response records.

use nalgebra::{DMatrix, DVector};

use super::model::{numerical_rank, StateSpaceModel};
use crate::error::{Error, Result};

/// Default relative tolerance for declaring a Markov parameter zero.
pub const DEFAULT_MARKOV_TOL: f64 = 1e-9;

/// Per-output input-to-output sample delays `(r₁, …, r_p)` together with the
/// decoupling matrix whose `(i, j)` entry is `Cᵢ A^(rᵢ−1) Bⱼ`.
///
/// The decoupling matrix is nonsingular by construction; its inverse is what
/// makes exact output tracking possible.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorRelativeDegree {
    r: Vec<usize>,
    decoupling: DMatrix<f64>,
}

impl VectorRelativeDegree {
    pub(crate) fn from_parts(r: Vec<usize>, decoupling: DMatrix<f64>, n: usize) -> Result<Self> {
        let total: usize = r.iter().sum();
        if total > n {
            return Err(Error::UndefinedRelativeDegree(format!(
                "total degree {total} exceeds state dimension {n}"
            )));
        }
        if r.contains(&0) {
            return Err(Error::UndefinedRelativeDegree(
                "every per-output degree must be at least 1".into(),
            ));
        }
        let p = r.len();
        if decoupling.nrows() != p || decoupling.ncols() != p {
            return Err(Error::DimensionMismatch {
                context: "decoupling matrix",
                expected: format!("{p}x{p}"),
                found: format!("{}x{}", decoupling.nrows(), decoupling.ncols()),
            });
        }
        if numerical_rank(&decoupling) < p {
            return Err(Error::UndefinedRelativeDegree(
                "decoupling matrix is singular".into(),
            ));
        }
        Ok(Self { r, decoupling })
    }

    /// Per-output degrees `(r₁, …, r_p)`.
    pub fn degrees(&self) -> &[usize] {
        &self.r
    }

    pub fn decoupling_matrix(&self) -> &DMatrix<f64> {
        &self.decoupling
    }

    /// Sum of the per-output degrees.
    pub fn total(&self) -> usize {
        self.r.iter().sum()
    }

    /// Largest per-output degree.
    pub fn max_degree(&self) -> usize {
        *self.r.iter().max().expect("non-empty degree vector")
    }
}

/// Smallest vector relative degree of `model`, found by scanning the Markov
/// parameters `C A^k B`.
///
/// An entry is declared zero when its magnitude falls below
/// `tol · ‖C‖·‖A‖ᵏ·‖B‖` (Frobenius norms), so `tol` acts as a relative
/// threshold; [`DEFAULT_MARKOV_TOL`] is a sensible default. Fails when some
/// output never responds within `rᵢ ≤ n` or when the decoupling matrix turns
/// out singular.
pub fn vector_relative_degree(
    model: &StateSpaceModel,
    tol: f64,
) -> Result<VectorRelativeDegree> {
    if tol < 0.0 {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: "must be nonnegative".into(),
        });
    }
    let n = model.state_dim();
    let p = model.channels();
    let norm_a = model.a().norm();
    let scale0 = model.c().norm() * model.b().norm();

    // Markov parameters C A^k B for k = 0..n-1; by Cayley–Hamilton a row that
    // is zero through k = n-1 stays zero forever.
    let mut markov = Vec::with_capacity(n);
    let mut akb = model.b().clone();
    for _ in 0..n {
        markov.push(model.c() * &akb);
        akb = model.a() * akb;
    }

    let mut r = vec![0usize; p];
    let mut decoupling = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let mut scale = scale0;
        let mut found = false;
        for (k, mk) in markov.iter().enumerate() {
            let threshold = tol * scale.max(f64::MIN_POSITIVE);
            if (0..p).any(|j| mk[(i, j)].abs() > threshold) {
                r[i] = k + 1;
                decoupling.row_mut(i).copy_from(&mk.row(i));
                found = true;
                break;
            }
            scale *= norm_a;
        }
        if !found {
            return Err(Error::UndefinedRelativeDegree(format!(
                "output {i} never responds to any input within n = {n} samples"
            )));
        }
    }
    VectorRelativeDegree::from_parts(r, decoupling, n)
}

/// One step-response experiment: a step of `magnitude` on one input channel,
/// applied at sample 0 from rest, with all `p` outputs recorded.
#[derive(Debug, Clone)]
pub struct StepExperimentRecord {
    /// Index of the stepped input channel.
    pub input_channel: usize,
    /// Step height.
    pub magnitude: f64,
    /// Output samples `y(0), …, y(K)`, each a `p`-vector; `y(0)` must be the
    /// at-rest output (zero).
    pub outputs: Vec<DVector<f64>>,
    pub dt: f64,
}

impl StepExperimentRecord {
    /// Generate the record by simulating `model` from rest under a step input.
    pub fn simulate(
        model: &StateSpaceModel,
        input_channel: usize,
        magnitude: f64,
        samples: usize,
    ) -> Result<Self> {
        let p = model.channels();
        if input_channel >= p {
            return Err(Error::InvalidParameter {
                name: "input_channel",
                reason: format!("{input_channel} out of range for {p} channels"),
            });
        }
        let mut u = DVector::zeros(p);
        u[input_channel] = magnitude;
        let inputs = vec![u; samples];
        let sim = model.simulate(&inputs, &DVector::zeros(model.state_dim()))?;
        let mut outputs = Vec::with_capacity(samples + 1);
        outputs.push(DVector::zeros(p));
        outputs.extend(sim.outputs);
        Ok(Self {
            input_channel,
            magnitude,
            outputs,
            dt: model.dt(),
        })
    }
}

/// Result of [`estimate_relative_degree_from_steps`].
#[derive(Debug, Clone)]
pub struct StepEstimate {
    /// Estimated per-output degrees.
    pub r: Vec<usize>,
    /// First-response matrix: entry `(i, j)` is `yᵢ(rᵢ)` from experiment `j`.
    pub y_r: DMatrix<f64>,
    /// Whether the first-response matrix has full rank — the indirect check
    /// that the decoupling matrix is invertible.
    pub y_r_full_rank: bool,
}

impl StepEstimate {
    /// Recover a [`VectorRelativeDegree`] from the estimate.
    ///
    /// Dividing column `j` of the first-response matrix by the step height of
    /// experiment `j` yields exactly `Cᵢ A^(rᵢ−1) Bⱼ`, so this reproduces
    /// the decoupling matrix (up to measurement accuracy). Fails when the
    /// first-response matrix is rank-deficient.
    pub fn to_vector_relative_degree(&self, magnitudes: &[f64], n: usize) -> Result<VectorRelativeDegree> {
        let p = self.r.len();
        if magnitudes.len() != p {
            return Err(Error::DimensionMismatch {
                context: "step magnitudes",
                expected: format!("{p}"),
                found: format!("{}", magnitudes.len()),
            });
        }
        let mut a0 = self.y_r.clone();
        for (j, &mag) in magnitudes.iter().enumerate() {
            if mag == 0.0 {
                return Err(Error::InvalidParameter {
                    name: "magnitudes",
                    reason: format!("experiment {j} used a zero step"),
                });
            }
            let mut col = a0.column_mut(j);
            col /= mag;
        }
        VectorRelativeDegree::from_parts(self.r.clone(), a0, n)
    }
}

/// Estimate the vector relative degree from `p` step experiments, one per
/// input channel.
///
/// `rᵢ` is the smallest sample index at which output `i` exceeds
/// `tol · |step magnitude|` in any experiment. The first-response matrix and
/// its rank are reported as the indirect decoupling-matrix check; rank
/// deficiency is flagged, not fatal.
pub fn estimate_relative_degree_from_steps(
    records: &[StepExperimentRecord],
    tol: f64,
) -> Result<StepEstimate> {
    let p = records.len();
    if p == 0 {
        return Err(Error::InvalidParameter {
            name: "records",
            reason: "need at least one experiment".into(),
        });
    }
    let mut seen = vec![false; p];
    let dt = records[0].dt;
    for rec in records {
        if rec.input_channel >= p || seen[rec.input_channel] {
            return Err(Error::InvalidParameter {
                name: "records",
                reason: format!(
                    "need exactly one experiment per input channel; channel {} duplicated or out of range",
                    rec.input_channel
                ),
            });
        }
        seen[rec.input_channel] = true;
        if (rec.dt - dt).abs() > f64::EPSILON * dt.abs() {
            return Err(Error::InvalidParameter {
                name: "records",
                reason: "experiments do not share a common sample time".into(),
            });
        }
        if rec.outputs.iter().any(|y| y.len() != p) {
            return Err(Error::DimensionMismatch {
                context: "step record outputs",
                expected: format!("{p}-channel samples"),
                found: "mismatched sample width".into(),
            });
        }
    }

    // Order records by input channel so column j of Y_r is experiment j.
    let mut by_channel: Vec<&StepExperimentRecord> = records.iter().collect();
    by_channel.sort_by_key(|rec| rec.input_channel);

    let record_len = by_channel.iter().map(|rec| rec.outputs.len()).min().unwrap();
    let mut r = vec![0usize; p];
    for i in 0..p {
        let mut first = usize::MAX;
        for rec in &by_channel {
            let threshold = tol * rec.magnitude.abs().max(f64::MIN_POSITIVE);
            if let Some(k) = rec.outputs[..record_len]
                .iter()
                .position(|y| y[i].abs() > threshold)
            {
                first = first.min(k);
            }
        }
        if first == usize::MAX || first == 0 {
            // A response at sample 0 contradicts the at-rest premise.
            return Err(Error::UndetectableDegree {
                output: i,
                samples: record_len,
            });
        }
        r[i] = first;
    }

    let y_r = DMatrix::from_fn(p, p, |i, j| by_channel[j].outputs[r[i]][i]);
    let y_r_full_rank = numerical_rank(&y_r) == p;
    Ok(StepEstimate {
        r,
        y_r,
        y_r_full_rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn double_integrator(dt: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, dt]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            dt,
        )
        .unwrap()
    }

    /// p decoupled copies of the sampled double integrator.
    fn decoupled_double_integrators(p: usize, dt: f64) -> StateSpaceModel {
        let n = 2 * p;
        let mut a = DMatrix::<f64>::identity(n, n);
        let mut b = DMatrix::<f64>::zeros(n, p);
        let mut c = DMatrix::<f64>::zeros(p, n);
        for i in 0..p {
            a[(2 * i, 2 * i + 1)] = dt;
            b[(2 * i + 1, i)] = dt;
            c[(i, 2 * i)] = 1.0;
        }
        StateSpaceModel::new(a, b, c, dt).unwrap()
    }

    #[test]
    fn double_integrator_has_degree_two() {
        let dt = 0.05;
        let model = double_integrator(dt);
        let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        assert_eq!(vrd.degrees(), &[2]);
        assert_abs_diff_eq!(vrd.decoupling_matrix()[(0, 0)], dt * dt, epsilon = 1e-15);
    }

    #[test]
    fn decoupled_copies_give_uniform_degree_and_diagonal_decoupling() {
        let dt = 0.05;
        let model = decoupled_double_integrators(3, dt);
        let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        assert_eq!(vrd.degrees(), &[2, 2, 2]);
        let expect = DMatrix::<f64>::identity(3, 3) * dt * dt;
        assert!((vrd.decoupling_matrix() - expect).norm() < 1e-14);
    }

    #[test]
    fn unresponsive_output_is_rejected() {
        // Output reads a state decoupled from the input.
        let model = StateSpaceModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            0.1,
        )
        .unwrap();
        assert!(matches!(
            vector_relative_degree(&model, DEFAULT_MARKOV_TOL),
            Err(Error::UndefinedRelativeDegree(_))
        ));
    }

    #[test]
    fn step_estimate_matches_analytic_on_decoupled_model() {
        let dt = 0.05;
        let p = 2;
        let model = decoupled_double_integrators(p, dt);
        let mags = [0.7, 1.3];
        let records: Vec<_> = (0..p)
            .map(|j| StepExperimentRecord::simulate(&model, j, mags[j], 10).unwrap())
            .collect();
        let est = estimate_relative_degree_from_steps(&records, 1e-9).unwrap();
        assert_eq!(est.r, vec![2, 2]);
        assert!(est.y_r_full_rank);
        // Y_r carries dt² · magnitude on the diagonal.
        for i in 0..p {
            assert_abs_diff_eq!(est.y_r[(i, i)], dt * dt * mags[i], epsilon = 1e-12);
            for j in 0..p {
                if i != j {
                    assert_abs_diff_eq!(est.y_r[(i, j)], 0.0, epsilon = 1e-12);
                }
            }
        }
        let vrd = est.to_vector_relative_degree(&mags, model.state_dim()).unwrap();
        let analytic = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        assert_eq!(vrd.degrees(), analytic.degrees());
        assert!((vrd.decoupling_matrix() - analytic.decoupling_matrix()).norm() < 1e-10);
    }

    #[test]
    fn nonsingular_cb_is_estimated_as_first_sample_response() {
        // CB = I: every output responds one sample after any input.
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.5]);
        let model = StateSpaceModel::new(a, DMatrix::identity(2, 2), DMatrix::identity(2, 2), 0.1)
            .unwrap();
        let records: Vec<_> = (0..2)
            .map(|j| StepExperimentRecord::simulate(&model, j, 1.0, 6).unwrap())
            .collect();
        let est = estimate_relative_degree_from_steps(&records, 1e-9).unwrap();
        assert_eq!(est.r, vec![1, 1]);
        assert!(est.y_r_full_rank);
    }

    #[test]
    fn silent_channel_yields_undetectable_error() {
        let model = StateSpaceModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            0.1,
        )
        .unwrap();
        let records = vec![StepExperimentRecord::simulate(&model, 0, 1.0, 12).unwrap()];
        assert!(matches!(
            estimate_relative_degree_from_steps(&records, 1e-9),
            Err(Error::UndetectableDegree { output: 0, .. })
        ));
    }
}
