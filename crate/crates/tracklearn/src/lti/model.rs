//! State-space representation and simulation of square discrete-time systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Discrete-time LTI MIMO system
///
/// ```text
/// x(k+1) = A x(k) + B u(k)
/// y(k)   = C x(k)
/// ```
///
/// with `n` states and `p` input and output channels (the system is square).
/// `B` must have full column rank and `C` full row rank; both are checked at
/// construction time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    dt: f64,
    input_labels: Vec<String>,
    output_labels: Vec<String>,
}

/// Signals produced by [`StateSpaceModel::simulate`].
#[derive(Debug, Clone)]
pub struct SimulationResult {
    /// Outputs `y(1), …, y(N)`.
    pub outputs: Vec<DVector<f64>>,
    /// States `x(0), …, x(N)`; one longer than `outputs`.
    pub states: Vec<DVector<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    dt: f64,
    input_labels: Vec<String>,
    output_labels: Vec<String>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidModel(format!("{what}: ragged or empty rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Numerical rank from singular values, relative to the largest one.
pub(crate) fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = smax * f64::EPSILON * m.nrows().max(m.ncols()) as f64;
    sv.iter().filter(|&&s| s > tol).count()
}

impl StateSpaceModel {
    /// Build a model from its matrices, with default channel labels.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, dt: f64) -> Result<Self> {
        let p = b.ncols();
        let inputs = (1..=p).map(|i| format!("u{i}")).collect();
        let outputs = (1..=p).map(|i| format!("y{i}")).collect();
        Self::with_labels(a, b, c, dt, inputs, outputs)
    }

    /// Build a model with explicit input/output channel labels.
    pub fn with_labels(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        dt: f64,
        input_labels: Vec<String>,
        output_labels: Vec<String>,
    ) -> Result<Self> {
        let n = a.nrows();
        let p = b.ncols();
        if a.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || c.ncols() != n || c.nrows() != p {
            return Err(Error::DimensionMismatch {
                context: "state-space matrices",
                expected: format!("B {n}x{p}, C {p}x{n}"),
                found: format!("B {}x{}, C {}x{}", b.nrows(), b.ncols(), c.nrows(), c.ncols()),
            });
        }
        if n < p {
            return Err(Error::InvalidModel(format!(
                "need at least as many states as channels (n={n}, p={p})"
            )));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive and finite, got {dt}"),
            });
        }
        if input_labels.len() != p || output_labels.len() != p {
            return Err(Error::InvalidModel(format!(
                "expected {p} input and output labels"
            )));
        }
        if numerical_rank(&b) < p {
            return Err(Error::InvalidModel("B is not full column rank".into()));
        }
        if numerical_rank(&c) < p {
            return Err(Error::InvalidModel("C is not full row rank".into()));
        }
        Ok(Self {
            a,
            b,
            c,
            dt,
            input_labels,
            output_labels,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Channel count `p` (inputs = outputs).
    pub fn channels(&self) -> usize {
        self.b.ncols()
    }

    pub fn input_labels(&self) -> &[String] {
        &self.input_labels
    }

    pub fn output_labels(&self) -> &[String] {
        &self.output_labels
    }

    /// Run the state recursion over an input sequence.
    ///
    /// Returns `y(1..N)` together with the full state trajectory `x(0..N)`,
    /// which downstream regression needs.
    pub fn simulate(&self, inputs: &[DVector<f64>], x0: &DVector<f64>) -> Result<SimulationResult> {
        let n = self.state_dim();
        let p = self.channels();
        if x0.len() != n {
            return Err(Error::DimensionMismatch {
                context: "simulate initial state",
                expected: format!("{n}"),
                found: format!("{}", x0.len()),
            });
        }
        let mut states = Vec::with_capacity(inputs.len() + 1);
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut x = x0.clone();
        states.push(x.clone());
        for (k, u) in inputs.iter().enumerate() {
            if u.len() != p {
                return Err(Error::DimensionMismatch {
                    context: "simulate input sample",
                    expected: format!("{p}"),
                    found: format!("{} at step {k}", u.len()),
                });
            }
            x = &self.a * &x + &self.b * u;
            states.push(x.clone());
            outputs.push(&self.c * &x);
        }
        Ok(SimulationResult { outputs, states })
    }

    /// One step of the recursion: returns `x(k+1)`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    /// Output read-out `y = C x`.
    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }

    /// Markov parameter `C A^k B`.
    pub fn markov_parameter(&self, k: usize) -> DMatrix<f64> {
        let mut p = self.b.clone();
        for _ in 0..k {
            p = &self.a * p;
        }
        &self.c * p
    }

    /// Change of state coordinates `x -> T x`, yielding `(T A T⁻¹, T B, C T⁻¹)`.
    pub fn transformed(&self, t: &DMatrix<f64>) -> Result<Self> {
        let n = self.state_dim();
        if t.nrows() != n || t.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "coordinate transform",
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", t.nrows(), t.ncols()),
            });
        }
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidModel("transform matrix is singular".into()))?;
        Self::with_labels(
            t * &self.a * &t_inv,
            t * &self.b,
            &self.c * &t_inv,
            self.dt,
            self.input_labels.clone(),
            self.output_labels.clone(),
        )
    }

    /// Serialize to the JSON model format (row-major matrix arrays).
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            a: rows_of(&self.a),
            b: rows_of(&self.b),
            c: rows_of(&self.c),
            dt: self.dt,
            input_labels: self.input_labels.clone(),
            output_labels: self.output_labels.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parse a model from its JSON representation.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        Self::with_labels(
            matrix_from_rows(&file.a, "A")?,
            matrix_from_rows(&file.b, "B")?,
            matrix_from_rows(&file.c, "C")?,
            file.dt,
            file.input_labels,
            file.output_labels,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_model(a: f64, b: f64, c: f64, dt: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
            dt,
        )
        .unwrap()
    }

    #[test]
    fn decoupled_output_stays_zero_for_any_input() {
        // A = I, C reads a state the input never reaches: y ≡ 0 from x0 = 0.
        let model = StateSpaceModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            0.1,
        )
        .unwrap();
        let u: Vec<_> = (0..8)
            .map(|k| DVector::from_element(1, (k as f64).sin() + 0.3))
            .collect();
        let res = model.simulate(&u, &DVector::zeros(2)).unwrap();
        assert!(res.outputs.iter().all(|y| y[0] == 0.0));
    }

    #[test]
    fn scalar_recursion_matches_hand_unrolled_values() {
        // a = 0.5, b = c = 1, u ≡ 1, x0 = 0. Unrolling the recursion by hand:
        // y(k) = Σ_{m=0..k-1} a^m = 2 (1 - 0.5^k); y(3) = 1.75.
        let model = scalar_model(0.5, 1.0, 1.0, 0.1);
        let u = vec![DVector::from_element(1, 1.0); 5];
        let res = model.simulate(&u, &DVector::zeros(1)).unwrap();
        for (k, y) in res.outputs.iter().enumerate() {
            let expect = 2.0 * (1.0 - 0.5f64.powi(k as i32 + 1));
            assert_abs_diff_eq!(y[0], expect, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(res.outputs[2][0], 1.75, epsilon = 1e-15);
    }

    #[test]
    fn simulate_rejects_wrong_dimensions() {
        let model = scalar_model(0.5, 1.0, 1.0, 0.1);
        assert!(model.simulate(&[], &DVector::zeros(2)).is_err());
        let bad = vec![DVector::zeros(2)];
        assert!(model.simulate(&bad, &DVector::zeros(1)).is_err());
    }

    #[test]
    fn constructor_rejects_rank_deficient_b() {
        let a = DMatrix::<f64>::identity(2, 2);
        let b = DMatrix::<f64>::zeros(2, 2);
        let c = DMatrix::<f64>::identity(2, 2);
        assert!(StateSpaceModel::new(a, b, c, 0.1).is_err());
    }

    #[test]
    fn constructor_rejects_nonpositive_dt() {
        let a = DMatrix::<f64>::identity(1, 1);
        let b = DMatrix::<f64>::identity(1, 1);
        let c = DMatrix::<f64>::identity(1, 1);
        assert!(StateSpaceModel::new(a, b, c, 0.0).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_faithful() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1 + 0.2, 1e-300, -3.5e17, f64::MIN_POSITIVE]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0 / 3.0]);
        let c = DMatrix::from_row_slice(1, 2, &[f64::EPSILON, 1.0]);
        let model = StateSpaceModel::new(a, b, c, 0.02).unwrap();
        let text = model.to_json().unwrap();
        let back = StateSpaceModel::from_json(&text).unwrap();
        for (x, y) in model.a().iter().zip(back.a().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in model.b().iter().zip(back.b().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(model, back);
    }
}
