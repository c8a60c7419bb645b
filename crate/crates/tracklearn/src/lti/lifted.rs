//! Lifted (trial-long) representation: a whole trial of dynamics collapsed
//! into one static block-lower-triangular map.

use nalgebra::{DMatrix, DVector};

use super::model::StateSpaceModel;
use crate::error::{Error, Result};

/// Static map `F` from a stacked input sequence `u(0..N-1)` to the stacked
/// output sequence `y(1..N)` of a model started from rest.
///
/// Block `(i, j)` (output sample `i` in `1..=N`, input sample `j` in
/// `0..N`) equals `C A^(i-1-j) B` for `j < i` and is zero otherwise.
#[derive(Debug, Clone)]
pub struct LiftedModel {
    f: DMatrix<f64>,
    horizon: usize,
    channels: usize,
    dt: f64,
}

impl LiftedModel {
    /// Lift `model` over a horizon of `n_samples` steps.
    pub fn from_model(model: &StateSpaceModel, n_samples: usize) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::InvalidParameter {
                name: "n_samples",
                reason: "horizon must be at least 1".into(),
            });
        }
        let p = model.channels();
        let dim = n_samples * p;
        // Impulse-response blocks C A^k B, k = 0..N-1.
        let mut blocks = Vec::with_capacity(n_samples);
        let mut akb = model.b().clone();
        for _ in 0..n_samples {
            blocks.push(model.c() * &akb);
            akb = model.a() * akb;
        }
        let mut f = DMatrix::<f64>::zeros(dim, dim);
        for i in 1..=n_samples {
            for j in 0..i {
                f.view_mut(((i - 1) * p, j * p), (p, p))
                    .copy_from(&blocks[i - 1 - j]);
            }
        }
        Ok(Self {
            f,
            horizon: n_samples,
            channels: p,
            dt: model.dt(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    /// Horizon length in samples.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Stacked dimension `N·p`.
    pub fn dim(&self) -> usize {
        self.horizon * self.channels
    }

    /// Apply the lifted map: `y = F u`.
    pub fn apply(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "lifted input",
                expected: format!("{}", self.dim()),
                found: format!("{}", u.len()),
            });
        }
        Ok(&self.f * u)
    }

    /// Block `(i, j)` with output index `i` in `1..=N` and input index `j`
    /// in `0..N`.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let p = self.channels;
        self.f.view(((i - 1) * p, j * p), (p, p)).into_owned()
    }
}

/// Stack a sample sequence into one lifted vector.
pub fn stack_samples(samples: &[DVector<f64>]) -> DVector<f64> {
    let p = samples.first().map_or(0, DVector::len);
    let mut out = DVector::zeros(samples.len() * p);
    for (k, s) in samples.iter().enumerate() {
        out.rows_mut(k * p, p).copy_from(s);
    }
    out
}

/// Split a lifted vector back into `p`-channel samples.
pub fn unstack_samples(lifted: &DVector<f64>, channels: usize) -> Vec<DVector<f64>> {
    assert_eq!(lifted.len() % channels, 0, "lifted length not a multiple of channel count");
    (0..lifted.len() / channels)
        .map(|k| lifted.rows(k * channels, channels).into_owned())
        .collect()
}
