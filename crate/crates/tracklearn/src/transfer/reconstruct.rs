//! Exact state reconstruction from finite input/output windows of an
//! observable system: `x(k) = M_u ū + M_y ȳ` with
//! `M_y = A^N̄ V_N̄⁺` and `M_u = U_N̄ − M_y T_N̄`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lti::{numerical_rank, StateSpaceModel};

/// Window-to-state maps for one model and window length.
#[derive(Debug, Clone)]
pub struct StateReconstructor {
    m_u: DMatrix<f64>,
    m_y: DMatrix<f64>,
    n_bar: usize,
    n: usize,
    p: usize,
}

/// Build the reconstructor for windows of length `n_bar` (any upper bound on
/// the observability index works; `n_bar = n` always does for observable
/// systems). Fails when the stacked observability matrix is rank deficient.
pub fn state_reconstructor(model: &StateSpaceModel, n_bar: usize) -> Result<StateReconstructor> {
    let n = model.state_dim();
    let p = model.channels();
    if n_bar == 0 {
        return Err(Error::InvalidParameter {
            name: "n_bar",
            reason: "window length must be at least 1".into(),
        });
    }

    // V: rows C A^(N̄-1) down to C.
    let mut v = DMatrix::<f64>::zeros(n_bar * p, n);
    let mut cak = model.c().clone();
    for j in (0..n_bar).rev() {
        v.view_mut((j * p, 0), (p, n)).copy_from(&cak);
        cak = &cak * model.a();
    }
    let rank = numerical_rank(&v);
    if rank < n {
        return Err(Error::Unobservable { rank, n });
    }

    // U: [B, AB, …, A^(N̄-1)B].
    let mut u = DMatrix::<f64>::zeros(n, n_bar * p);
    let mut akb = model.b().clone();
    for i in 0..n_bar {
        u.view_mut((0, i * p), (n, p)).copy_from(&akb);
        akb = model.a() * akb;
    }

    // T: block (j, i) = C A^(i-j-1) B for i > j.
    let mut t = DMatrix::<f64>::zeros(n_bar * p, n_bar * p);
    for j in 0..n_bar {
        for i in j + 1..n_bar {
            t.view_mut((j * p, i * p), (p, p))
                .copy_from(&model.markov_parameter(i - j - 1));
        }
    }

    let mut a_pow = DMatrix::<f64>::identity(n, n);
    for _ in 0..n_bar {
        a_pow = model.a() * a_pow;
    }
    let svd = v.clone().svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max();
    let pinv = svd
        .pseudo_inverse(cutoff)
        .map_err(|e| Error::InvalidModel(format!("observability pseudo-inverse failed: {e}")))?;
    let m_y = a_pow * pinv;
    let m_u = u - &m_y * t;
    Ok(StateReconstructor {
        m_u,
        m_y,
        n_bar,
        n,
        p,
    })
}

impl StateReconstructor {
    pub fn n_bar(&self) -> usize {
        self.n_bar
    }

    pub fn input_map(&self) -> &DMatrix<f64> {
        &self.m_u
    }

    pub fn output_map(&self) -> &DMatrix<f64> {
        &self.m_y
    }

    /// Reconstruct `x(k)` from newest-first windows
    /// `[u(k-1), …, u(k-N̄)]`, `[y(k-1), …, y(k-N̄)]`.
    pub fn reconstruct(
        &self,
        u_window: &[DVector<f64>],
        y_window: &[DVector<f64>],
    ) -> Result<DVector<f64>> {
        if u_window.len() != self.n_bar || y_window.len() != self.n_bar {
            return Err(Error::DimensionMismatch {
                context: "reconstruction window",
                expected: format!("{} samples each", self.n_bar),
                found: format!("u {}, y {}", u_window.len(), y_window.len()),
            });
        }
        let mut u_stack = DVector::<f64>::zeros(self.n_bar * self.p);
        let mut y_stack = DVector::<f64>::zeros(self.n_bar * self.p);
        for j in 0..self.n_bar {
            if u_window[j].len() != self.p || y_window[j].len() != self.p {
                return Err(Error::DimensionMismatch {
                    context: "reconstruction sample",
                    expected: format!("{}", self.p),
                    found: format!("u {}, y {}", u_window[j].len(), y_window[j].len()),
                });
            }
            u_stack.rows_mut(j * self.p, self.p).copy_from(&u_window[j]);
            y_stack.rows_mut(j * self.p, self.p).copy_from(&y_window[j]);
        }
        Ok(&self.m_u * u_stack + &self.m_y * y_stack)
    }

    /// Reconstruct `x(k)` straight from sample sequences (`inputs[j] = u(j)`,
    /// `outputs[j] = y(j)`); requires `k ≥ N̄`.
    pub fn reconstruct_at(
        &self,
        k: usize,
        inputs: &[DVector<f64>],
        outputs: &[DVector<f64>],
    ) -> Result<DVector<f64>> {
        if k < self.n_bar || k > inputs.len() || k > outputs.len() {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: format!(
                    "need N̄ ≤ k ≤ sequence length (N̄ = {}, k = {k})",
                    self.n_bar
                ),
            });
        }
        let u_window: Vec<DVector<f64>> = (0..self.n_bar).map(|j| inputs[k - 1 - j].clone()).collect();
        let y_window: Vec<DVector<f64>> = (0..self.n_bar).map(|j| outputs[k - 1 - j].clone()).collect();
        self.reconstruct(&u_window, &y_window)
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }
}
