//! Bounded eigenvalue computation for general real matrices.
//!
//! The unshifted QR iteration can stall on matrices with exactly repeated
//! eigenvalues (block compositions full of identical filter poles are the
//! typical offender), so the Schur decomposition runs with an iteration cap
//! and falls back to retries under a tiny deterministic diagonal dither.

use nalgebra::{Complex, DMatrix};

const MAX_ITER: usize = 20_000;

pub(crate) fn robust_complex_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    if let Some(schur) = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, MAX_ITER) {
        return schur.complex_eigenvalues().iter().copied().collect();
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for &dither in &[1e-13, 1e-11, 1e-9, 1e-7] {
        let mut perturbed = m.clone();
        for i in 0..n {
            // Deterministic, index-dependent splitting of repeated values.
            perturbed[(i, i)] += scale * dither * (i as f64 + 1.0) / n as f64;
        }
        if let Some(schur) = nalgebra::linalg::Schur::try_new(perturbed, f64::EPSILON, MAX_ITER) {
            return schur.complex_eigenvalues().iter().copied().collect();
        }
    }
    // A dithered matrix virtually always converges; surface the failure
    // loudly rather than looping forever.
    panic!("eigenvalue iteration failed to converge for a {n}x{n} matrix");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_unit_poles_terminate() {
        // Three decoupled integrators plus identical filter poles: the exact
        // multiplicity pattern that stalls an uncapped iteration.
        let n = 6;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..3 {
            m[(i, i)] = 1.0;
            m[(3 + i, 3 + i)] = 0.8607079764250578;
            m[(i, 3 + i)] = 0.01;
        }
        let eigs = robust_complex_eigenvalues(&m);
        assert_eq!(eigs.len(), n);
        let ones = eigs.iter().filter(|z| (z.re - 1.0).abs() < 1e-9).count();
        assert_eq!(ones, 3);
    }

    #[test]
    fn plain_matrices_match_direct_computation() {
        let m = DMatrix::from_row_slice(3, 3, &[0.2, 1.0, 0.0, -0.3, 0.1, 0.5, 0.0, 0.2, -0.4]);
        let mut got: Vec<f64> = robust_complex_eigenvalues(&m).iter().map(|z| z.norm()).collect();
        let mut expect: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-10);
        }
    }
}
