//! Minimum-phase verification through the spectrum of the output-zeroing
//! closed loop.

use nalgebra::{Complex, DMatrix};

use super::model::StateSpaceModel;
use super::relative_degree::VectorRelativeDegree;
use crate::error::{Error, Result};

/// Default stability margin: eigenvalues must have modulus below `1 - tol`.
pub const DEFAULT_STABILITY_TOL: f64 = 1e-6;

/// Outcome of [`minimum_phase_check`].
#[derive(Debug, Clone)]
pub struct MinimumPhaseReport {
    /// True when every zero-dynamics eigenvalue lies strictly inside the unit
    /// circle (modulus < 1 − margin).
    pub minimum_phase: bool,
    /// Eigenvalues attributable to the internal (zero) dynamics, of count
    /// `n − (r₁+…+r_p)`.
    pub zero_dynamics_spectrum: Vec<Complex<f64>>,
    /// Full spectrum of the output-zeroing closed-loop matrix, sorted by
    /// ascending modulus. The first `r₁+…+r_p` eigenvalues are the ones the
    /// output-zeroing feedback pins to the origin.
    pub full_spectrum: Vec<Complex<f64>>,
    /// Stability margin used for the verdict.
    pub margin: f64,
}

/// Check whether the internal dynamics of `model` are asymptotically stable.
///
/// Applies the output-zeroing feedback `u = -A₀⁻¹ [Cᵢ A^rᵢ] x` and inspects
/// the spectrum of the resulting closed-loop matrix: the feedback forces
/// `r₁+…+r_p` eigenvalues to the origin and leaves the zero-dynamics
/// eigenvalues in place. Equivalent to a normal-form transformation for the
/// square, invertible-decoupling case, but numerically simpler.
pub fn minimum_phase_check(
    model: &StateSpaceModel,
    vrd: &VectorRelativeDegree,
    margin: f64,
) -> Result<MinimumPhaseReport> {
    let n = model.state_dim();
    let p = model.channels();
    if vrd.degrees().len() != p {
        return Err(Error::DimensionMismatch {
            context: "relative degree",
            expected: format!("{p} outputs"),
            found: format!("{}", vrd.degrees().len()),
        });
    }

    // Stack of Cᵢ A^rᵢ rows.
    let mut stack = DMatrix::<f64>::zeros(p, n);
    for (i, &ri) in vrd.degrees().iter().enumerate() {
        let mut row = model.c().row(i).into_owned();
        for _ in 0..ri {
            row *= model.a();
        }
        stack.row_mut(i).copy_from(&row);
    }

    let a0_inv = vrd
        .decoupling_matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::UndefinedRelativeDegree("decoupling matrix is singular".into()))?;

    let closed_loop = model.a() - model.b() * a0_inv * stack;
    let mut spectrum = super::robust_complex_eigenvalues(&closed_loop);
    spectrum.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).expect("finite eigenvalues"));

    let total = vrd.total();
    let zero_dynamics: Vec<Complex<f64>> = spectrum[total..].to_vec();
    let minimum_phase = zero_dynamics.iter().all(|z| z.norm() < 1.0 - margin);
    Ok(MinimumPhaseReport {
        minimum_phase,
        zero_dynamics_spectrum: zero_dynamics,
        full_spectrum: spectrum,
        margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::relative_degree::{vector_relative_degree, DEFAULT_MARKOV_TOL};
    use crate::testkit::{system_with_structure, StructureSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_degree_system_has_no_zero_dynamics() {
        // Chain of two delays, r = n = 2: every closed-loop eigenvalue is
        // forced to the origin.
        let model = StateSpaceModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.3, 0.4]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            0.1,
        )
        .unwrap();
        let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
        assert_eq!(vrd.total(), 2);
        let report = minimum_phase_check(&model, &vrd, DEFAULT_STABILITY_TOL).unwrap();
        assert!(report.minimum_phase);
        assert!(report.zero_dynamics_spectrum.is_empty());
        assert!(report.full_spectrum.iter().all(|z| z.norm() < 1e-6));
    }

    #[test]
    fn constructed_zero_location_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(zero, expect_min_phase) in &[(0.5, true), (1.5, false)] {
            let spec = StructureSpec {
                degrees: vec![2],
                zero_poles: vec![zero],
                transform: true,
            };
            let system = system_with_structure(&mut rng, &spec, 0.05).unwrap();
            let vrd = vector_relative_degree(&system.model, DEFAULT_MARKOV_TOL).unwrap();
            assert_eq!(vrd.degrees(), &[2]);
            let report = minimum_phase_check(&system.model, &vrd, DEFAULT_STABILITY_TOL).unwrap();
            assert_eq!(report.minimum_phase, expect_min_phase);
            assert!(
                report
                    .zero_dynamics_spectrum
                    .iter()
                    .any(|z| (z - Complex::new(zero, 0.0)).norm() < 1e-8),
                "zero at {zero} not found in {:?}",
                report.zero_dynamics_spectrum
            );
        }
    }

    #[test]
    fn spectrum_is_invariant_under_state_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = StructureSpec {
            degrees: vec![1, 2],
            zero_poles: vec![0.4, -0.6],
            transform: false,
        };
        let system = system_with_structure(&mut rng, &spec, 0.05).unwrap();
        let vrd = vector_relative_degree(&system.model, DEFAULT_MARKOV_TOL).unwrap();
        let report = minimum_phase_check(&system.model, &vrd, DEFAULT_STABILITY_TOL).unwrap();

        let t = crate::testkit::random_well_conditioned_matrix(&mut rng, system.model.state_dim());
        let transformed = system.model.transformed(&t).unwrap();
        let vrd_t = vector_relative_degree(&transformed, DEFAULT_MARKOV_TOL).unwrap();
        let report_t = minimum_phase_check(&transformed, &vrd_t, DEFAULT_STABILITY_TOL).unwrap();

        let mut a: Vec<f64> = report.zero_dynamics_spectrum.iter().map(|z| z.norm()).collect();
        let mut b: Vec<f64> = report_t.zero_dynamics_spectrum.iter().map(|z| z.norm()).collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6, "modulus mismatch {x} vs {y}");
        }
    }
}
