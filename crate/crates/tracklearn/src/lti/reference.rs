//! Zero-order-hold discretization of the closed-loop reference family
//! `diag(Dᵢ(s))`, `Dᵢ(s) = Kᵢmᵢ / (s² + mᵢ s + Kᵢmᵢ)` — one second-order
//! unity-DC-gain axis per channel.

use nalgebra::DMatrix;

use super::model::StateSpaceModel;
use crate::error::{Error, Result};

/// Discretize the per-axis reference transfer functions under a zero-order
/// hold.
///
/// Each axis contributes a 2-state block (position, velocity of the reference
/// response); the DC gain of every axis is exactly 1.
pub fn discretize_reference(k_gains: &[f64], m_poles: &[f64], dt: f64) -> Result<StateSpaceModel> {
    let p = k_gains.len();
    if p == 0 || m_poles.len() != p {
        return Err(Error::DimensionMismatch {
            context: "reference gains",
            expected: format!("{p} poles for {p} gains"),
            found: format!("{}", m_poles.len()),
        });
    }
    for (name, values) in [("k", k_gains), ("m", m_poles)] {
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: if name == "k" { "k_gains" } else { "m_poles" },
                reason: format!("entries must be positive and finite, got {v}"),
            });
        }
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be positive and finite, got {dt}"),
        });
    }

    let n = 2 * p;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DMatrix::<f64>::zeros(n, p);
    let mut c = DMatrix::<f64>::zeros(p, n);
    for i in 0..p {
        let km = k_gains[i] * m_poles[i];
        // Controllable canonical axis: ẋ = [0 1; -Km -m] x + [0; Km] u, y = x₁.
        // Zero-order hold via the exponential of the augmented matrix.
        let mut aug = DMatrix::<f64>::zeros(3, 3);
        aug[(0, 1)] = 1.0;
        aug[(1, 0)] = -km;
        aug[(1, 1)] = -m_poles[i];
        aug[(1, 2)] = km;
        let disc = (aug * dt).exp();
        a.view_mut((2 * i, 2 * i), (2, 2))
            .copy_from(&disc.view((0, 0), (2, 2)));
        b.view_mut((2 * i, i), (2, 1))
            .copy_from(&disc.view((0, 2), (2, 1)));
        c[(i, 2 * i)] = 1.0;
    }
    StateSpaceModel::new(a, b, c, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::relative_degree::{vector_relative_degree, DEFAULT_MARKOV_TOL};
    use nalgebra::{Complex, DVector};

    #[test]
    fn every_axis_settles_to_unity() {
        let model = discretize_reference(&[1.0, 2.0, 0.7], &[5.0, 8.0, 3.0], 0.02).unwrap();
        let p = model.channels();
        // Steady state of a unit step: x∞ = (I - A)⁻¹ B 1.
        let eye = DMatrix::<f64>::identity(model.state_dim(), model.state_dim());
        let xinf = (eye - model.a())
            .lu()
            .solve(&(model.b() * DVector::from_element(p, 1.0)))
            .unwrap();
        let yinf = model.c() * xinf;
        for i in 0..p {
            assert!((yinf[i] - 1.0).abs() < 1e-9, "axis {i} DC gain {}", yinf[i]);
        }
    }

    #[test]
    fn discrete_poles_are_exponentials_of_continuous_roots() {
        let (k, m, dt) = (1.0, 5.0, 0.02);
        let model = discretize_reference(&[k], &[m], dt).unwrap();
        // Roots of s² + m s + K m.
        let disc = m * m - 4.0 * k * m;
        let roots = if disc >= 0.0 {
            [
                Complex::new((-m + disc.sqrt()) / 2.0, 0.0),
                Complex::new((-m - disc.sqrt()) / 2.0, 0.0),
            ]
        } else {
            [
                Complex::new(-m / 2.0, (-disc).sqrt() / 2.0),
                Complex::new(-m / 2.0, -(-disc).sqrt() / 2.0),
            ]
        };
        let mut expect: Vec<Complex<f64>> = roots.iter().map(|s| (s * dt).exp()).collect();
        let mut eigs: Vec<Complex<f64>> = model.a().complex_eigenvalues().iter().copied().collect();
        let key = |z: &Complex<f64>| (z.re, z.im);
        expect.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        eigs.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        for (e, g) in expect.iter().zip(&eigs) {
            assert!((e - g).norm() < 1e-12, "expected {e}, got {g}");
        }
    }

    #[test]
    fn step_response_matches_dense_ode_integration() {
        // RK4 on ẍ = Km(u - x) - m ẋ at a step 200x finer than dt.
        let (k, m, dt): (f64, f64, f64) = (1.0, 5.0, 0.01);
        let km = k * m;
        let fine = dt / 200.0;
        let steps = (1.0 / dt).round() as usize;
        let deriv = |x: [f64; 2]| [x[1], km * (1.0 - x[0]) - m * x[1]];
        let mut x = [0.0, 0.0];
        let mut dense = Vec::with_capacity(steps + 1);
        dense.push(x[0]);
        for k_step in 0..steps * 200 {
            let k1 = deriv(x);
            let k2 = deriv([x[0] + 0.5 * fine * k1[0], x[1] + 0.5 * fine * k1[1]]);
            let k3 = deriv([x[0] + 0.5 * fine * k2[0], x[1] + 0.5 * fine * k2[1]]);
            let k4 = deriv([x[0] + fine * k3[0], x[1] + fine * k3[1]]);
            x[0] += fine / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            x[1] += fine / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
            if (k_step + 1) % 200 == 0 {
                dense.push(x[0]);
            }
        }

        let model = discretize_reference(&[k], &[m], dt).unwrap();
        let inputs = vec![DVector::from_element(1, 1.0); steps];
        let sim = model.simulate(&inputs, &DVector::zeros(2)).unwrap();
        // Compare at t = 1 s and along the way.
        for (i, y) in sim.outputs.iter().enumerate() {
            assert!(
                (y[0] - dense[i + 1]).abs() < 1e-6,
                "sample {i}: zoh {} vs ode {}",
                y[0],
                dense[i + 1]
            );
        }
    }

    #[test]
    fn reference_always_has_finite_relative_degree() {
        for &dt in &[0.002, 0.01, 0.05] {
            for &(k, m) in &[(1.0, 5.0), (2.0, 5.0), (0.5, 12.0)] {
                let model = discretize_reference(&[k, k], &[m, m], dt).unwrap();
                let vrd = vector_relative_degree(&model, DEFAULT_MARKOV_TOL).unwrap();
                assert!(vrd.degrees().iter().all(|&r| r >= 1));
                assert!(vrd.total() <= model.state_dim());
            }
        }
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(discretize_reference(&[0.0], &[5.0], 0.01).is_err());
        assert!(discretize_reference(&[1.0], &[-2.0], 0.01).is_err());
        assert!(discretize_reference(&[1.0], &[5.0], 0.0).is_err());
    }
}
