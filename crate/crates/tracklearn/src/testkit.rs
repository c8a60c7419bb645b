//! Deterministic synthetic systems, trajectories and reference solvers used
//! by the test suites. Everything here is seeded and reproducible.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::lti::StateSpaceModel;

/// Blueprint for a system in output normal form with prescribed structure.
#[derive(Debug, Clone)]
pub struct StructureSpec {
    /// Per-output relative degrees.
    pub degrees: Vec<usize>,
    /// Real eigenvalues of the internal (zero) dynamics.
    pub zero_poles: Vec<f64>,
    /// Hide the structure behind a random well-conditioned change of state
    /// coordinates.
    pub transform: bool,
}

/// A generated system together with the ground truth it was built from.
#[derive(Debug, Clone)]
pub struct StructuredSystem {
    pub model: StateSpaceModel,
    /// True vector relative degree.
    pub degrees: Vec<usize>,
    /// True decoupling matrix (invariant under the hidden coordinate change).
    pub decoupling: DMatrix<f64>,
    /// True zero-dynamics eigenvalues.
    pub zero_poles: Vec<f64>,
    pub minimum_phase: bool,
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Random orthogonal-times-diagonal similarity with condition number ≤ 4.
pub fn random_well_conditioned_matrix<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let gauss = DMatrix::<f64>::from_fn(n, n, |_, _| gaussian(rng));
    let q1 = gauss.qr().q();
    let gauss2 = DMatrix::<f64>::from_fn(n, n, |_, _| gaussian(rng));
    let q2 = gauss2.qr().q();
    let d = DMatrix::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            uniform(rng, 0.5, 2.0)
        } else {
            0.0
        }
    });
    q1 * d * q2
}

/// Construct a system with exactly the requested vector relative degree and
/// zero-dynamics spectrum.
///
/// The build uses output chains of pure delays whose final rows couple into
/// the whole state, a lower-triangular internal block carrying the requested
/// poles, and a well-conditioned random decoupling matrix. Outputs read the
/// chain heads, so the Markov parameters vanish exactly until sample
/// `rᵢ - 1`.
pub fn system_with_structure<R: Rng>(
    rng: &mut R,
    spec: &StructureSpec,
    dt: f64,
) -> Result<StructuredSystem> {
    let p = spec.degrees.len();
    let total: usize = spec.degrees.iter().sum();
    let nz = spec.zero_poles.len();
    let n = total + nz;

    // Chain offsets into the state vector; the internal block sits last.
    let mut offsets = Vec::with_capacity(p);
    let mut acc = 0;
    for &ri in &spec.degrees {
        offsets.push(acc);
        acc += ri;
    }

    // Decoupling matrix: diagonal-dominant random, retried until well
    // conditioned.
    let decoupling = loop {
        let mut a0 = DMatrix::from_fn(p, p, |_, _| 0.25 * uniform(rng, -1.0, 1.0));
        for i in 0..p {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            a0[(i, i)] = sign * uniform(rng, 0.6, 1.4);
        }
        let sv = a0.clone().singular_values();
        if sv[sv.len() - 1] > 0.2 {
            break a0;
        }
    };

    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DMatrix::<f64>::zeros(n, p);
    let mut c = DMatrix::<f64>::zeros(p, n);
    for (i, (&ri, &oi)) in spec.degrees.iter().zip(&offsets).enumerate() {
        c[(i, oi)] = 1.0;
        for m in 0..ri - 1 {
            a[(oi + m, oi + m + 1)] = 1.0;
        }
        let end = oi + ri - 1;
        for col in 0..n {
            a[(end, col)] = 0.4 * uniform(rng, -1.0, 1.0);
        }
        for j in 0..p {
            b[(end, j)] = decoupling[(i, j)];
        }
    }
    for (zi, &pole) in spec.zero_poles.iter().enumerate() {
        let row = total + zi;
        a[(row, row)] = pole;
        for col in 0..total + zi {
            a[(row, col)] = 0.3 * uniform(rng, -1.0, 1.0);
        }
    }

    let mut model = StateSpaceModel::new(a, b, c, dt)?;
    if spec.transform {
        let t = random_well_conditioned_matrix(rng, n);
        model = model.transformed(&t)?;
    }
    Ok(StructuredSystem {
        model,
        degrees: spec.degrees.clone(),
        decoupling,
        zero_poles: spec.zero_poles.clone(),
        minimum_phase: spec.zero_poles.iter().all(|z| z.abs() < 1.0),
    })
}

/// Sample a random minimum-phase system with `p ≤ max_p` channels and
/// `n ≤ max_n` states, hidden behind a coordinate change.
pub fn random_minimum_phase_system<R: Rng>(
    rng: &mut R,
    max_p: usize,
    max_n: usize,
    dt: f64,
) -> StructuredSystem {
    loop {
        let p = rng.random_range(1..=max_p);
        let degrees: Vec<usize> = (0..p).map(|_| rng.random_range(1..=3)).collect();
        let total: usize = degrees.iter().sum();
        if total + 1 > max_n {
            continue;
        }
        let nz = rng.random_range(0..=(max_n - total).min(2));
        let zero_poles: Vec<f64> = (0..nz)
            .map(|_| {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                sign * uniform(rng, 0.1, 0.85)
            })
            .collect();
        let spec = StructureSpec {
            degrees,
            zero_poles,
            transform: true,
        };
        if let Ok(sys) = system_with_structure(rng, &spec, dt) {
            return sys;
        }
    }
}

/// Sample a random observable minimum-phase system (observability verified
/// by the rank of the order-`n` observability matrix).
pub fn random_observable_system<R: Rng>(
    rng: &mut R,
    max_p: usize,
    max_n: usize,
    dt: f64,
) -> StructuredSystem {
    loop {
        let sys = random_minimum_phase_system(rng, max_p, max_n, dt);
        if observability_rank(&sys.model) == sys.model.state_dim() {
            return sys;
        }
    }
}

/// Rank of the stacked observability matrix `[C; CA; …; CA^(n-1)]`.
pub fn observability_rank(model: &StateSpaceModel) -> usize {
    let n = model.state_dim();
    let p = model.channels();
    let mut obs = DMatrix::<f64>::zeros(n * p, n);
    let mut cak = model.c().clone();
    for k in 0..n {
        obs.view_mut((k * p, 0), (p, n)).copy_from(&cak);
        cak = &cak * model.a();
    }
    crate::lti::numerical_rank(&obs)
}

/// Smooth random trajectory: per channel a sum of eight sinusoids with
/// random amplitudes, frequencies and phases. Bounded discrete derivatives
/// of any order.
pub fn random_smooth_trajectory<R: Rng>(
    rng: &mut R,
    channels: usize,
    samples: usize,
    dt: f64,
) -> Vec<DVector<f64>> {
    let harmonics: Vec<Vec<(f64, f64, f64)>> = (0..channels)
        .map(|_| {
            (1..=8)
                .map(|h| {
                    (
                        uniform(rng, 0.1, 1.0) / h as f64,
                        uniform(rng, 0.1, 1.8),
                        uniform(rng, 0.0, std::f64::consts::TAU),
                    )
                })
                .collect()
        })
        .collect();
    (0..samples)
        .map(|k| {
            let t = k as f64 * dt;
            DVector::from_fn(channels, |i, _| {
                harmonics[i]
                    .iter()
                    .map(|(a, f, phi)| a * (std::f64::consts::TAU * f * t + phi).sin())
                    .sum()
            })
        })
        .collect()
}

/// Spectrally rich random trajectory for regression fitting: harmonics up to
/// a quarter of the sample rate with amplitudes rolled off in frequency, so
/// consecutive window shifts decorrelate while the signal stays tame.
pub fn random_excited_trajectory<R: Rng>(
    rng: &mut R,
    channels: usize,
    samples: usize,
    dt: f64,
) -> Vec<DVector<f64>> {
    let f_max = 0.25 / dt;
    let harmonics: Vec<Vec<(f64, f64, f64)>> = (0..channels)
        .map(|_| {
            (0..12)
                .map(|_| {
                    let f = uniform(rng, 0.05, f_max);
                    (uniform(rng, 0.3, 1.0) / (1.0 + f), f, uniform(rng, 0.0, std::f64::consts::TAU))
                })
                .collect()
        })
        .collect();
    (0..samples)
        .map(|k| {
            let t = k as f64 * dt;
            DVector::from_fn(channels, |i, _| {
                harmonics[i]
                    .iter()
                    .map(|(a, f, phi)| a * (std::f64::consts::TAU * f * t + phi).sin())
                    .sum()
            })
        })
        .collect()
}

/// Reference solver for box-constrained QPs: plain projected gradient
/// descent on `½ xᵀHx + gᵀx` subject to `lo ≤ x ≤ hi`, run to a small
/// projected-gradient norm. Deliberately independent of the production
/// solver.
pub fn box_qp_projected_gradient(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> DVector<f64> {
    let n = g.len();
    let lipschitz = h
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    let step = 1.0 / lipschitz;
    let clamp = |x: &DVector<f64>| DVector::from_fn(n, |i, _| x[i].max(lo[i]).min(hi[i]));
    let mut x = clamp(&DVector::zeros(n));
    for _ in 0..max_iter {
        let grad = h * &x + g;
        let next = clamp(&(&x - step * &grad));
        let moved = (&next - &x).amax();
        x = next;
        if moved < tol * step {
            break;
        }
    }
    x
}
