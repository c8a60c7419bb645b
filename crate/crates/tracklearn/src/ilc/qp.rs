//! Dense convex QP solver for the learning update:
//! `min ½ xᵀHx + gᵀx  s.t.  A x ≤ b` with `H` positive definite.
//!
//! Operator-splitting iterations identify the active set from an infeasible
//! start; an exact KKT polish on that set then drives the residuals to
//! solver accuracy. Feasibility problems are reported with the violated
//! rows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QpOptions {
    /// Initial splitting penalty.
    pub rho: f64,
    /// Iteration cap for the splitting phase.
    pub max_iter: usize,
    /// Residual target of the splitting phase.
    pub split_tol: f64,
    /// Required accuracy of the final KKT residuals.
    pub kkt_tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iter: 50_000,
            split_tol: 1e-11,
            kkt_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Inequality multipliers (zero off the active set).
    pub multipliers: DVector<f64>,
    /// Indices of the constraints active at the solution.
    pub active: Vec<usize>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

fn kkt_residual(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> f64 {
    let stationarity = (h * x + g + a.transpose() * lambda).amax();
    let slack = a * x - b;
    let feasibility = slack.iter().fold(0.0f64, |m, &s| m.max(s));
    let complementarity = lambda
        .iter()
        .zip(slack.iter())
        .fold(0.0f64, |m, (&l, &s)| m.max((l * s).abs()));
    let dual_feasibility = lambda.iter().fold(0.0f64, |m, &l| m.max(-l));
    stationarity
        .max(feasibility)
        .max(complementarity)
        .max(dual_feasibility)
}

/// Solve the equality-constrained subproblem on a working set via the KKT
/// system; returns `(x, λ_W)` or `None` when the system is singular
/// (redundant working set).
fn kkt_solve(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    working: &[usize],
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = g.len();
    let m = working.len();
    let mut kkt = DMatrix::<f64>::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    for (row, &ci) in working.iter().enumerate() {
        for col in 0..n {
            kkt[(n + row, col)] = a[(ci, col)];
            kkt[(col, n + row)] = a[(ci, col)];
        }
    }
    let mut rhs = DVector::<f64>::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-g));
    for (row, &ci) in working.iter().enumerate() {
        rhs[n + row] = b[ci];
    }
    let sol = kkt.lu().solve(&rhs)?;
    let x = sol.rows(0, n).into_owned();
    let lam = sol.rows(n, m).into_owned();
    if x.iter().chain(lam.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    Some((x, lam))
}

pub fn solve_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    opts: &QpOptions,
) -> Result<QpSolution> {
    let n = g.len();
    let m = a.nrows();
    if h.nrows() != n || h.ncols() != n || (m > 0 && a.ncols() != n) || b.len() != m {
        return Err(Error::DimensionMismatch {
            context: "qp",
            expected: format!("H {n}x{n}, A m x {n}, b m"),
            found: format!(
                "H {}x{}, A {}x{}, b {}",
                h.nrows(),
                h.ncols(),
                a.nrows(),
                a.ncols(),
                b.len()
            ),
        });
    }
    let chol = nalgebra::linalg::Cholesky::new(h.clone()).ok_or_else(|| {
        Error::InvalidParameter {
            name: "hessian",
            reason: "not positive definite".into(),
        }
    })?;

    // Unconstrained minimizer; done if feasible.
    let x_unc = chol.solve(&(-g));
    if m == 0 {
        return Ok(QpSolution {
            x: x_unc,
            multipliers: DVector::zeros(0),
            active: Vec::new(),
            iterations: 0,
            kkt_residual: 0.0,
        });
    }
    let feas_tol = 1e-10 * (1.0 + b.amax());
    if (a * &x_unc - b).iter().all(|&s| s <= feas_tol) {
        let lambda = DVector::zeros(m);
        let res = kkt_residual(h, g, a, b, &x_unc, &lambda);
        return Ok(QpSolution {
            x: x_unc,
            multipliers: lambda,
            active: Vec::new(),
            iterations: 0,
            kkt_residual: res,
        });
    }

    // Splitting phase: x-update against the penalized Hessian, clip, dual
    // accumulate. Identifies the active set.
    let mut rho = opts.rho;
    let at = a.transpose();
    let mut factor =
        nalgebra::linalg::Cholesky::new(h + rho * &at * a).ok_or(Error::SolverFailure {
            iterations: 0,
            residual: f64::INFINITY,
        })?;
    let mut x = x_unc.clone();
    let mut z = (a * &x).zip_map(b, f64::min);
    let mut w = DVector::<f64>::zeros(m);
    let mut iterations = 0;
    let mut r_prim = f64::INFINITY;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let rhs = -g + rho * (&at * (&z - &w));
        x = factor.solve(&rhs);
        let y = a * &x;
        let z_prev = z;
        z = (&y + &w).zip_map(b, f64::min);
        w += &y - &z;
        if it % 25 == 24 {
            r_prim = (&y - &z).amax();
            let r_dual = rho * (&at * (&z - &z_prev)).amax();
            if r_prim < opts.split_tol && r_dual < opts.split_tol {
                break;
            }
            // Keep the residuals balanced.
            if r_prim > 100.0 * r_dual && rho < 1e6 {
                rho *= 10.0;
                w /= 10.0;
                factor = nalgebra::linalg::Cholesky::new(h + rho * &at * a)
                    .expect("H + rho AᵀA stays positive definite");
            } else if r_dual > 100.0 * r_prim && rho > 1e-6 {
                rho /= 10.0;
                w *= 10.0;
                factor = nalgebra::linalg::Cholesky::new(h + rho * &at * a)
                    .expect("H + rho AᵀA stays positive definite");
            }
        }
    }

    let lambda_split = &w * rho;
    let slack = a * &x - b;
    // Infeasible problems leave a stubborn primal residual.
    if r_prim > 1e-6 {
        let rows: Vec<usize> = slack
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 1e-8)
            .map(|(i, _)| i)
            .collect();
        if !rows.is_empty() {
            return Err(Error::Infeasible {
                rows,
                residual: r_prim,
            });
        }
    }

    // Active-set polish: exact KKT solve on the identified set, with a few
    // repair passes for misidentified constraints.
    let act_tol = 1e-7 * (1.0 + b.amax());
    let mut working: Vec<usize> = (0..m)
        .filter(|&i| slack[i].abs() < act_tol || lambda_split[i] > act_tol)
        .collect();
    let mut best: Option<(DVector<f64>, DVector<f64>, f64)> = None;
    for _pass in 0..30 {
        match kkt_solve(h, g, a, b, &working) {
            Some((x_p, lam_w)) => {
                // Drop the most negative multiplier, if any.
                if let Some((drop_pos, _)) = lam_w
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l < -1e-9)
                    .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                {
                    working.remove(drop_pos);
                    continue;
                }
                // Add the most violated constraint, if any.
                let slack_p = a * &x_p - b;
                if let Some((add_idx, _)) = slack_p
                    .iter()
                    .enumerate()
                    .filter(|(i, &s)| s > 1e-9 * (1.0 + b[*i].abs()) && !working.contains(i))
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                {
                    working.push(add_idx);
                    working.sort_unstable();
                    continue;
                }
                let mut lambda = DVector::<f64>::zeros(m);
                for (row, &ci) in working.iter().enumerate() {
                    lambda[ci] = lam_w[row].max(0.0);
                }
                let res = kkt_residual(h, g, a, b, &x_p, &lambda);
                best = Some((x_p, lambda, res));
                break;
            }
            None => {
                // Redundant working set: drop the last added row.
                if working.pop().is_none() {
                    break;
                }
            }
        }
    }

    if let Some((x_p, lambda, res)) = best {
        if res <= opts.kkt_tol {
            let active = working;
            return Ok(QpSolution {
                x: x_p,
                multipliers: lambda,
                active,
                iterations,
                kkt_residual: res,
            });
        }
    }

    // Fall back to the splitting iterate if it already meets the target.
    let res_split = kkt_residual(h, g, a, b, &x, &lambda_split.map(|l| l.max(0.0)));
    if res_split <= opts.kkt_tol {
        let active = (0..m).filter(|&i| slack[i].abs() < act_tol).collect();
        return Ok(QpSolution {
            x,
            multipliers: lambda_split.map(|l| l.max(0.0)),
            active,
            iterations,
            kkt_residual: res_split,
        });
    }
    Err(Error::SolverFailure {
        iterations,
        residual: res_split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::box_qp_projected_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let m = DMatrix::<f64>::from_fn(n, n, |_, _| gauss(rng));
        &m * m.transpose() + DMatrix::identity(n, n)
    }

    #[test]
    fn unconstrained_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = rng.random_range(1..12);
            let h = random_spd(&mut rng, n);
            let g = DVector::from_fn(n, |_, _| gauss(&mut rng));
            let sol = solve_qp(
                &h,
                &g,
                &DMatrix::zeros(0, n),
                &DVector::zeros(0),
                &QpOptions::default(),
            )
            .unwrap();
            let direct = h.clone().lu().solve(&(-&g)).unwrap();
            assert!((sol.x - direct).amax() < 1e-10);
        }
    }

    #[test]
    fn active_box_matches_projected_gradient_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..20 {
            let n = 10;
            let h = random_spd(&mut rng, n);
            let g = DVector::from_fn(n, |_, _| 3.0 * gauss(&mut rng));
            // Tight box so several constraints go active.
            let hi = DVector::from_element(n, 0.4);
            let lo = DVector::from_element(n, -0.4);
            let mut a = DMatrix::<f64>::zeros(2 * n, n);
            let mut b = DVector::<f64>::zeros(2 * n);
            for i in 0..n {
                a[(i, i)] = 1.0;
                b[i] = hi[i];
                a[(n + i, i)] = -1.0;
                b[n + i] = -lo[i];
            }
            let sol = solve_qp(&h, &g, &a, &b, &QpOptions::default()).unwrap();
            let reference = box_qp_projected_gradient(&h, &g, &lo, &hi, 400_000, 1e-13);
            assert!(
                (&sol.x - &reference).amax() < 1e-6,
                "trial {trial}: {} vs reference",
                (&sol.x - &reference).amax()
            );
            assert!(sol.kkt_residual <= 1e-8);
            // Feasible with tight residual.
            assert!((a * &sol.x - b).iter().all(|&s| s <= 1e-8));
        }
    }

    #[test]
    fn infeasible_rows_are_reported() {
        // x ≤ -1 and -x ≤ -2 (x ≥ 2) cannot hold together.
        let h = DMatrix::identity(1, 1);
        let g = DVector::zeros(1);
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![-1.0, -2.0]);
        match solve_qp(&h, &g, &a, &b, &QpOptions::default()) {
            Err(Error::Infeasible { rows, .. }) => assert!(!rows.is_empty()),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn general_inequalities_satisfy_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = 8;
            let m = 5;
            let h = random_spd(&mut rng, n);
            let g = DVector::from_fn(n, |_, _| 2.0 * gauss(&mut rng));
            let a = DMatrix::from_fn(m, n, |_, _| gauss(&mut rng));
            // Bounds chosen so the origin is feasible but the optimum may not be.
            let b = DVector::from_fn(m, |_, _| rng.random_range(0.05..0.3));
            let sol = solve_qp(&h, &g, &a, &b, &QpOptions::default()).unwrap();
            assert!(sol.kkt_residual <= 1e-8, "kkt {}", sol.kkt_residual);
            assert!((a * &sol.x - &b).iter().all(|&s| s <= 1e-8));
            // Cost no better than the unconstrained optimum.
            let cost = |x: &DVector<f64>| 0.5 * (x.transpose() * &h * x)[(0, 0)] + g.dot(x);
            let x_unc = h.clone().lu().solve(&(-&g)).unwrap();
            assert!(cost(&sol.x) >= cost(&x_unc) - 1e-9);
        }
    }
}
