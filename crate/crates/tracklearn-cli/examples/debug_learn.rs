// Temporary: linearized closed-loop spectral radius of one axis
// (plant lag/vel/pos + delay registers + filter + predictor + estimate).
use nalgebra::DMatrix;
use tracklearn::sim::PlantModel;

fn spectral_radius(gamma: f64, omega: f64, m: f64, kp: f64, plant: &PlantModel) -> f64 {
    let dt = plant.dt;
    let delay = plant.delay_samples;
    // Exact ZOH of [lag, vel, pos] with input w = delayed u - c_f * vel.
    let mut aug = DMatrix::<f64>::zeros(4, 4);
    aug[(0, 0)] = -1.0 / plant.tau;
    aug[(1, 0)] = plant.velocity_rate * plant.gain;
    aug[(1, 1)] = -(plant.velocity_rate + plant.drag);
    aug[(2, 1)] = 1.0;
    aug[(0, 3)] = 1.0 / plant.tau;
    let disc = (aug * dt).exp();

    let a_v = (-omega * dt).exp();
    let a_m = (-m * dt).exp();
    let g = gamma * dt;
    let cf = plant.lipschitz_gain;

    // State: [lag, vel, pos, d1..ddelay, vstate, yhat, sigma]
    let n = 3 + delay + 3;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let (i_lag, i_vel, i_pos) = (0, 1, 2);
    let i_d0 = 3; // d1 is newest command
    let i_vs = 3 + delay;
    let i_yh = i_vs + 1;
    let i_sg = i_yh + 1;

    // sigma+ = sigma - g*(yhat - vel)
    a[(i_sg, i_sg)] = 1.0;
    a[(i_sg, i_yh)] = -g;
    a[(i_sg, i_vel)] = g;
    // u1 = -kp*pos ; vstate+ = a_v vstate + (1-a_v)(u1 - sigma+)
    a[(i_vs, i_vs)] = a_v;
    a[(i_vs, i_pos)] = -(1.0 - a_v) * kp;
    for (col, coef) in [(i_sg, 1.0), (i_yh, -g), (i_vel, g)] {
        a[(i_vs, col)] += -(1.0 - a_v) * coef;
    }
    // u = vstate+ (copy the row)
    let u_row: Vec<f64> = (0..n).map(|c| a[(i_vs, c)]).collect();
    // yhat+ = a_m yhat + (1-a_m)(u + sigma+)
    a[(i_yh, i_yh)] = a_m;
    for (c, coef) in u_row.iter().enumerate() {
        a[(i_yh, c)] += (1.0 - a_m) * coef;
    }
    for (col, coef) in [(i_sg, 1.0), (i_yh, -g), (i_vel, g)] {
        a[(i_yh, col)] += (1.0 - a_m) * coef;
    }
    // delay chain: d1+ = u, d_{i}+ = d_{i-1}
    for (c, coef) in u_row.iter().enumerate() {
        a[(i_d0, c)] += *coef;
    }
    for j in 1..delay {
        a[(i_d0 + j, i_d0 + j - 1)] = 1.0;
    }
    // plant: w = d_last - cf*vel ; x+ = Ad x + Bd w
    let w_col = i_d0 + delay - 1;
    for r in 0..3 {
        for c in 0..3 {
            a[(r, c)] += disc[(r, c)];
        }
        a[(r, w_col)] += disc[(r, 3)];
        a[(r, i_vel)] += -cf * disc[(r, 3)];
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn main() {
    let src = PlantModel::source_like(0.01);
    let tgt = PlantModel::target_like(0.01);
    println!("gamma omega rho_src rho_tgt");
    for gamma in [100.0, 200.0, 400.0, 600.0, 1000.0] {
        for omega in [10.0, 15.0, 20.0, 25.0, 30.0, 40.0] {
            let rs = spectral_radius(gamma, omega, 5.0, 2.0, &src);
            let rt = spectral_radius(gamma, omega, 5.0, 2.0, &tgt);
            println!("{gamma:>6} {omega:>5}: {rs:.4} {rt:.4}");
        }
    }
}
