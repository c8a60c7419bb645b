//! Internal discrete-time blocks with feedthrough, used to compose the
//! filtered loop transfer functions needed by the adaptive controller's
//! norm condition. Not part of the public surface.

use nalgebra::{Complex, DMatrix};

use super::model::StateSpaceModel;

/// Discrete system `x⁺ = A x + B u`, `y = C x + D u` (possibly with an empty
/// state, i.e. a pure gain).
#[derive(Debug, Clone)]
pub(crate) struct Dlti {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl Dlti {
    pub fn gain(d: DMatrix<f64>) -> Self {
        let (p, m) = (d.nrows(), d.ncols());
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, m),
            c: DMatrix::zeros(p, 0),
            d,
        }
    }

    pub fn identity(p: usize) -> Self {
        Self::gain(DMatrix::identity(p, p))
    }

    pub fn from_strictly_proper(model: &StateSpaceModel) -> Self {
        Self {
            a: model.a().clone(),
            b: model.b().clone(),
            c: model.c().clone(),
            d: DMatrix::zeros(model.channels(), model.channels()),
        }
    }

    /// Diagonal one-pole low-pass `Vᵢ(z) = (1-aᵢ) z / (z-aᵢ)` in positional
    /// form (output responds to the current input sample).
    pub fn diagonal_lowpass(poles: &[f64]) -> Self {
        let p = poles.len();
        let a = DMatrix::from_fn(p, p, |i, j| if i == j { poles[i] } else { 0.0 });
        let b = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 - poles[i] } else { 0.0 });
        let c = a.clone();
        let d = b.clone();
        Self { a, b, c, d }
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Series composition: apply `self`, then `next`.
    pub fn then(&self, next: &Dlti) -> Dlti {
        assert_eq!(self.outputs(), next.inputs(), "series dimension mismatch");
        let (n1, n2) = (self.order(), next.order());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&next.b * &self.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&next.a);
        let mut b = DMatrix::zeros(n1 + n2, self.inputs());
        b.view_mut((0, 0), (n1, self.inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.inputs()))
            .copy_from(&(&next.b * &self.d));
        let mut c = DMatrix::zeros(next.outputs(), n1 + n2);
        c.view_mut((0, 0), (next.outputs(), n1))
            .copy_from(&(&next.d * &self.c));
        c.view_mut((0, n1), (next.outputs(), n2)).copy_from(&next.c);
        let d = &next.d * &self.d;
        Dlti { a, b, c, d }
    }

    /// Parallel sum `self + other`.
    pub fn add(&self, other: &Dlti) -> Dlti {
        self.combine(other, 1.0)
    }

    /// Parallel difference `self - other`.
    pub fn sub(&self, other: &Dlti) -> Dlti {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &Dlti, sign: f64) -> Dlti {
        assert_eq!(self.inputs(), other.inputs());
        assert_eq!(self.outputs(), other.outputs());
        let (n1, n2) = (self.order(), other.order());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&other.a);
        let mut b = DMatrix::zeros(n1 + n2, self.inputs());
        b.view_mut((0, 0), (n1, self.inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.inputs())).copy_from(&other.b);
        let mut c = DMatrix::zeros(self.outputs(), n1 + n2);
        c.view_mut((0, 0), (self.outputs(), n1)).copy_from(&self.c);
        c.view_mut((0, n1), (self.outputs(), n2))
            .copy_from(&(&other.c * sign));
        let d = &self.d + &other.d * sign;
        Dlti { a, b, c, d }
    }

    /// Inverse of a biproper system (`D` square and invertible).
    pub fn inverse(&self) -> Option<Dlti> {
        let d_inv = self.d.clone().try_inverse()?;
        Some(Dlti {
            a: &self.a - &self.b * &d_inv * &self.c,
            b: &self.b * &d_inv,
            c: -(&d_inv * &self.c),
            d: d_inv,
        })
    }

    /// Negative feedback `y = G(u - L y)` with `G = self` (strictly proper)
    /// and loop operator `L`.
    pub fn feedback(&self, loop_op: &Dlti) -> Dlti {
        assert!(self.d.amax() == 0.0, "forward path must be strictly proper");
        assert_eq!(self.outputs(), loop_op.inputs());
        assert_eq!(loop_op.outputs(), self.inputs());
        let (ng, nl) = (self.order(), loop_op.order());
        let mut a = DMatrix::zeros(ng + nl, ng + nl);
        a.view_mut((0, 0), (ng, ng))
            .copy_from(&(&self.a - &self.b * &loop_op.d * &self.c));
        a.view_mut((0, ng), (ng, nl))
            .copy_from(&(-(&self.b * &loop_op.c)));
        a.view_mut((ng, 0), (nl, ng))
            .copy_from(&(&loop_op.b * &self.c));
        a.view_mut((ng, ng), (nl, nl)).copy_from(&loop_op.a);
        let mut b = DMatrix::zeros(ng + nl, self.inputs());
        b.view_mut((0, 0), (ng, self.inputs())).copy_from(&self.b);
        let mut c = DMatrix::zeros(self.outputs(), ng + nl);
        c.view_mut((0, 0), (self.outputs(), ng)).copy_from(&self.c);
        Dlti {
            a,
            b,
            c,
            d: DMatrix::zeros(self.outputs(), self.inputs()),
        }
    }

    #[allow(dead_code)]
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        super::eig::robust_complex_eigenvalues(&self.a)
    }

    /// Unit-sample response `h(0) = D`, `h(k) = C A^(k-1) B`.
    pub fn impulse_response(&self, samples: usize) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(samples);
        if samples == 0 {
            return out;
        }
        out.push(self.d.clone());
        let mut akb = self.b.clone();
        for _ in 1..samples {
            out.push(&self.c * &akb);
            akb = &self.a * akb;
        }
        out
    }

    /// Frequency response `H(e^{jθ}) = D + C (e^{jθ} I - A)⁻¹ B`.
    #[allow(dead_code)]
    pub fn frequency_response(&self, theta: f64) -> DMatrix<Complex<f64>> {
        let z = Complex::new(theta.cos(), theta.sin());
        let n = self.order();
        let to_c = |m: &DMatrix<f64>| m.map(|v| Complex::new(v, 0.0));
        if n == 0 {
            return to_c(&self.d);
        }
        let zi_a = DMatrix::from_fn(n, n, |i, j| {
            let base = Complex::new(-self.a[(i, j)], 0.0);
            if i == j {
                base + z
            } else {
                base
            }
        });
        let inv = zi_a.lu().solve(&to_c(&self.b)).expect("zI - A singular on unit circle");
        to_c(&self.d) + to_c(&self.c) * inv
    }
}
