//! Derivative arrays.
//!
//! For a linear DAE `E ẋ = A x + f` the level-μ array is
//! `M_μ y = N_μ [x; ...] + g_μ` with `y = (ẋ, ẍ, ..., x^(μ+1))` and
//!
//! ```text
//! M[k][j] = C(k,j) E^(k-j) - C(k,j+1) A^(k-j-1)     (j <= k)
//! N[k][0] = A^(k),   g[k] = f^(k)
//! ```
//!
//! Providers return normalized Taylor coefficients (see [`crate::taylor`]);
//! an array with Taylor order `K` at level μ needs coefficients up to `μ + K`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{DaeError, Result};
use crate::reduce::CharValues;
use crate::taylor::{binomial, factorial, TaylorMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    None,
    SelfAdjoint,
    SkewAdjoint,
}

/// Taylor coefficients of `E`, `A` and `f` (as an `n×1` matrix) at one point.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub e: TaylorMatrix,
    pub a: TaylorMatrix,
    pub f: TaylorMatrix,
}

/// Source of Taylor coefficients for a linear DAE. Must be reentrant.
pub trait CoefficientProvider: Send + Sync {
    fn dim(&self) -> usize;
    /// Largest Taylor order the provider can deliver.
    fn max_order(&self) -> usize;
    fn coefficients(&self, t: f64, order: usize) -> Coefficients;
}

/// `E(t) ẋ = A(t) x + f(t)` with an optional symmetry tag.
#[derive(Clone)]
pub struct LinearDae {
    pub provider: Arc<dyn CoefficientProvider>,
    pub symmetry: Symmetry,
    /// Inertia of the skew-adjoint leading block.
    pub p: Option<usize>,
    pub q: Option<usize>,
}

impl std::fmt::Debug for LinearDae {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearDae")
            .field("n", &self.n())
            .field("symmetry", &self.symmetry)
            .field("p", &self.p)
            .field("q", &self.q)
            .finish()
    }
}

impl LinearDae {
    pub fn new(provider: Arc<dyn CoefficientProvider>) -> Self {
        Self {
            provider,
            symmetry: Symmetry::None,
            p: None,
            q: None,
        }
    }

    pub fn with_symmetry(mut self, symmetry: Symmetry) -> Self {
        self.symmetry = symmetry;
        self
    }

    pub fn with_inertia(mut self, p: usize, q: usize) -> Self {
        self.p = Some(p);
        self.q = Some(q);
        self
    }

    pub fn n(&self) -> usize {
        self.provider.dim()
    }

    pub fn coefficients(&self, t: f64, order: usize) -> Result<Coefficients> {
        let available = self.provider.max_order();
        if order > available {
            return Err(DaeError::ProviderOrder {
                requested: order,
                available,
            });
        }
        Ok(self.provider.coefficients(t, order))
    }

    /// Largest violation of the declared symmetry identities at `t`
    /// (zero for untagged problems).
    pub fn symmetry_defect(&self, t: f64) -> Result<f64> {
        let c = self.coefficients(t, 1)?;
        let e = c.e.value();
        let a = c.a.value();
        let edot = c.e.slice(1);
        Ok(match self.symmetry {
            Symmetry::None => 0.0,
            Symmetry::SelfAdjoint => {
                (e.transpose() + e).amax().max((a.transpose() - a - edot).amax())
            }
            Symmetry::SkewAdjoint => {
                (e.transpose() - e).amax().max((a.transpose() + a + edot).amax())
            }
        })
    }
}

/// `M_μ`, `N_μ` (first block column only, `(μ+1)n × n`) and `g_μ` as Taylor
/// series in `t`.
#[derive(Debug, Clone)]
pub struct DerivativeArrayLinear {
    pub mu: usize,
    pub n: usize,
    pub m: TaylorMatrix,
    pub n_mat: TaylorMatrix,
    pub g: TaylorMatrix,
}

impl DerivativeArrayLinear {
    /// Full `N_μ` of size `(μ+1)n × (μ+1)n` (trailing block columns zero).
    pub fn n_full(&self) -> TaylorMatrix {
        let size = (self.mu + 1) * self.n;
        let mut out = TaylorMatrix::zeros(size, size, self.m.order());
        out.set_block(0, 0, &self.n_mat);
        out
    }
}

/// Series of the `m`-th derivative of `x`, truncated to order `k`.
fn derivative_series(x: &TaylorMatrix, m: usize, k: usize) -> TaylorMatrix {
    let slices = (0..=k)
        .map(|l| x.slice(m + l) * (factorial(m + l) / factorial(l)))
        .collect();
    TaylorMatrix::new(slices).expect("slices share a shape")
}

pub fn build_linear_array(
    dae: &LinearDae,
    mu: usize,
    t: f64,
    order: usize,
) -> Result<DerivativeArrayLinear> {
    let n = dae.n();
    let c = dae.coefficients(t, mu + order)?;
    let e_der: Vec<TaylorMatrix> = (0..=mu).map(|m| derivative_series(&c.e, m, order)).collect();
    let a_der: Vec<TaylorMatrix> = (0..=mu).map(|m| derivative_series(&c.a, m, order)).collect();
    let f_der: Vec<TaylorMatrix> = (0..=mu).map(|m| derivative_series(&c.f, m, order)).collect();

    let size = (mu + 1) * n;
    let mut m_mat = TaylorMatrix::zeros(size, size, order);
    let mut n_mat = TaylorMatrix::zeros(size, n, order);
    let mut g = TaylorMatrix::zeros(size, 1, order);
    for k in 0..=mu {
        for j in 0..=k {
            let mut block = e_der[k - j].scale(binomial(k, j));
            if j < k {
                block = &block - &a_der[k - j - 1].scale(binomial(k, j + 1));
            }
            m_mat.set_block(k * n, j * n, &block);
        }
        n_mat.set_block(k * n, 0, &a_der[k]);
        g.set_block(k * n, 0, &f_der[k]);
    }
    Ok(DerivativeArrayLinear {
        mu,
        n,
        m: m_mat,
        n_mat,
        g,
    })
}

/// Time derivatives of the level-μ arrays from the level-(μ+1) values:
/// `Ṁ[k][j] = M⁺[k+1][j] - M[k][j-1] + N[k][j]`, `Ṅ[k] = N⁺[k+1]`,
/// `ġ[k] = g⁺[k+1]`, where `⁺` marks level μ+1 and the level-μ blocks are the
/// leading blocks of the level-(μ+1) array.
pub fn shift_derivatives(
    next: &DerivativeArrayLinear,
) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let n = next.n;
    let mu = next.mu - 1;
    let size = (mu + 1) * n;
    let m1 = next.m.value();
    let n1 = next.n_mat.value();
    let g1 = next.g.value();
    let mut mdot = DMatrix::zeros(size, size);
    let mut ndot = DMatrix::zeros(size, n);
    let mut gdot = DVector::zeros(size);
    for k in 0..=mu {
        for j in 0..=mu {
            let mut block = m1.view(((k + 1) * n, j * n), (n, n)).into_owned();
            if j >= 1 {
                block -= m1.view((k * n, (j - 1) * n), (n, n));
            } else {
                block += n1.view((k * n, 0), (n, n));
            }
            mdot.view_mut((k * n, j * n), (n, n)).copy_from(&block);
        }
        ndot.view_mut((k * n, 0), (n, n))
            .copy_from(&n1.view(((k + 1) * n, 0), (n, n)));
        gdot.rows_mut(k * n, n)
            .copy_from(&g1.view(((k + 1) * n, 0), (n, 1)).column(0));
    }
    (mdot, ndot, gdot)
}

/// A nonlinear DAE `F(t, x, ẋ) = 0` with a user-supplied derivative array.
///
/// `y` stacks `ẋ, ẍ, ..., x^(ℓ+1)` for level ℓ; `jac_x` returns
/// `∂F_ℓ/∂x` (the array `N_ℓ` of the linear case is its negative).
pub trait NonlinearDae: Send + Sync {
    fn dim(&self) -> usize;
    fn char_values(&self) -> CharValues;
    fn residual(&self, t: f64, x: &DVector<f64>, xdot: &DVector<f64>) -> DVector<f64>;
    /// `∂F/∂x` and `∂F/∂ẋ`.
    fn residual_jacobians(
        &self,
        t: f64,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>);
    fn array(&self, level: usize, t: f64, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64>;
    fn jac_y(&self, level: usize, t: f64, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64>;
    fn jac_x(&self, level: usize, t: f64, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64>;
}

/// Result of [`verify_nonlinear_array`].
#[derive(Debug, Clone, Copy)]
pub struct ArrayCheck {
    /// `|F_ℓ(0 block) - F|`.
    pub residual_mismatch: f64,
    pub jac_y_deviation: f64,
    pub jac_x_deviation: f64,
}

/// Central finite-difference check of `jac_x`/`jac_y` against `array`.
pub fn verify_nonlinear_array(
    dae: &dyn NonlinearDae,
    level: usize,
    t: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    h: f64,
) -> ArrayCheck {
    let n = dae.dim();
    let f = dae.array(level, t, x, y);
    let f0 = dae.residual(t, x, &y.rows(0, n).into_owned());
    let residual_mismatch = (f.rows(0, n) - f0).amax();

    let fd = |which: usize| -> DMatrix<f64> {
        let base = if which == 0 { x } else { y };
        let mut jac = DMatrix::zeros(f.len(), base.len());
        for i in 0..base.len() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            let (fp, fm) = if which == 0 {
                (dae.array(level, t, &plus, y), dae.array(level, t, &minus, y))
            } else {
                (dae.array(level, t, x, &plus), dae.array(level, t, x, &minus))
            };
            jac.set_column(i, &((fp - fm) / (2.0 * h)));
        }
        jac
    };
    ArrayCheck {
        residual_mismatch,
        jac_x_deviation: (fd(0) - dae.jac_x(level, t, x, y)).amax(),
        jac_y_deviation: (fd(1) - dae.jac_y(level, t, x, y)).amax(),
    }
}

/// A linear DAE seen through the nonlinear interface:
/// `F_ℓ = M_ℓ y - N_ℓ x - g_ℓ`.
pub struct LinearAsNonlinear {
    pub dae: LinearDae,
    pub cv: CharValues,
}

impl LinearAsNonlinear {
    fn level_array(&self, level: usize, t: f64) -> DerivativeArrayLinear {
        build_linear_array(&self.dae, level, t, 0).expect("provider covers the requested level")
    }
}

impl NonlinearDae for LinearAsNonlinear {
    fn dim(&self) -> usize {
        self.dae.n()
    }

    fn char_values(&self) -> CharValues {
        self.cv
    }

    fn residual(&self, t: f64, x: &DVector<f64>, xdot: &DVector<f64>) -> DVector<f64> {
        let c = self.dae.coefficients(t, 0).expect("order 0 is always available");
        c.e.value() * xdot - c.a.value() * x - c.f.value().column(0)
    }

    fn residual_jacobians(
        &self,
        t: f64,
        _x: &DVector<f64>,
        _xdot: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let c = self.dae.coefficients(t, 0).expect("order 0 is always available");
        (-c.a.value(), c.e.value().clone())
    }

    fn array(&self, level: usize, t: f64, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let arr = self.level_array(level, t);
        arr.m.value() * y - arr.n_mat.value() * x - arr.g.value().column(0)
    }

    fn jac_y(&self, level: usize, t: f64, _x: &DVector<f64>, _y: &DVector<f64>) -> DMatrix<f64> {
        self.level_array(level, t).m.value().clone()
    }

    fn jac_x(&self, level: usize, t: f64, _x: &DVector<f64>, _y: &DVector<f64>) -> DMatrix<f64> {
        -self.level_array(level, t).n_mat.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `E = diag(t, 1)`, `A = I`, `f = (sin t, 0)`.
    struct Toy;

    impl CoefficientProvider for Toy {
        fn dim(&self) -> usize {
            2
        }
        fn max_order(&self) -> usize {
            8
        }
        fn coefficients(&self, t: f64, order: usize) -> Coefficients {
            let mut e = vec![DMatrix::zeros(2, 2); order + 1];
            e[0] = DMatrix::from_row_slice(2, 2, &[t, 0.0, 0.0, 1.0]);
            if order >= 1 {
                e[1][(0, 0)] = 1.0;
            }
            let a = TaylorMatrix::identity(2, order);
            let f = (0..=order)
                .map(|j| {
                    let d = (t + j as f64 * std::f64::consts::FRAC_PI_2).sin() / factorial(j);
                    DMatrix::from_row_slice(2, 1, &[d, 0.0])
                })
                .collect();
            Coefficients {
                e: TaylorMatrix::new(e).unwrap(),
                a,
                f: TaylorMatrix::new(f).unwrap(),
            }
        }
    }

    fn toy() -> LinearDae {
        LinearDae::new(Arc::new(Toy))
    }

    #[test]
    fn base_level_is_the_dae() {
        let arr = build_linear_array(&toy(), 0, 0.3, 1).unwrap();
        let c = toy().coefficients(0.3, 1).unwrap();
        assert_eq!(arr.m, c.e);
        assert_eq!(arr.n_mat, c.a);
        assert_eq!(arr.g, c.f);
    }

    #[test]
    fn level_one_blocks() {
        let arr = build_linear_array(&toy(), 1, 0.3, 0).unwrap();
        let m = arr.m.value();
        // block (1,0) = Ė - A = diag(1,0) - I
        let b10 = m.view((2, 0), (2, 2)).into_owned();
        assert_eq!(b10, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0]));
        assert_eq!(m.view((0, 2), (2, 2)).amax(), 0.0);
        assert_eq!(m.view((2, 2), (2, 2)).into_owned(), m.view((0, 0), (2, 2)).into_owned());
    }

    #[test]
    fn constant_identity_level_one() {
        struct Ode;
        impl CoefficientProvider for Ode {
            fn dim(&self) -> usize {
                2
            }
            fn max_order(&self) -> usize {
                4
            }
            fn coefficients(&self, _t: f64, order: usize) -> Coefficients {
                Coefficients {
                    e: TaylorMatrix::identity(2, order),
                    a: TaylorMatrix::zeros(2, 2, order),
                    f: TaylorMatrix::zeros(2, 1, order),
                }
            }
        }
        let arr = build_linear_array(&LinearDae::new(Arc::new(Ode)), 1, 0.0, 0).unwrap();
        assert_eq!(arr.m.value(), &DMatrix::identity(4, 4));
        assert_eq!(arr.n_mat.value().amax(), 0.0);
        assert_eq!(arr.g.value().amax(), 0.0);
    }

    #[test]
    fn provider_order_is_checked() {
        assert!(matches!(
            build_linear_array(&toy(), 8, 0.0, 1),
            Err(DaeError::ProviderOrder { requested: 9, available: 8 })
        ));
    }

    #[test]
    fn shift_matches_taylor_slices() {
        for mu in 0..3 {
            let arr = build_linear_array(&toy(), mu, 0.7, 1).unwrap();
            let next = build_linear_array(&toy(), mu + 1, 0.7, 0).unwrap();
            let (mdot, ndot, gdot) = shift_derivatives(&next);
            assert!((mdot - arr.m.slice(1)).amax() < 1e-14);
            assert!((ndot - arr.n_mat.slice(1)).amax() < 1e-14);
            assert!((gdot - arr.g.slice(1).column(0)).amax() < 1e-14);
        }
    }

    #[test]
    fn linear_wrapper_base_jacobian_is_e() {
        let w = LinearAsNonlinear {
            dae: toy(),
            cv: CharValues { mu: 0, a: 0, d: 2 },
        };
        let x = DVector::from_vec(vec![0.1, 0.2]);
        let y = DVector::from_vec(vec![0.3, -0.4]);
        let m0 = w.jac_y(0, 0.5, &x, &y);
        assert_eq!(m0, toy().coefficients(0.5, 0).unwrap().e.value().clone());
        let chk = verify_nonlinear_array(&w, 1, 0.5, &x, &DVector::from_vec(vec![0.3, -0.4, 1.0, 2.0]), 1e-6);
        assert!(chk.jac_x_deviation < 1e-8 && chk.jac_y_deviation < 1e-8);
        assert!(chk.residual_mismatch < 1e-14);
    }
}
