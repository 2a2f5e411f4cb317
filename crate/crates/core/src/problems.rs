//! Built-in problems: the stiff linear test DAE, the pendulum, and three
//! geometric problems `E = QᵀÊQ`, `A = QᵀÂQ − QᵀÊQ̇`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::darray::{CoefficientProvider, Coefficients, LinearDae, NonlinearDae, Symmetry};
use crate::error::{DaeError, Result};
use crate::inherent::PrescribedQ;
use crate::integrate::{integrate, ClosureOde, IntegratorSpec, Method, Problem, StepMode, Version};
use crate::reduce::{CharValues, ReduceConfig, Reducer};
use crate::smoothfact::{signature, symplectic_unit};
use crate::taylor::{binomial, factorial, TaylorMatrix, TaylorScalar};

const MAX_ORDER: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ProblemKind {
    Wensch,
    Pendulum,
    Self3,
    Skew4,
    Indef5,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 5] = [
        ProblemKind::Wensch,
        ProblemKind::Pendulum,
        ProblemKind::Self3,
        ProblemKind::Skew4,
        ProblemKind::Indef5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Wensch => "wensch",
            ProblemKind::Pendulum => "pendulum",
            ProblemKind::Self3 => "self3",
            ProblemKind::Skew4 => "skew4",
            ProblemKind::Indef5 => "indef5",
        }
    }

    pub fn is_geometric(self) -> bool {
        matches!(self, ProblemKind::Self3 | ProblemKind::Skew4 | ProblemKind::Indef5)
    }

    /// Parameters with their defaults.
    pub fn default_params(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            ProblemKind::Wensch => &[("delta", -1e5), ("eta", 0.0)],
            ProblemKind::Pendulum => &[],
            _ => &[("omega", 1.0)],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    pub fn char_values(self) -> CharValues {
        let (mu, a, d) = match self {
            ProblemKind::Wensch => (0, 1, 1),
            ProblemKind::Pendulum => (2, 3, 2),
            ProblemKind::Self3 => (0, 1, 2),
            ProblemKind::Skew4 => (0, 2, 2),
            ProblemKind::Indef5 => (0, 2, 3),
        };
        CharValues { mu, a, d }
    }

    pub fn symmetry(self) -> Symmetry {
        match self {
            ProblemKind::Wensch => Symmetry::None,
            ProblemKind::Pendulum | ProblemKind::Self3 => Symmetry::SelfAdjoint,
            ProblemKind::Skew4 | ProblemKind::Indef5 => Symmetry::SkewAdjoint,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = DaeError;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| DaeError::Config(format!("unknown problem '{s}'")))
    }
}

/// A problem name with parameter overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub params: BTreeMap<String, f64>,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind) -> Self {
        Self {
            kind,
            params: kind.default_params(),
        }
    }

    /// Overrides a parameter; unknown names are rejected.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match self.params.get_mut(key) {
            Some(v) => {
                *v = value;
                Ok(())
            }
            None => Err(DaeError::Config(format!(
                "problem {} has no parameter '{key}'",
                self.kind
            ))),
        }
    }

    pub fn param(&self, key: &str) -> f64 {
        self.params[key]
    }
}

/// One line of the problem catalog.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub n: usize,
    pub mu: usize,
    pub a: usize,
    pub d: usize,
    pub symmetry: &'static str,
    pub params: Vec<(String, f64)>,
    pub description: &'static str,
}

pub fn list_problems() -> Vec<CatalogEntry> {
    ProblemKind::ALL
        .into_iter()
        .map(|k| {
            let cv = k.char_values();
            CatalogEntry {
                name: k.name(),
                n: cv.a + cv.d,
                mu: cv.mu,
                a: cv.a,
                d: cv.d,
                symmetry: match k.symmetry() {
                    Symmetry::None => "none",
                    Symmetry::SelfAdjoint => "self-adjoint",
                    Symmetry::SkewAdjoint => "skew-adjoint",
                },
                params: k.default_params().into_iter().collect(),
                description: match k {
                    ProblemKind::Wensch => "stiff linear DAE with solution x1 = x2 = exp(-t), [0, 1]",
                    ProblemKind::Pendulum => "planar pendulum in Cartesian coordinates, [0, 10]",
                    ProblemKind::Self3 => "self-adjoint, symplectic flow in x^ = Qx, [0, 200 pi]",
                    ProblemKind::Skew4 => "skew-adjoint, orthogonal flow in x^ = Qx, [0, 200 pi]",
                    ProblemKind::Indef5 => "skew-adjoint, O(2,1) flow in x^ = Qx, [0, 200 pi]",
                },
            }
        })
        .collect()
}

/// Product of a linear polynomial `c0 + c1 t` and `e^{-t}` as a Taylor series.
fn linear_times_exp(c0: f64, c1: f64, t: f64, order: usize) -> TaylorScalar {
    let mut lin = vec![0.0; order + 1];
    lin[0] = c0 + c1 * t;
    if order >= 1 {
        lin[1] = c1;
    }
    let ex: Vec<f64> = (0..=order)
        .map(|j| (-t).exp() * (-1f64).powi(j as i32) / factorial(j))
        .collect();
    &TaylorScalar::new(&lin) * &TaylorScalar::new(&ex)
}

/// Linear test DAE with a stiff inherent ODE; its solution is `x1 = x2 = e^{-t}`.
#[derive(Debug, Clone, Copy)]
pub struct Wensch {
    pub delta: f64,
    pub eta: f64,
}

impl CoefficientProvider for Wensch {
    fn dim(&self) -> usize {
        2
    }

    fn max_order(&self) -> usize {
        MAX_ORDER
    }

    fn coefficients(&self, t: f64, order: usize) -> Coefficients {
        let (dl, et) = (self.delta, self.eta);
        let linear = |c0: DMatrix<f64>, c1: DMatrix<f64>| {
            let mut s = vec![DMatrix::zeros(2, 2); order + 1];
            s[0] = &c0 + &c1 * t;
            if order >= 1 {
                s[1] = c1;
            }
            TaylorMatrix::new(s).expect("uniform shapes")
        };
        let e = linear(
            DMatrix::from_row_slice(2, 2, &[dl - 1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, dl, 0.0, 0.0]),
        );
        let a = linear(
            DMatrix::from_row_slice(2, 2, &[-et * (dl - 1.0), 0.0, dl - 1.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, -et * dl, 0.0, dl]),
        );
        let f1 = linear_times_exp((et - 1.0) * (dl - 1.0), (et - 1.0) * dl, t, order);
        let f2 = linear_times_exp(-(dl - 2.0), -dl, t, order);
        let f = (0..=order)
            .map(|j| DMatrix::from_column_slice(2, 1, &[f1.coeff(j), f2.coeff(j)]))
            .collect();
        Coefficients {
            e,
            a,
            f: TaylorMatrix::new(f).expect("uniform shapes"),
        }
    }
}

impl Wensch {
    pub fn from_spec(spec: &ProblemSpec) -> Self {
        Self {
            delta: spec.param("delta"),
            eta: spec.param("eta"),
        }
    }

    pub fn dae(self) -> LinearDae {
        LinearDae::new(Arc::new(self))
    }

    pub fn reducer(self) -> Reducer {
        Reducer::new(
            self.dae(),
            ProblemKind::Wensch.char_values(),
            ReduceConfig::default(),
        )
    }

    pub fn exact(t: f64) -> DVector<f64> {
        DVector::from_element(2, (-t).exp())
    }
}

/// `Q(t) = I + s(t) N` with `N` the tridiagonal off-diagonal pattern and
/// `s = ½ sin ωt`.
#[derive(Debug, Clone, Copy)]
pub struct Geometric {
    pub kind: ProblemKind,
    pub omega: f64,
}

impl Geometric {
    pub fn new(kind: ProblemKind, omega: f64) -> Result<Self> {
        if !kind.is_geometric() {
            return Err(DaeError::Config(format!("{kind} is not a flow problem")));
        }
        Ok(Self { kind, omega })
    }

    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        Self::new(spec.kind, spec.param("omega"))
    }

    pub fn n(&self) -> usize {
        match self.kind {
            ProblemKind::Self3 => 3,
            ProblemKind::Skew4 => 4,
            _ => 5,
        }
    }

    pub fn d(&self) -> usize {
        self.kind.char_values().d
    }

    /// `(Ê, Â)`.
    pub fn hat(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n();
        match self.kind {
            ProblemKind::Self3 => (
                DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
                DMatrix::identity(3, 3),
            ),
            ProblemKind::Skew4 => {
                let mut e = DMatrix::zeros(n, n);
                e[(0, 0)] = 1.0;
                e[(1, 1)] = 1.0;
                let mut a = DMatrix::zeros(n, n);
                for k in [0, 2] {
                    a[(k, k + 1)] = 1.0;
                    a[(k + 1, k)] = -1.0;
                }
                (e, a)
            }
            _ => {
                let mut e = DMatrix::zeros(n, n);
                e[(0, 0)] = 1.0;
                e[(1, 1)] = 1.0;
                e[(2, 2)] = -1.0;
                let mut a = DMatrix::zeros(n, n);
                for k in [0, 3] {
                    a[(k, k + 1)] = 1.0;
                    a[(k + 1, k)] = -1.0;
                }
                (e, a)
            }
        }
    }

    /// Matrix defining the quadratic group of the flow of `x̂1`.
    pub fn group_matrix(&self) -> DMatrix<f64> {
        match self.kind {
            ProblemKind::Self3 => symplectic_unit(1),
            ProblemKind::Skew4 => signature(2, 0),
            _ => signature(2, 1),
        }
    }

    pub fn inertia(&self) -> Option<(usize, usize)> {
        match self.kind {
            ProblemKind::Skew4 => Some((2, 0)),
            ProblemKind::Indef5 => Some((2, 1)),
            _ => None,
        }
    }

    /// `Q_problem` as a Taylor series of the given order.
    pub fn q_series(&self, t: f64, order: usize) -> TaylorMatrix {
        let n = self.n();
        let mut nmat = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            nmat[(i, i + 1)] = 1.0;
            nmat[(i + 1, i)] = 1.0;
        }
        let w = self.omega;
        let slices = (0..=order)
            .map(|j| {
                let sj = 0.5 * w.powi(j as i32) * (w * t + j as f64 * std::f64::consts::FRAC_PI_2).sin()
                    / factorial(j);
                let mut m = &nmat * sj;
                if j == 0 {
                    m += DMatrix::identity(n, n);
                }
                m
            })
            .collect();
        TaylorMatrix::new(slices).expect("uniform shapes")
    }

    /// `(Q(t), Q̇(t))` of the constructor transformation `x̂ = Q x`.
    pub fn q_problem(&self, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let q = self.q_series(t, 1);
        (q.value().clone(), q.slice(1).clone())
    }

    /// The map for the PRESCRIBED version: `x = Q⁻¹ x̂`, so the strategy
    /// uses `Q⁻¹` with derivative `−Q⁻¹ Q̇ Q⁻¹`.
    pub fn prescribed_map(&self) -> PrescribedQ {
        let me = *self;
        Arc::new(move |t| {
            let (q, qd) = me.q_problem(t);
            let qi = q.try_inverse().expect("Q is nonsingular for |s| <= 1/2");
            let qid = -(&qi * qd * &qi);
            (qi, qid)
        })
    }

    pub fn dae(&self) -> LinearDae {
        let dae = LinearDae::new(Arc::new(*self)).with_symmetry(self.kind.symmetry());
        match self.inertia() {
            Some((p, q)) => dae.with_inertia(p, q),
            None => dae,
        }
    }

    pub fn reducer(&self) -> Reducer {
        Reducer::new(
            self.dae(),
            self.kind.char_values(),
            ReduceConfig {
                simplified: true,
                ..ReduceConfig::default()
            },
        )
    }
}

impl CoefficientProvider for Geometric {
    fn dim(&self) -> usize {
        self.n()
    }

    fn max_order(&self) -> usize {
        MAX_ORDER
    }

    fn coefficients(&self, t: f64, order: usize) -> Coefficients {
        let n = self.n();
        let qf = self.q_series(t, order + 1);
        let qdot = qf.differentiate();
        let q = qf.with_order(order);
        let (eh, ah) = self.hat();
        let eh = TaylorMatrix::constant(eh, order);
        let ah = TaylorMatrix::constant(ah, order);
        let qt = q.transpose();
        let qte = &qt * &eh;
        Coefficients {
            e: &qte * &q,
            a: &(&(&qt * &ah) * &q) - &(&qte * &qdot),
            f: TaylorMatrix::zeros(n, 1, order),
        }
    }
}

/// Planar pendulum with unit length and mass in Cartesian coordinates:
/// `ẋ3 = x1`, `ẋ4 = x2`, `−ẋ1 = 2x3x5`, `−ẋ2 = 1 + 2x4x5`, `0 = x3² + x4² − 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pendulum;

impl Pendulum {
    pub const N: usize = 5;

    pub fn initial_state() -> DVector<f64> {
        DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0, 0.0])
    }

    /// Series of the components of `x` from `x` and `y = (ẋ, ẍ, ...)`.
    fn state_series(x: &DVector<f64>, y: &DVector<f64>, order: usize) -> Vec<TaylorScalar> {
        let n = Self::N;
        (0..n)
            .map(|i| {
                let mut derivs = vec![x[i]];
                derivs.extend((0..order).map(|k| y[k * n + i]));
                TaylorScalar::from_derivatives(&derivs)
            })
            .collect()
    }

    fn residual_series(xs: &[TaylorScalar], xd: &[TaylorScalar]) -> Vec<TaylorScalar> {
        let order = xd[0].order();
        let one = TaylorScalar::constant(1.0, order);
        vec![
            &xd[2] - &xs[0],
            &xd[3] - &xs[1],
            &(-&xd[0]) - &(&xs[2] * &xs[4]).scale(2.0),
            &(&(-&xd[1]) - &one) - &(&xs[3] * &xs[4]).scale(2.0),
            &(&one - &(&xs[2] * &xs[2])) - &(&xs[3] * &xs[3]),
        ]
    }

    /// `∂F/∂x` with entries given as series.
    fn fx_series(xs: &[TaylorScalar]) -> TaylorMatrix {
        let order = xs[0].order();
        let mut m = TaylorMatrix::zeros(5, 5, order);
        let c = |v: f64| TaylorScalar::constant(v, order);
        m.set_entry(0, 0, &c(-1.0));
        m.set_entry(1, 1, &c(-1.0));
        m.set_entry(2, 2, &xs[4].scale(-2.0));
        m.set_entry(2, 4, &xs[2].scale(-2.0));
        m.set_entry(3, 3, &xs[4].scale(-2.0));
        m.set_entry(3, 4, &xs[3].scale(-2.0));
        m.set_entry(4, 2, &xs[2].scale(-2.0));
        m.set_entry(4, 3, &xs[3].scale(-2.0));
        m
    }

    fn fxd() -> DMatrix<f64> {
        let mut m = DMatrix::zeros(5, 5);
        m[(0, 2)] = 1.0;
        m[(1, 3)] = 1.0;
        m[(2, 0)] = -1.0;
        m[(3, 1)] = -1.0;
        m
    }

    /// `(∂F_ℓ/∂x, ∂F_ℓ/∂y)`.
    fn array_jacobians(level: usize, x: &DVector<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = Self::N;
        let xs: Vec<_> = Self::state_series(x, y, level + 1)
            .into_iter()
            .map(|s| s.with_order(level))
            .collect();
        let fx = Self::fx_series(&xs);
        let fxd = Self::fxd();
        let rows = (level + 1) * n;
        let mut jx = DMatrix::zeros(rows, n);
        let mut jy = DMatrix::zeros(rows, rows);
        for k in 0..=level {
            jx.view_mut((k * n, 0), (n, n)).copy_from(&fx.derivative(k));
            for j in 1..=level + 1 {
                // ∂(D^k F)/∂x^{(j)} = C(k,j) D^{k-j} F_x + C(k,j-1) D^{k-j+1} F_ẋ
                let mut blk = DMatrix::zeros(n, n);
                if j <= k {
                    blk += fx.derivative(k - j) * binomial(k, j);
                }
                if j == k + 1 {
                    blk += &fxd;
                }
                jy.view_mut((k * n, (j - 1) * n), (n, n)).copy_from(&blk);
            }
        }
        (jx, jy)
    }

    /// Exact solution at the given times, from the angle equation
    /// `θ̈ = −cos θ` with `x3 = cos θ`, `x4 = sin θ`, integrated at tight
    /// tolerance.
    pub fn reference(times: &[f64]) -> Result<Vec<DVector<f64>>> {
        let spec = IntegratorSpec::new(
            Method::DormandPrince,
            13,
            StepMode::Adaptive(1e-13),
            Version::Ode(crate::inherent::QKind::Inherent),
        )?;
        let mut ode = ClosureOde::new(2, |_, z: &DVector<f64>| {
            DVector::from_vec(vec![z[1], -z[0].cos()])
        });
        let to_state = |z: &DVector<f64>| {
            let (th, om) = (z[0], z[1]);
            DVector::from_vec(vec![
                -th.sin() * om,
                th.cos() * om,
                th.cos(),
                th.sin(),
                0.5 * (om * om - th.sin()),
            ])
        };
        let mut out = Vec::with_capacity(times.len());
        let mut z = DVector::from_vec(vec![0.0, 0.0]);
        let mut t = 0.0;
        for &ti in times {
            if ti > t {
                let tr = integrate(&spec, Problem::Inherent(&mut ode), t, ti, &z)?;
                z = tr.states.last().expect("non-empty").clone();
                t = ti;
            }
            out.push(to_state(&z));
        }
        Ok(out)
    }

    /// `|x3² + x4² − 1|`.
    pub fn constraint_residual(x: &DVector<f64>) -> f64 {
        (x[2] * x[2] + x[3] * x[3] - 1.0).abs()
    }
}

impl NonlinearDae for Pendulum {
    fn dim(&self) -> usize {
        Self::N
    }

    fn char_values(&self) -> CharValues {
        ProblemKind::Pendulum.char_values()
    }

    fn residual(&self, t: f64, x: &DVector<f64>, xdot: &DVector<f64>) -> DVector<f64> {
        self.array(0, t, x, xdot)
    }

    fn residual_jacobians(
        &self,
        _t: f64,
        x: &DVector<f64>,
        _xdot: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let xs: Vec<_> = x.iter().map(|&v| TaylorScalar::constant(v, 0)).collect();
        (Self::fx_series(&xs).value().clone(), Self::fxd())
    }

    fn array(&self, level: usize, _t: f64, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let n = Self::N;
        let full = Self::state_series(x, y, level + 1);
        let xd: Vec<_> = full.iter().map(|s| s.differentiate()).collect();
        let xs: Vec<_> = full.iter().map(|s| s.with_order(level)).collect();
        let f = Self::residual_series(&xs, &xd);
        DVector::from_fn((level + 1) * n, |r, _| f[r % n].derivative(r / n))
    }

    fn jac_y(&self, level: usize, _t: f64, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        Self::array_jacobians(level, x, y).1
    }

    fn jac_x(&self, level: usize, _t: f64, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        Self::array_jacobians(level, x, y).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darray::verify_nonlinear_array;
    use crate::reduce::characteristic_values;

    #[test]
    fn catalog() {
        let cat = list_problems();
        assert_eq!(cat.len(), 5);
        let p = cat.iter().find(|e| e.name == "pendulum").unwrap();
        assert_eq!((p.mu, p.a, p.d), (2, 3, 2));
        let s = cat.iter().find(|e| e.name == "self3").unwrap();
        assert_eq!((s.mu, s.symmetry), (0, "self-adjoint"));
    }

    #[test]
    fn wensch_exact_solution_satisfies_dae() {
        let w = Wensch { delta: -1e5, eta: 0.3 };
        for &t in &[0.0, 0.4, 1.0] {
            let c = w.coefficients(t, 1);
            let x = Wensch::exact(t);
            let r = c.e.value() * (-&x) - c.a.value() * &x - c.f.value().column(0);
            assert!(r.amax() < 1e-9 * 1e5, "{r}");
            // derivative slice of f against a central difference
            let h = 1e-6;
            let fd = (w.coefficients(t + h, 0).f.value() - w.coefficients(t - h, 0).f.value()) / (2.0 * h);
            assert!((fd - c.f.slice(1)).amax() < 1e-3);
        }
    }

    #[test]
    fn declared_characteristic_values_hold() {
        let w = Wensch { delta: -1e5, eta: 0.0 }.dae();
        let samples = [0.0, 0.5, 1.0];
        assert_eq!(
            characteristic_values(&w, &samples, &ReduceConfig::default()).unwrap(),
            ProblemKind::Wensch.char_values()
        );
        for kind in [ProblemKind::Self3, ProblemKind::Skew4, ProblemKind::Indef5] {
            let g = Geometric::new(kind, 1.0).unwrap();
            assert_eq!(
                characteristic_values(&g.dae(), &samples, &ReduceConfig::default()).unwrap(),
                kind.char_values()
            );
        }
    }

    #[test]
    fn geometric_problems_carry_their_symmetry() {
        for kind in [ProblemKind::Self3, ProblemKind::Skew4, ProblemKind::Indef5] {
            let g = Geometric::new(kind, 1.0).unwrap();
            for &t in &[0.0, 0.3, 2.0] {
                assert!(g.dae().symmetry_defect(t).unwrap() < 1e-12, "{kind} at {t}");
            }
        }
    }

    #[test]
    fn pendulum_array_jacobians_match_differences() {
        let p = Pendulum;
        let x = DVector::from_vec(vec![0.3, -0.2, 0.6, 0.8, 0.1]);
        let y = DVector::from_fn(15, |i, _| 0.1 * (i as f64 + 1.0).sin());
        for level in 0..=2 {
            let chk = verify_nonlinear_array(&p, level, 0.0, &x, &y.rows(0, (level + 1) * 5).into_owned(), 1e-6);
            assert!(chk.jac_y_deviation < 1e-7 && chk.jac_x_deviation < 1e-7, "{level}: {chk:?}");
        }
    }

    #[test]
    fn pendulum_reference_stays_on_constraint() {
        let xs = Pendulum::reference(&[0.0, 1.0, 5.0]).unwrap();
        assert_eq!(xs[0], Pendulum::initial_state());
        for x in &xs {
            assert!(Pendulum::constraint_residual(x) < 1e-14);
            let r = Pendulum.residual(0.0, x, &DVector::zeros(5));
            assert!(r[4].abs() < 1e-14);
        }
        // energy: v²/2 + x4 is conserved
        for x in &xs {
            assert!((0.5 * (x[0] * x[0] + x[1] * x[1]) + x[3]).abs() < 1e-10);
        }
    }
}
