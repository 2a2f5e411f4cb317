//! Time stepping: embedded Dormand–Prince pairs, Gauss and Radau IIA
//! collocation for the inherent ODE, and direct collocation of the reduced
//! DAE (Radau, or Gauss nodes for the differential part with Lobatto nodes
//! for the algebraic part).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::darray::NonlinearDae;
use crate::error::{DaeError, Result};
use crate::inherent::{
    consistent_derivatives, gauss_newton, nonlinear_rotated_q, GnOptions, InherentSystem, QKind,
};
use crate::reduce::{ReduceDecisions, ReducedDae, Reducer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    GaussLobatto,
    Radau,
    DormandPrince,
    Gauss,
    ImplicitEuler,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::GaussLobatto,
        Method::Radau,
        Method::DormandPrince,
        Method::Gauss,
        Method::ImplicitEuler,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::GaussLobatto => "GAUSS_LOBATTO",
            Method::Radau => "RADAU",
            Method::DormandPrince => "DORMAND_PRINCE",
            Method::Gauss => "GAUSS",
            Method::ImplicitEuler => "IMPLICIT_EULER",
        }
    }

    pub fn supports_direct(self) -> bool {
        matches!(
            self,
            Method::GaussLobatto | Method::Radau | Method::ImplicitEuler
        )
    }

    pub fn default_stages(self) -> usize {
        match self {
            Method::GaussLobatto | Method::Gauss => 2,
            Method::Radau => 4,
            Method::DormandPrince => 7,
            Method::ImplicitEuler => 1,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = DaeError;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| DaeError::Config(format!("unknown method '{s}'")))
    }
}

/// Which equations are discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Version {
    Ode(QKind),
    Direct,
}

impl Version {
    pub fn name(self) -> &'static str {
        match self {
            Version::Ode(k) => k.name(),
            Version::Direct => "DIRECT",
        }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Version {
    type Err = DaeError;
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("direct") {
            Ok(Version::Direct)
        } else {
            Ok(Version::Ode(s.parse()?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    Fixed(usize),
    Adaptive(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSpec {
    pub method: Method,
    pub stages: usize,
    pub mode: StepMode,
    pub version: Version,
}

impl IntegratorSpec {
    pub fn new(method: Method, stages: usize, mode: StepMode, version: Version) -> Result<Self> {
        let spec = Self {
            method,
            stages,
            mode,
            version,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version == Version::Direct && !self.method.supports_direct() {
            return Err(DaeError::Config(format!(
                "{} cannot discretize the DAE directly",
                self.method
            )));
        }
        if self.version != Version::Direct && self.method == Method::GaussLobatto {
            return Err(DaeError::Config(
                "GAUSS_LOBATTO is a DAE method and needs version DIRECT".into(),
            ));
        }
        let ok = match self.method {
            Method::DormandPrince => matches!(self.stages, 7 | 13),
            Method::ImplicitEuler => self.stages == 1,
            _ => (1..=8).contains(&self.stages),
        };
        if !ok {
            return Err(DaeError::Config(format!(
                "{} with {} stages is not available",
                self.method, self.stages
            )));
        }
        match self.mode {
            StepMode::Fixed(0) => Err(DaeError::Config("need at least one step".into())),
            StepMode::Adaptive(tol) if !(tol > 0.0 && tol.is_finite()) => {
                Err(DaeError::Config(format!("invalid tolerance {tol}")))
            }
            _ => Ok(()),
        }
    }

    /// Classical order of the method.
    pub fn order(&self) -> usize {
        match self.method {
            Method::DormandPrince if self.stages == 7 => 4,
            Method::DormandPrince => 7,
            Method::Gauss | Method::GaussLobatto => 2 * self.stages,
            Method::Radau => 2 * self.stages - 1,
            Method::ImplicitEuler => 1,
        }
    }

    /// Stage label as printed in reports.
    pub fn stage_label(&self) -> String {
        match self.method {
            Method::GaussLobatto => format!("{}-{}", self.stages, self.stages + 1),
            _ => self.stages.to_string(),
        }
    }

    fn effective_stages(&self) -> usize {
        if self.method == Method::ImplicitEuler {
            1
        } else {
            self.stages
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Full state `x` at each time.
    pub states: Vec<DVector<f64>>,
    /// Inherent variables in the window frozen at each time (ODE versions).
    pub x1s: Vec<DVector<f64>>,
    pub steps_taken: usize,
    pub rejected: usize,
}

/// Butcher tableau of a collocation method.
#[derive(Debug, Clone)]
pub struct Tableau {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

/// Shifted Legendre polynomial `P_n(2τ - 1)` and its τ-derivative.
pub fn shifted_legendre(n: usize, tau: f64) -> (f64, f64) {
    let x = 2.0 * tau - 1.0;
    let (mut p0, mut p1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        let d2 = ((2.0 * kf + 1.0) * (p1 + x * d1) - kf * d0) / (kf + 1.0);
        (p0, p1, d0, d1) = (p1, p2, d1, d2);
    }
    (p1, 2.0 * d1)
}

/// Simple roots of `f` in the open interval (0, 1), by scan and bisection.
fn roots_in_unit<F: Fn(f64) -> f64>(f: F) -> Vec<f64> {
    const GRID: usize = 4096;
    let mut roots = Vec::new();
    let mut a = 1e-12;
    let mut fa = f(a);
    for i in 1..=GRID {
        let b = if i == GRID { 1.0 - 1e-12 } else { i as f64 / GRID as f64 };
        let fb = f(b);
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 || hi - lo < 1e-17 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if flo * fm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    roots
}

/// Gauss–Legendre nodes on [0, 1].
pub fn gauss_nodes(s: usize) -> Vec<f64> {
    roots_in_unit(|t| shifted_legendre(s, t).0)
}

/// Radau IIA nodes on [0, 1]; the last node is 1.
pub fn radau_nodes(s: usize) -> Vec<f64> {
    let mut c = if s == 1 {
        Vec::new()
    } else {
        roots_in_unit(|t| shifted_legendre(s, t).0 - shifted_legendre(s - 1, t).0)
    };
    c.push(1.0);
    c
}

/// `m ≥ 2` Lobatto nodes on [0, 1], including both end points.
pub fn lobatto_nodes(m: usize) -> Vec<f64> {
    let mut c = vec![0.0];
    if m > 2 {
        c.extend(roots_in_unit(|t| shifted_legendre(m - 1, t).1));
    }
    c.push(1.0);
    c
}

/// Monomial coefficients of the Lagrange basis: column `j` holds `ℓ_j`.
fn lagrange_coefficients(nodes: &[f64]) -> DMatrix<f64> {
    let m = nodes.len();
    let v = DMatrix::from_fn(m, m, |i, k| nodes[i].powi(k as i32));
    v.try_inverse().expect("distinct collocation nodes")
}

fn poly_eval(coef: &DMatrix<f64>, j: usize, tau: f64) -> f64 {
    (0..coef.nrows()).rev().fold(0.0, |acc, k| acc * tau + coef[(k, j)])
}

fn poly_deriv(coef: &DMatrix<f64>, j: usize, tau: f64) -> f64 {
    (1..coef.nrows())
        .rev()
        .fold(0.0, |acc, k| acc * tau + k as f64 * coef[(k, j)])
}

fn poly_integral(coef: &DMatrix<f64>, j: usize, tau: f64) -> f64 {
    (0..coef.nrows())
        .rev()
        .fold(0.0, |acc, k| acc * tau + coef[(k, j)] / (k as f64 + 1.0))
        * tau
}

/// Collocation tableau `a_ij = ∫_0^{c_i} ℓ_j`, `b_j = ∫_0^1 ℓ_j`.
pub fn collocation_tableau(c: &[f64]) -> Tableau {
    let s = c.len();
    let coef = lagrange_coefficients(c);
    Tableau {
        a: DMatrix::from_fn(s, s, |i, j| poly_integral(&coef, j, c[i])),
        b: DVector::from_fn(s, |j, _| poly_integral(&coef, j, 1.0)),
        c: DVector::from_column_slice(c),
    }
}

pub fn gauss_tableau(s: usize) -> Tableau {
    collocation_tableau(&gauss_nodes(s))
}

pub fn radau_tableau(s: usize) -> Tableau {
    collocation_tableau(&radau_nodes(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplicitPair {
    /// Dormand–Prince 5(4), 7 stages.
    Dp54,
    /// Dormand–Prince 8(7), 13 stages.
    Dp87,
}

/// Explicit embedded pair. The step advances with the lower-order weights
/// `b`; `e = b_high - b` estimates the local error of that solution.
#[derive(Debug, Clone)]
pub struct ExplicitTableau {
    pub pair: ExplicitPair,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub e: DVector<f64>,
}

impl ExplicitTableau {
    pub fn new(pair: ExplicitPair) -> Self {
        let (rows, c, b_high, b): (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<f64>) = match pair {
            ExplicitPair::Dp54 => dp54(),
            ExplicitPair::Dp87 => dp87(),
        };
        let s = c.len();
        let mut a = DMatrix::zeros(s, s);
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                a[(i + 1, j)] = *v;
            }
        }
        let b = DVector::from_vec(b);
        Self {
            pair,
            a,
            e: DVector::from_vec(b_high) - &b,
            b,
            c: DVector::from_vec(c),
        }
    }

    /// Order of the propagated solution.
    pub fn order(&self) -> usize {
        match self.pair {
            ExplicitPair::Dp54 => 4,
            ExplicitPair::Dp87 => 7,
        }
    }
}

type PairData = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<f64>);

fn dp54() -> PairData {
    let rows = vec![
        vec![1.0 / 5.0],
        vec![3.0 / 40.0, 9.0 / 40.0],
        vec![44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        vec![19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        vec![9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
        vec![35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    let c = vec![0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    let b5 = vec![
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    let b4 = vec![
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    (rows, c, b5, b4)
}

fn dp87() -> PairData {
    let rows = vec![
        vec![1.0 / 18.0],
        vec![1.0 / 48.0, 1.0 / 16.0],
        vec![1.0 / 32.0, 0.0, 3.0 / 32.0],
        vec![5.0 / 16.0, 0.0, -75.0 / 64.0, 75.0 / 64.0],
        vec![3.0 / 80.0, 0.0, 0.0, 3.0 / 16.0, 3.0 / 20.0],
        vec![
            29443841.0 / 614563906.0,
            0.0,
            0.0,
            77736538.0 / 692538347.0,
            -28693883.0 / 1125000000.0,
            23124283.0 / 1800000000.0,
        ],
        vec![
            16016141.0 / 946692911.0,
            0.0,
            0.0,
            61564180.0 / 158732637.0,
            22789713.0 / 633445777.0,
            545815736.0 / 2771057229.0,
            -180193667.0 / 1043307555.0,
        ],
        vec![
            39632708.0 / 573591083.0,
            0.0,
            0.0,
            -433636366.0 / 683701615.0,
            -421739975.0 / 2616292301.0,
            100302831.0 / 723423059.0,
            790204164.0 / 839813087.0,
            800635310.0 / 3783071287.0,
        ],
        vec![
            246121993.0 / 1340847787.0,
            0.0,
            0.0,
            -37695042795.0 / 15268766246.0,
            -309121744.0 / 1061227803.0,
            -12992083.0 / 490766935.0,
            6005943493.0 / 2108947869.0,
            393006217.0 / 1396673457.0,
            123872331.0 / 1001029789.0,
        ],
        vec![
            -1028468189.0 / 846180014.0,
            0.0,
            0.0,
            8478235783.0 / 508512852.0,
            1311729495.0 / 1432422823.0,
            -10304129995.0 / 1701304382.0,
            -48777925059.0 / 3047939560.0,
            15336726248.0 / 1032824649.0,
            -45442868181.0 / 3398467696.0,
            3065993473.0 / 597172653.0,
        ],
        vec![
            185892177.0 / 718116043.0,
            0.0,
            0.0,
            -3185094517.0 / 667107341.0,
            -477755414.0 / 1098053517.0,
            -703635378.0 / 230739211.0,
            5731566787.0 / 1027545527.0,
            5232866602.0 / 850066563.0,
            -4093664535.0 / 808688257.0,
            3962137247.0 / 1805957418.0,
            65686358.0 / 487910083.0,
        ],
        vec![
            403863854.0 / 491063109.0,
            0.0,
            0.0,
            -5068492393.0 / 434740067.0,
            -411421997.0 / 543043805.0,
            652783627.0 / 914296604.0,
            11173962825.0 / 925320556.0,
            -13158990841.0 / 6184727034.0,
            3936647629.0 / 1978049680.0,
            -160528059.0 / 685178525.0,
            248638103.0 / 1413531060.0,
            0.0,
        ],
    ];
    let c = vec![
        0.0,
        1.0 / 18.0,
        1.0 / 12.0,
        1.0 / 8.0,
        5.0 / 16.0,
        3.0 / 8.0,
        59.0 / 400.0,
        93.0 / 200.0,
        5490023248.0 / 9719169821.0,
        13.0 / 20.0,
        1201146811.0 / 1299019798.0,
        1.0,
        1.0,
    ];
    let b8 = vec![
        14005451.0 / 335480064.0,
        0.0,
        0.0,
        0.0,
        0.0,
        -59238493.0 / 1068277825.0,
        181606767.0 / 758867731.0,
        561292985.0 / 797845732.0,
        -1041891430.0 / 1371343529.0,
        760417239.0 / 1151165299.0,
        118820643.0 / 751138087.0,
        -528747749.0 / 2220607170.0,
        1.0 / 4.0,
    ];
    let b7 = vec![
        13451932.0 / 455176623.0,
        0.0,
        0.0,
        0.0,
        0.0,
        -808719846.0 / 976000145.0,
        1757004468.0 / 5645159321.0,
        656045339.0 / 265891186.0,
        -3867574721.0 / 1518517206.0,
        465885868.0 / 322736535.0,
        53011238.0 / 667516719.0,
        2.0 / 45.0,
        0.0,
    ];
    (rows, c, b8, b7)
}

/// Result of one explicit step.
#[derive(Debug, Clone)]
pub struct ExplicitStep {
    pub x: DVector<f64>,
    /// `h Σ e_i k_i`.
    pub err: DVector<f64>,
}

/// Scale vector `tol + tol·max(|x|, |x̂|)`.
fn scales(x: &DVector<f64>, xn: &DVector<f64>, tol: f64) -> DVector<f64> {
    x.zip_map(xn, |a, b| tol + tol * a.abs().max(b.abs()))
}

fn rms(v: &DVector<f64>, sk: &DVector<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.zip_map(sk, |a, s| (a / s).powi(2)).sum() / v.len() as f64).sqrt()
}

impl ExplicitStep {
    /// Scaled RMS error relative to `tol`.
    pub fn error_norm(&self, x_old: &DVector<f64>, tol: f64) -> f64 {
        rms(&self.err, &scales(x_old, &self.x, tol))
    }
}

/// One step of an explicit embedded pair.
pub fn step_explicit(
    sys: &mut dyn InherentSystem,
    tab: &ExplicitTableau,
    t: f64,
    x1: &DVector<f64>,
    h: f64,
) -> Result<ExplicitStep> {
    let s = tab.c.len();
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(s);
    for i in 0..s {
        let mut xi = x1.clone();
        for (j, kj) in k.iter().enumerate() {
            let aij = tab.a[(i, j)];
            if aij != 0.0 {
                xi.axpy(h * aij, kj, 1.0);
            }
        }
        let ki = sys.rhs(t + tab.c[i] * h, &xi)?;
        if ki.iter().any(|v| !v.is_finite()) {
            return Err(DaeError::NoConvergence {
                iterations: 0,
                residual: f64::NAN,
            });
        }
        k.push(ki);
    }
    let comb = |w: &DVector<f64>| {
        let mut acc = DVector::zeros(x1.len());
        for (wi, ki) in w.iter().zip(&k) {
            if *wi != 0.0 {
                acc.axpy(h * wi, ki, 1.0);
            }
        }
        acc
    };
    Ok(ExplicitStep {
        x: x1 + comb(&tab.b),
        err: comb(&tab.e),
    })
}

fn finite_difference_jacobian(
    sys: &mut dyn InherentSystem,
    t: f64,
    x: &DVector<f64>,
    f0: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let d = x.len();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let dx = f64::EPSILON.sqrt() * (1.0 + x[j].abs());
        let mut xp = x.clone();
        xp[j] += dx;
        let fp = sys.rhs(t, &xp)?;
        jac.set_column(j, &((fp - f0) / dx));
    }
    Ok(jac)
}

/// One collocation step for the inherent ODE. Affine right-hand sides are
/// solved directly; otherwise Newton iterates on the stage derivatives.
pub fn step_collocation(
    sys: &mut dyn InherentSystem,
    tab: &Tableau,
    t: f64,
    x1: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let s = tab.c.len();
    let d = x1.len();
    if d == 0 {
        return Ok(x1.clone());
    }
    let times: Vec<f64> = tab.c.iter().map(|ci| t + ci * h).collect();
    let mut affine = Vec::with_capacity(s);
    for &ti in &times {
        match sys.affine(ti)? {
            Some(bc) => affine.push(bc),
            None => break,
        }
    }
    let k = if affine.len() == s {
        // K_i = B_i (x + h Σ a_ij K_j) + c_i
        let mut m = DMatrix::identity(s * d, s * d);
        let mut rhs = DVector::zeros(s * d);
        for i in 0..s {
            let (b, c) = &affine[i];
            for j in 0..s {
                let blk = b * (-h * tab.a[(i, j)]);
                let mut view = m.view_mut((i * d, j * d), (d, d));
                view += blk;
            }
            rhs.rows_mut(i * d, d).copy_from(&(b * x1 + c));
        }
        m.lu()
            .solve(&rhs)
            .ok_or_else(|| DaeError::Singular("collocation stage matrix".into()))?
    } else {
        newton_stages(sys, tab, &times, x1, h)?
    };
    let mut x = x1.clone();
    for j in 0..s {
        x.axpy(h * tab.b[j], &k.rows(j * d, d).into_owned(), 1.0);
    }
    Ok(x)
}

fn newton_stages(
    sys: &mut dyn InherentSystem,
    tab: &Tableau,
    times: &[f64],
    x1: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let s = times.len();
    let d = x1.len();
    let mut jacs = Vec::with_capacity(s);
    let mut k = DVector::zeros(s * d);
    for (i, &ti) in times.iter().enumerate() {
        let f0 = sys.rhs(ti, x1)?;
        jacs.push(finite_difference_jacobian(sys, ti, x1, &f0)?);
        k.rows_mut(i * d, d).copy_from(&f0);
    }
    let mut m = DMatrix::identity(s * d, s * d);
    for i in 0..s {
        for j in 0..s {
            let mut view = m.view_mut((i * d, j * d), (d, d));
            view -= &jacs[i] * (h * tab.a[(i, j)]);
        }
    }
    let lu = m.lu();
    const MAX_ITER: usize = 30;
    let mut last = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let mut g = DVector::zeros(s * d);
        for i in 0..s {
            let mut xi = x1.clone();
            for j in 0..s {
                xi.axpy(h * tab.a[(i, j)], &k.rows(j * d, d).into_owned(), 1.0);
            }
            let fi = sys.rhs(times[i], &xi)?;
            g.rows_mut(i * d, d)
                .copy_from(&(k.rows(i * d, d) - fi));
        }
        let delta = lu
            .solve(&g)
            .ok_or_else(|| DaeError::Singular("Newton iteration matrix".into()))?;
        k -= &delta;
        let dn = delta.amax();
        let scale = 1.0 + k.amax();
        if dn <= 1e-12 * scale {
            return Ok(k);
        }
        if !dn.is_finite() {
            break;
        }
        // a right-hand side evaluated by an inner iteration carries noise;
        // once the corrections stop shrinking they are at that level
        if dn >= 0.5 * last && dn <= 1e-8 * scale {
            return Ok(k);
        }
        last = dn;
    }
    Err(DaeError::NoConvergence {
        iterations: MAX_ITER,
        residual: f64::NAN,
    })
}

/// `s`-stage Gauss collocation step (order `2s`).
pub fn step_gauss(
    sys: &mut dyn InherentSystem,
    t: f64,
    x1: &DVector<f64>,
    h: f64,
    s: usize,
) -> Result<DVector<f64>> {
    step_collocation(sys, &gauss_tableau(s), t, x1, h)
}

/// `s`-stage Radau IIA step (order `2s - 1`; `s = 1` is implicit Euler).
pub fn step_radau(
    sys: &mut dyn InherentSystem,
    t: f64,
    x1: &DVector<f64>,
    h: f64,
    s: usize,
) -> Result<DVector<f64>> {
    step_collocation(sys, &radau_tableau(s), t, x1, h)
}

/// A DAE discretized directly: differential equations `D(t, x, ẋ) = 0` and
/// algebraic equations `G(t, x, y) = 0` with auxiliary unknowns `y`.
pub trait DirectDae: Send {
    fn n(&self) -> usize;
    fn d(&self) -> usize;
    /// Length of the auxiliary vector `y` per algebraic node.
    fn extra(&self) -> usize;
    /// Fixes discrete decisions for a step starting at `(t0, x0)`.
    fn freeze(&mut self, t0: f64, x0: &DVector<f64>) -> Result<()>;
    /// `(D, ∂D/∂x, ∂D/∂ẋ)`.
    fn diff(
        &mut self,
        t: f64,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)>;
    /// `(G, ∂G/∂x, ∂G/∂y)`.
    fn alg(
        &mut self,
        t: f64,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)>;
    /// Auxiliary unknowns consistent with `(t0, x0)`.
    fn initial_extra(&mut self, t0: f64, x0: &DVector<f64>) -> Result<DVector<f64>>;
}

/// The reduced linear DAE `Ê1 ẋ = Â1 x + f̂1`, `0 = Â2 x + f̂2`.
pub struct LinearDirect {
    pub reducer: Reducer,
    decisions: Option<ReduceDecisions>,
    cache: Option<ReducedDae>,
}

impl LinearDirect {
    pub fn new(reducer: Reducer) -> Self {
        Self {
            reducer,
            decisions: None,
            cache: None,
        }
    }

    fn reduced(&mut self, t: f64) -> Result<&ReducedDae> {
        if self.cache.as_ref().map(|r| r.t) != Some(t) {
            let dec = self
                .decisions
                .as_ref()
                .ok_or_else(|| DaeError::Config("no window frozen".into()))?;
            self.cache = Some(self.reducer.eval(t, 0, dec)?);
        }
        Ok(self.cache.as_ref().expect("just filled"))
    }
}

impl DirectDae for LinearDirect {
    fn n(&self) -> usize {
        self.reducer.dae.n()
    }

    fn d(&self) -> usize {
        self.reducer.cv.d
    }

    fn extra(&self) -> usize {
        0
    }

    fn freeze(&mut self, t0: f64, _x0: &DVector<f64>) -> Result<()> {
        self.decisions = Some(self.reducer.freeze(t0)?);
        self.cache = None;
        Ok(())
    }

    fn diff(
        &mut self,
        t: f64,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let r = self.reduced(t)?;
        let e1 = r.e1.value();
        let a1 = r.a1.value();
        let res = e1 * xdot - a1 * x - r.f1.value().column(0);
        Ok((res, -a1, e1.clone()))
    }

    fn alg(
        &mut self,
        t: f64,
        x: &DVector<f64>,
        _y: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let r = self.reduced(t)?;
        let a2 = r.a2.value();
        let res = a2 * x + r.f2.value().column(0);
        Ok((res, a2.clone(), DMatrix::zeros(a2.nrows(), 0)))
    }

    fn initial_extra(&mut self, _t0: f64, _x0: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::zeros(0))
    }
}

/// A nonlinear DAE discretized directly: `Z1ᵀF(t, x, ẋ) = 0` with `Z1`
/// frozen per step, and the level-μ derivative array `F_μ(t, x, y) = 0`.
pub struct NonlinearDirect {
    pub dae: std::sync::Arc<dyn NonlinearDae>,
    pub opts: GnOptions,
    z1: Option<DMatrix<f64>>,
    y_warm: Option<DVector<f64>>,
}

impl NonlinearDirect {
    pub fn new(dae: std::sync::Arc<dyn NonlinearDae>) -> Self {
        Self {
            dae,
            opts: GnOptions::default(),
            z1: None,
            y_warm: None,
        }
    }
}

impl DirectDae for NonlinearDirect {
    fn n(&self) -> usize {
        self.dae.dim()
    }

    fn d(&self) -> usize {
        self.dae.char_values().d
    }

    fn extra(&self) -> usize {
        (self.dae.char_values().mu + 1) * self.dae.dim()
    }

    fn freeze(&mut self, t0: f64, x0: &DVector<f64>) -> Result<()> {
        let n = self.dae.dim();
        let level = self.dae.char_values().mu + 1;
        let guess = match &self.y_warm {
            Some(y) if y.len() == (level + 1) * n => y.clone(),
            _ => DVector::zeros((level + 1) * n),
        };
        let y = consistent_derivatives(self.dae.as_ref(), level, t0, x0, &guess, self.opts)?;
        self.z1 = Some(nonlinear_rotated_q(self.dae.as_ref(), t0, x0, &y)?.1);
        self.y_warm = Some(y);
        Ok(())
    }

    fn diff(
        &mut self,
        t: f64,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let z1t = self
            .z1
            .as_ref()
            .ok_or_else(|| DaeError::Config("no window frozen".into()))?
            .transpose();
        let r = self.dae.residual(t, x, xdot);
        let (fx, fxd) = self.dae.residual_jacobians(t, x, xdot);
        Ok((&z1t * r, &z1t * fx, &z1t * fxd))
    }

    fn alg(
        &mut self,
        t: f64,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let mu = self.dae.char_values().mu;
        Ok((
            self.dae.array(mu, t, x, y),
            self.dae.jac_x(mu, t, x, y),
            self.dae.jac_y(mu, t, x, y),
        ))
    }

    fn initial_extra(&mut self, t0: f64, x0: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dae.dim();
        let mu = self.dae.char_values().mu;
        let y = consistent_derivatives(
            self.dae.as_ref(),
            mu,
            t0,
            x0,
            &DVector::zeros((mu + 1) * n),
            self.opts,
        )?;
        Ok(y)
    }
}

/// Node layout of a direct collocation scheme on [0, 1].
#[derive(Debug, Clone)]
pub struct DaeScheme {
    /// Interpolation nodes, the first is 0.
    pub poly: Vec<f64>,
    /// Nodes where the differential equations are collocated.
    pub diff: Vec<f64>,
    /// Nodes where the algebraic equations are enforced.
    pub alg: Vec<f64>,
}

impl DaeScheme {
    pub fn radau(s: usize) -> Self {
        let c = radau_nodes(s);
        let mut poly = vec![0.0];
        poly.extend(&c);
        Self {
            poly,
            diff: c.clone(),
            alg: c,
        }
    }

    /// `s` Gauss nodes for the differential part, `s + 1` Lobatto nodes for
    /// the algebraic part (the node at 0 holds from the previous step).
    pub fn gauss_lobatto(s: usize) -> Self {
        let lob = lobatto_nodes(s + 1);
        Self {
            alg: lob[1..].to_vec(),
            poly: lob,
            diff: gauss_nodes(s),
        }
    }
}

/// State of a direct DAE integration.
#[derive(Debug, Clone)]
pub struct DaeState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

/// One step of direct collocation of the DAE.
pub fn step_dae_collocation(
    dae: &mut dyn DirectDae,
    scheme: &DaeScheme,
    t: f64,
    state: &DaeState,
    h: f64,
) -> Result<DaeState> {
    let n = dae.n();
    let ne = dae.extra();
    let np = scheme.poly.len() - 1;
    let na = scheme.alg.len();
    let coef = lagrange_coefficients(&scheme.poly);
    let nz = np * n + na * ne;
    let mut z0 = DVector::zeros(nz);
    for k in 0..np {
        z0.rows_mut(k * n, n).copy_from(&state.x);
    }
    for i in 0..na {
        z0.rows_mut(np * n + i * ne, ne).copy_from(&state.y);
    }
    // Values and derivatives of the interpolant are linear in the node values.
    let weights = |tau: f64| -> (Vec<f64>, Vec<f64>) {
        (
            (0..=np).map(|k| poly_eval(&coef, k, tau)).collect(),
            (0..=np).map(|k| poly_deriv(&coef, k, tau) / h).collect(),
        )
    };
    let diff_w: Vec<_> = scheme.diff.iter().map(|&tau| weights(tau)).collect();
    let alg_w: Vec<_> = scheme.alg.iter().map(|&tau| weights(tau)).collect();
    let x0 = state.x.clone();
    let interp = |z: &DVector<f64>, w: &[f64]| {
        let mut u = &x0 * w[0];
        for k in 1..=np {
            u.axpy(w[k], &z.rows((k - 1) * n, n).into_owned(), 1.0);
        }
        u
    };

    let sol = gauss_newton(
        |z| {
            let mut rows: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::new();
            for (idx, (w, wd)) in diff_w.iter().enumerate() {
                let u = interp(z, w);
                let ud = interp(z, wd);
                let (r, jx, jxd) = dae.diff(t + scheme.diff[idx] * h, &u, &ud)?;
                let mut jac = DMatrix::zeros(r.len(), nz);
                for k in 1..=np {
                    let blk = &jx * w[k] + &jxd * wd[k];
                    jac.view_mut((0, (k - 1) * n), (r.len(), n)).copy_from(&blk);
                }
                rows.push((r, jac));
            }
            for (idx, (w, _)) in alg_w.iter().enumerate() {
                let u = interp(z, w);
                let y = z.rows(np * n + idx * ne, ne).into_owned();
                let (r, jx, jy) = dae.alg(t + scheme.alg[idx] * h, &u, &y)?;
                let mut jac = DMatrix::zeros(r.len(), nz);
                for k in 1..=np {
                    jac.view_mut((0, (k - 1) * n), (r.len(), n))
                        .copy_from(&(&jx * w[k]));
                }
                jac.view_mut((0, np * n + idx * ne), (r.len(), ne))
                    .copy_from(&jy);
                rows.push((r, jac));
            }
            let m: usize = rows.iter().map(|(r, _)| r.len()).sum();
            let mut res = DVector::zeros(m);
            let mut jac = DMatrix::zeros(m, nz);
            let mut off = 0;
            for (r, j) in rows {
                res.rows_mut(off, r.len()).copy_from(&r);
                jac.view_mut((off, 0), (r.len(), nz)).copy_from(&j);
                off += r.len();
            }
            Ok((res, jac))
        },
        z0,
        GnOptions::default(),
    )?;
    let z = sol.z;
    let (w1, _) = weights(1.0);
    let x = interp(&z, &w1);
    let y = if na > 0 && ne > 0 {
        z.rows(np * n + (na - 1) * ne, ne).into_owned()
    } else {
        state.y.clone()
    };
    Ok(DaeState { x, y })
}

/// Direct Radau IIA collocation of the DAE.
pub fn step_radau_dae(
    dae: &mut dyn DirectDae,
    t: f64,
    state: &DaeState,
    h: f64,
    s: usize,
) -> Result<DaeState> {
    step_dae_collocation(dae, &DaeScheme::radau(s), t, state, h)
}

/// Gauss nodes for the differential part, Lobatto nodes for the algebraic part.
pub fn step_gauss_lobatto_dae(
    dae: &mut dyn DirectDae,
    t: f64,
    state: &DaeState,
    h: f64,
    s: usize,
) -> Result<DaeState> {
    step_dae_collocation(dae, &DaeScheme::gauss_lobatto(s), t, state, h)
}

/// What is integrated.
pub enum Problem<'a> {
    Inherent(&'a mut dyn InherentSystem),
    Direct(&'a mut dyn DirectDae),
}

const MAX_STEPS: usize = 1_000_000;

fn recoverable(e: &DaeError) -> bool {
    matches!(
        e,
        DaeError::NoConvergence { .. } | DaeError::JacobianRankDeficient(_) | DaeError::Singular(_)
    )
}

enum Stepper {
    Explicit(ExplicitTableau),
    Collocation(Tableau),
    Dae(DaeScheme),
}

impl Stepper {
    fn for_spec(spec: &IntegratorSpec) -> Self {
        let s = spec.effective_stages();
        match (spec.method, spec.version) {
            (Method::DormandPrince, _) => Stepper::Explicit(ExplicitTableau::new(if s == 7 {
                ExplicitPair::Dp54
            } else {
                ExplicitPair::Dp87
            })),
            (Method::GaussLobatto, _) => Stepper::Dae(DaeScheme::gauss_lobatto(s)),
            (Method::Radau | Method::ImplicitEuler, Version::Direct) => {
                Stepper::Dae(DaeScheme::radau(s))
            }
            (Method::Gauss, _) => Stepper::Collocation(gauss_tableau(s)),
            (Method::Radau | Method::ImplicitEuler, _) => Stepper::Collocation(radau_tableau(s)),
        }
    }
}

/// Integrates from a consistent `x0` over `[t0, t_end]`.
///
/// The window (discrete decisions, the frozen `Q`) is fixed at the start of
/// every step; the full state is reconstructed at the end of each accepted
/// step in that window.
pub fn integrate(
    spec: &IntegratorSpec,
    problem: Problem<'_>,
    t0: f64,
    t_end: f64,
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    spec.validate()?;
    if !(t_end > t0) {
        return Err(DaeError::Config(format!("empty interval [{t0}, {t_end}]")));
    }
    let stepper = Stepper::for_spec(spec);
    match (problem, &stepper) {
        (Problem::Inherent(sys), Stepper::Explicit(_) | Stepper::Collocation(_)) => {
            integrate_ode(spec, &stepper, sys, t0, t_end, x0)
        }
        (Problem::Direct(dae), Stepper::Dae(scheme)) => {
            integrate_direct(spec, scheme, dae, t0, t_end, x0)
        }
        _ => Err(DaeError::Config(format!(
            "{} with version {} does not match the supplied problem",
            spec.method, spec.version
        ))),
    }
}

/// Hairer's starting step heuristic.
fn initial_step(
    sys: &mut dyn InherentSystem,
    t0: f64,
    x: &DVector<f64>,
    span: f64,
    order: usize,
    tol: f64,
) -> Result<f64> {
    let sk = x.map(|v| tol + tol * v.abs());
    let f0 = sys.rhs(t0, x)?;
    let d0 = rms(x, &sk);
    let d1 = rms(&f0, &sk);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let x1 = x + &f0 * h0;
    let f1 = sys.rhs(t0 + h0, &x1)?;
    let d2 = rms(&(f1 - f0), &sk) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / (order as f64 + 1.0))
    };
    Ok((100.0 * h0).min(h1).min(span))
}

fn control(h: f64, err: f64, order: usize) -> f64 {
    let fac = if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-1.0 / (order as f64 + 1.0))).clamp(0.2, 5.0)
    };
    h * fac
}

fn integrate_ode(
    spec: &IntegratorSpec,
    stepper: &Stepper,
    sys: &mut dyn InherentSystem,
    t0: f64,
    t_end: f64,
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    let span = t_end - t0;
    let mut traj = Trajectory::default();
    let mut t = t0;
    let mut x = x0.clone();
    sys.freeze(t, &x)?;
    let mut x1 = sys.project(t, &x)?;
    traj.times.push(t);
    traj.states.push(x.clone());
    traj.x1s.push(x1.clone());

    let order = match stepper {
        Stepper::Explicit(tab) => tab.order(),
        _ => spec.order(),
    };
    let single = |sys: &mut dyn InherentSystem, t: f64, x1: &DVector<f64>, h: f64| -> Result<DVector<f64>> {
        match stepper {
            Stepper::Explicit(tab) => Ok(step_explicit(sys, tab, t, x1, h)?.x),
            Stepper::Collocation(tab) => step_collocation(sys, tab, t, x1, h),
            Stepper::Dae(_) => unreachable!("checked by caller"),
        }
    };

    match spec.mode {
        StepMode::Fixed(steps) => {
            let h = span / steps as f64;
            for i in 0..steps {
                let x1n = single(sys, t, &x1, h)?;
                let tn = if i + 1 == steps { t_end } else { t0 + (i + 1) as f64 * h };
                x = sys.lift(tn, &x1n)?;
                t = tn;
                sys.freeze(t, &x)?;
                x1 = sys.project(t, &x)?;
                traj.times.push(t);
                traj.states.push(x.clone());
                traj.x1s.push(x1.clone());
                traj.steps_taken += 1;
            }
        }
        StepMode::Adaptive(tol) => {
            let mut h = initial_step(sys, t, &x1, span, order, tol)?;
            while t < t_end {
                if traj.steps_taken + traj.rejected >= MAX_STEPS {
                    return Err(DaeError::TooManySteps(MAX_STEPS));
                }
                if h < 1e-14 * span {
                    return Err(DaeError::StepSizeUnderflow { t, h });
                }
                let last = t + h >= t_end - 1e-12 * span;
                let hh = if last { t_end - t } else { h };
                let attempt = match stepper {
                    Stepper::Explicit(tab) => step_explicit(sys, tab, t, &x1, hh)
                        .map(|st| (st.error_norm(&x1, tol), st.x)),
                    _ => (|| {
                        let full = single(sys, t, &x1, hh)?;
                        let mid = single(sys, t, &x1, 0.5 * hh)?;
                        let half = single(sys, t + 0.5 * hh, &mid, 0.5 * hh)?;
                        let sk = scales(&x1, &half, tol);
                        let denom = 2f64.powi(spec.order() as i32) - 1.0;
                        Ok((rms(&(&half - &full), &sk) / denom, half))
                    })(),
                };
                match attempt {
                    Ok((err, x1n)) if err <= 1.0 && x1n.iter().all(|v| v.is_finite()) => {
                        let tn = if last { t_end } else { t + hh };
                        x = match sys.lift(tn, &x1n) {
                            Ok(x) => x,
                            Err(e) if recoverable(&e) => {
                                traj.rejected += 1;
                                h = 0.5 * hh;
                                continue;
                            }
                            Err(e) => return Err(e),
                        };
                        t = tn;
                        sys.freeze(t, &x)?;
                        x1 = sys.project(t, &x)?;
                        traj.times.push(t);
                        traj.states.push(x.clone());
                        traj.x1s.push(x1.clone());
                        traj.steps_taken += 1;
                        h = control(hh, err, order).min(span);
                    }
                    Ok((err, _)) => {
                        traj.rejected += 1;
                        h = if err.is_finite() {
                            control(hh, err, order).min(hh)
                        } else {
                            0.2 * hh
                        };
                    }
                    Err(e) if recoverable(&e) => {
                        traj.rejected += 1;
                        h = 0.5 * hh;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(traj)
}

fn integrate_direct(
    spec: &IntegratorSpec,
    scheme: &DaeScheme,
    dae: &mut dyn DirectDae,
    t0: f64,
    t_end: f64,
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    let span = t_end - t0;
    let mut traj = Trajectory::default();
    let mut t = t0;
    let y0 = dae.initial_extra(t0, x0)?;
    let mut state = DaeState { x: x0.clone(), y: y0 };
    traj.times.push(t);
    traj.states.push(state.x.clone());
    let order = spec.order();

    match spec.mode {
        StepMode::Fixed(steps) => {
            let h = span / steps as f64;
            for i in 0..steps {
                dae.freeze(t, &state.x)?;
                state = step_dae_collocation(dae, scheme, t, &state, h)?;
                t = if i + 1 == steps { t_end } else { t0 + (i + 1) as f64 * h };
                traj.times.push(t);
                traj.states.push(state.x.clone());
                traj.steps_taken += 1;
            }
        }
        StepMode::Adaptive(tol) => {
            let mut h = (0.1 * span * tol.powf(1.0 / (order as f64 + 1.0))).min(span);
            let mut frozen_at = f64::NAN;
            while t < t_end {
                if traj.steps_taken + traj.rejected >= MAX_STEPS {
                    return Err(DaeError::TooManySteps(MAX_STEPS));
                }
                if h < 1e-14 * span {
                    return Err(DaeError::StepSizeUnderflow { t, h });
                }
                if frozen_at != t {
                    dae.freeze(t, &state.x)?;
                    frozen_at = t;
                }
                let last = t + h >= t_end - 1e-12 * span;
                let hh = if last { t_end - t } else { h };
                let attempt = (|| {
                    let full = step_dae_collocation(dae, scheme, t, &state, hh)?;
                    let mid = step_dae_collocation(dae, scheme, t, &state, 0.5 * hh)?;
                    let half = step_dae_collocation(dae, scheme, t + 0.5 * hh, &mid, 0.5 * hh)?;
                    let sk = scales(&state.x, &half.x, tol);
                    let denom = 2f64.powi(order as i32) - 1.0;
                    Ok::<_, DaeError>((rms(&(&half.x - &full.x), &sk) / denom, half))
                })();
                match attempt {
                    Ok((err, next)) if err <= 1.0 && next.x.iter().all(|v| v.is_finite()) => {
                        state = next;
                        t = if last { t_end } else { t + hh };
                        traj.times.push(t);
                        traj.states.push(state.x.clone());
                        traj.steps_taken += 1;
                        h = control(hh, err, order).min(span);
                    }
                    Ok((err, _)) => {
                        traj.rejected += 1;
                        h = if err.is_finite() {
                            control(hh, err, order).min(hh)
                        } else {
                            0.2 * hh
                        };
                    }
                    Err(e) if recoverable(&e) => {
                        traj.rejected += 1;
                        h = 0.5 * hh;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(traj)
}

/// A plain ODE `ẋ = f(t, x)` viewed as its own inherent system.
pub struct ClosureOde<F> {
    n: usize,
    f: F,
}

impl<F> ClosureOde<F>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64> + Send,
{
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F> InherentSystem for ClosureOde<F>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64> + Send,
{
    fn dim(&self) -> usize {
        self.n
    }
    fn d(&self) -> usize {
        self.n
    }
    fn freeze(&mut self, _t0: f64, _x0: &DVector<f64>) -> Result<()> {
        Ok(())
    }
    fn project(&mut self, _t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(x.clone())
    }
    fn lift(&mut self, _t: f64, x1: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(x1.clone())
    }
    fn rhs(&mut self, t: f64, x1: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.f)(t, x1))
    }
    fn affine(&mut self, _t: f64) -> Result<Option<(DMatrix<f64>, DVector<f64>)>> {
        Ok(None)
    }
}

/// A linear ODE `ẋ = B(t) x + c(t)`.
pub struct LinearOde<F> {
    n: usize,
    bc: F,
}

impl<F> LinearOde<F>
where
    F: Fn(f64) -> (DMatrix<f64>, DVector<f64>) + Send,
{
    pub fn new(n: usize, bc: F) -> Self {
        Self { n, bc }
    }
}

impl<F> InherentSystem for LinearOde<F>
where
    F: Fn(f64) -> (DMatrix<f64>, DVector<f64>) + Send,
{
    fn dim(&self) -> usize {
        self.n
    }
    fn d(&self) -> usize {
        self.n
    }
    fn freeze(&mut self, _t0: f64, _x0: &DVector<f64>) -> Result<()> {
        Ok(())
    }
    fn project(&mut self, _t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(x.clone())
    }
    fn lift(&mut self, _t: f64, x1: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(x1.clone())
    }
    fn rhs(&mut self, t: f64, x1: &DVector<f64>) -> Result<DVector<f64>> {
        let (b, c) = (self.bc)(t);
        Ok(b * x1 + c)
    }
    fn affine(&mut self, t: f64) -> Result<Option<(DMatrix<f64>, DVector<f64>)>> {
        Ok(Some((self.bc)(t)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(lambda: f64) -> LinearOde<impl Fn(f64) -> (DMatrix<f64>, DVector<f64>) + Send> {
        LinearOde::new(1, move |_| {
            (DMatrix::from_element(1, 1, lambda), DVector::zeros(1))
        })
    }

    #[test]
    fn node_sets() {
        let g = gauss_nodes(2);
        let r3 = 3f64.sqrt() / 6.0;
        assert!((g[0] - (0.5 - r3)).abs() < 1e-14 && (g[1] - (0.5 + r3)).abs() < 1e-14);
        let r = radau_nodes(2);
        assert!((r[0] - 1.0 / 3.0).abs() < 1e-14 && r[1] == 1.0);
        assert_eq!(radau_nodes(1), vec![1.0]);
        let l = lobatto_nodes(3);
        assert!((l[1] - 0.5).abs() < 1e-14);
        assert_eq!(radau_nodes(4).len(), 4);
    }

    #[test]
    fn tableau_sums() {
        for tab in [gauss_tableau(3), radau_tableau(4)] {
            assert!((tab.b.sum() - 1.0).abs() < 1e-13);
            for i in 0..tab.c.len() {
                assert!((tab.a.row(i).sum() - tab.c[i]).abs() < 1e-13);
            }
        }
        for pair in [ExplicitPair::Dp54, ExplicitPair::Dp87] {
            let tab = ExplicitTableau::new(pair);
            assert!((tab.b.sum() - 1.0).abs() < 1e-13);
            assert!(tab.e.sum().abs() < 1e-13);
            for i in 0..tab.c.len() {
                assert!((tab.a.row(i).sum() - tab.c[i]).abs() < 1e-12, "{pair:?} row {i}");
            }
        }
    }

    #[test]
    fn zero_field_is_identity() {
        let mut sys = scalar(0.0);
        let x = DVector::from_vec(vec![1.5]);
        let st = step_explicit(&mut sys, &ExplicitTableau::new(ExplicitPair::Dp54), 0.0, &x, 0.3).unwrap();
        assert_eq!(st.x, x);
        assert_eq!(st.err.amax(), 0.0);
        assert_eq!(step_gauss(&mut sys, 0.0, &x, 0.3, 2).unwrap(), x);
    }

    #[test]
    fn dp5_exponential() {
        let mut sys = ClosureOde::new(1, |_, x: &DVector<f64>| x.clone());
        let x = DVector::from_vec(vec![1.0]);
        let st = step_explicit(&mut sys, &ExplicitTableau::new(ExplicitPair::Dp54), 0.0, &x, 0.1).unwrap();
        assert!((st.x[0] - 0.1f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn explicit_pairs_converge_at_propagated_order() {
        let f = |t: f64, x: &DVector<f64>| x.map(|y| y * t.cos() + 0.1 * y * y * t.sin());
        let run = |pair: ExplicitPair, n: usize| {
            let tab = ExplicitTableau::new(pair);
            let mut sys = ClosureOde::new(1, f);
            let h = 2.0 / n as f64;
            let mut x = DVector::from_vec(vec![1.0]);
            for k in 0..n {
                x = step_explicit(&mut sys, &tab, k as f64 * h, &x, h).unwrap().x;
            }
            x[0]
        };
        let reference = run(ExplicitPair::Dp87, 400);
        for (pair, p, n) in [(ExplicitPair::Dp54, 4.0, 64), (ExplicitPair::Dp87, 7.0, 10)] {
            let e1 = (run(pair, n) - reference).abs();
            let e2 = (run(pair, 2 * n) - reference).abs();
            let slope = (e1 / e2).log2();
            assert!((slope - p).abs() < 0.5, "{pair:?} slope {slope}");
        }
    }

    #[test]
    fn gauss_two_stage_is_pade() {
        let lambda = -0.7;
        let h = 0.2;
        let z = lambda * h;
        let pade = (1.0 + z / 2.0 + z * z / 12.0) / (1.0 - z / 2.0 + z * z / 12.0);
        let x = DVector::from_vec(vec![1.0]);
        let got = step_gauss(&mut scalar(lambda), 0.0, &x, h, 2).unwrap();
        assert!((got[0] - pade).abs() < 1e-12);
        // Newton path on the same problem
        let mut nl = ClosureOde::new(1, move |_, x: &DVector<f64>| x * lambda);
        let got = step_gauss(&mut nl, 0.0, &x, h, 2).unwrap();
        assert!((got[0] - pade).abs() < 1e-12);
    }

    #[test]
    fn implicit_euler_closed_form() {
        let x = DVector::from_vec(vec![2.0]);
        let got = step_radau(&mut scalar(-3.0), 0.0, &x, 0.1, 1).unwrap();
        assert!((got[0] - 2.0 / 1.3).abs() < 1e-14);
    }

    #[test]
    fn rotation_norm_conserved() {
        let mut sys = LinearOde::new(2, |_| {
            (
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
                DVector::zeros(2),
            )
        });
        let x = DVector::from_vec(vec![0.6, 0.8]);
        let got = step_gauss(&mut sys, 0.0, &x, 1.7, 2).unwrap();
        assert!((got.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_grid_exponential_decay() {
        let mut sys = scalar(-1.0);
        let spec = IntegratorSpec::new(Method::Gauss, 2, StepMode::Fixed(10), Version::Ode(QKind::Inherent)).unwrap();
        let tr = integrate(&spec, Problem::Inherent(&mut sys), 0.0, 1.0, &DVector::from_vec(vec![1.0])).unwrap();
        // ten Padé factors; order 4 with h = 0.1 leaves a global error near 5e-8
        let z = -0.1f64;
        let pade = ((1.0 + z / 2.0 + z * z / 12.0) / (1.0 - z / 2.0 + z * z / 12.0)).powi(10);
        let end = tr.states.last().unwrap()[0];
        assert!((end - pade).abs() < 1e-14);
        assert!((end - (-1f64).exp()).abs() < 1e-7);
        let spec = IntegratorSpec::new(Method::Radau, 4, StepMode::Fixed(10), Version::Ode(QKind::Inherent)).unwrap();
        let mut sys = scalar(1.0);
        let tr = integrate(&spec, Problem::Inherent(&mut sys), 0.0, 1.0, &DVector::from_vec(vec![1.0])).unwrap();
        assert!((tr.states.last().unwrap()[0] - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn adaptive_hits_end_point() {
        for (m, s) in [(Method::DormandPrince, 7), (Method::DormandPrince, 13), (Method::Radau, 2)] {
            let spec = IntegratorSpec::new(m, s, StepMode::Adaptive(1e-8), Version::Ode(QKind::Inherent)).unwrap();
            let mut sys = scalar(-2.0);
            let tr = integrate(&spec, Problem::Inherent(&mut sys), 0.0, 2.0, &DVector::from_vec(vec![1.0])).unwrap();
            assert_eq!(*tr.times.last().unwrap(), 2.0);
            assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
            assert!((tr.states.last().unwrap()[0] - (-4f64).exp()).abs() < 1e-6, "{m} {s}");
        }
    }

    #[test]
    fn spec_validation() {
        let ode = Version::Ode(QKind::Inherent);
        assert!(IntegratorSpec::new(Method::DormandPrince, 7, StepMode::Fixed(1), Version::Direct).is_err());
        assert!(IntegratorSpec::new(Method::Gauss, 2, StepMode::Fixed(1), Version::Direct).is_err());
        assert!(IntegratorSpec::new(Method::GaussLobatto, 2, StepMode::Fixed(1), ode).is_err());
        assert!(IntegratorSpec::new(Method::DormandPrince, 5, StepMode::Fixed(1), ode).is_err());
        assert!(IntegratorSpec::new(Method::Radau, 4, StepMode::Adaptive(-1.0), ode).is_err());
        assert!(IntegratorSpec::new(Method::Radau, 4, StepMode::Adaptive(1e-5), Version::Direct).is_ok());
        assert_eq!("implicit-euler".parse::<Method>().unwrap(), Method::ImplicitEuler);
        assert_eq!("direct".parse::<Version>().unwrap(), Version::Direct);
    }
}
