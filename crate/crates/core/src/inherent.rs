//! The inherent ODE.
//!
//! With `x = Q(t)[x1; x2]`, `Q = [T2 T2']`, the reduced DAE becomes
//!
//! ```text
//! Ê11 ẋ1 + Ê12 ẋ2 = Â11 x1 + Â12 x2 + f̂1,    0 = Â21 x1 + Â22 x2 + f̂2
//! ```
//!
//! where `Ê1j = Ê1 Q_j`, `Â1j = Â1 Q_j - Ê1 Q̇_j`, `Â2j = Â2 Q_j`. Solving the
//! algebraic part for `x2`, differentiating it and eliminating `ẋ2` gives
//! `ẋ1 = B(t) x1 + c(t)`. The nonlinear path evaluates the same map pointwise
//! by Gauss–Newton on the level-(μ+1) derivative array.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::darray::{NonlinearDae, Symmetry};
use crate::error::{DaeError, Result};
use crate::reduce::{kernel_plain, left_null_plain, CharValues, ReduceDecisions, ReducedDae, Reducer};
use crate::smoothfact::{
    complete_to_basis, congruence_to_j, congruence_to_s, smooth_qr, smooth_qr_rank,
    CongruenceDecisions, QrDecisions, PIVOT_TOL,
};
use crate::taylor::TaylorMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QKind {
    Inherent,
    SpinStabilized,
    Rotated,
    SelfAdjoint,
    SkewAdjoint,
    Prescribed,
}

impl QKind {
    pub const ALL: [QKind; 6] = [
        QKind::Inherent,
        QKind::SpinStabilized,
        QKind::Rotated,
        QKind::SelfAdjoint,
        QKind::SkewAdjoint,
        QKind::Prescribed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QKind::Inherent => "INHERENT",
            QKind::SpinStabilized => "SPIN_STABILIZED",
            QKind::Rotated => "ROTATED",
            QKind::SelfAdjoint => "SELF_ADJOINT",
            QKind::SkewAdjoint => "SKEW_ADJOINT",
            QKind::Prescribed => "PRESCRIBED",
        }
    }
}

impl fmt::Display for QKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QKind {
    type Err = DaeError;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        QKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| DaeError::Config(format!("unknown version '{s}'")))
    }
}

/// User map `t ↦ (Q(t), Q̇(t))`.
pub type PrescribedQ = Arc<dyn Fn(f64) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync>;

#[derive(Clone)]
pub struct QStrategy {
    pub kind: QKind,
    pub prescribed: Option<PrescribedQ>,
}

impl fmt::Debug for QStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QStrategy")
            .field("kind", &self.kind)
            .field("prescribed", &self.prescribed.is_some())
            .finish()
    }
}

impl QStrategy {
    pub fn new(kind: QKind) -> Self {
        Self {
            kind,
            prescribed: None,
        }
    }

    pub fn prescribed(map: PrescribedQ) -> Self {
        Self {
            kind: QKind::Prescribed,
            prescribed: Some(map),
        }
    }

    pub fn validate(&self, symmetry: Symmetry) -> Result<()> {
        match self.kind {
            QKind::Prescribed if self.prescribed.is_none() => Err(DaeError::Config(
                "PRESCRIBED needs a user map for Q".into(),
            )),
            QKind::SelfAdjoint if symmetry != Symmetry::SelfAdjoint => {
                Err(DaeError::SymmetryMismatch {
                    required: "self-adjoint",
                })
            }
            QKind::SkewAdjoint if symmetry != Symmetry::SkewAdjoint => {
                Err(DaeError::SymmetryMismatch {
                    required: "skew-adjoint",
                })
            }
            _ => Ok(()),
        }
    }
}

/// The inherent ODE of a DAE together with the maps between `x` and `x1`.
///
/// `freeze` fixes a window starting at `t0`; the other methods evaluate in
/// the coordinates of the current window.
pub trait InherentSystem: Send {
    fn dim(&self) -> usize;
    fn d(&self) -> usize;
    fn freeze(&mut self, t0: f64, x0: &DVector<f64>) -> Result<()>;
    /// `x1 = [I 0] Q(t)⁻¹ x`.
    fn project(&mut self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>>;
    /// `x = Q(t) [x1; R(t, x1)]`.
    fn lift(&mut self, t: f64, x1: &DVector<f64>) -> Result<DVector<f64>>;
    /// `L(t, x1)`.
    fn rhs(&mut self, t: f64, x1: &DVector<f64>) -> Result<DVector<f64>>;
    /// `(B(t), c(t))` when `L` is affine in `x1`.
    fn affine(&mut self, t: f64) -> Result<Option<(DMatrix<f64>, DVector<f64>)>>;
}

#[derive(Debug, Clone)]
enum QRef {
    Rotated(QrDecisions),
    Frozen {
        q0: DMatrix<f64>,
        qdot0: DMatrix<f64>,
        spin: bool,
    },
    Structured {
        /// QR of `Eᵀ` (simplified) or of `Â2ᵀ`.
        basis: QrDecisions,
        congruence: CongruenceDecisions,
        completion: Option<QrDecisions>,
    },
    Prescribed,
}

/// Frozen choice of `Q` on a window starting at `t0`.
#[derive(Debug, Clone)]
pub struct QWindow {
    pub t0: f64,
    pub kind: QKind,
    pub d: usize,
    pub a: usize,
    reduce: ReduceDecisions,
    q_ref: QRef,
}

/// Reduced blocks (possibly re-projected) and `Q` at one time, order 1.
#[derive(Debug, Clone)]
pub struct WindowEval {
    pub q: TaylorMatrix,
    pub e1: TaylorMatrix,
    pub a1: TaylorMatrix,
    pub f1: TaylorMatrix,
    pub a2: TaylorMatrix,
    pub f2: TaylorMatrix,
}

fn structured_basis(
    reducer: &Reducer,
    reduced: &ReducedDae,
    t: f64,
    reference: Option<&QrDecisions>,
) -> Result<(TaylorMatrix, TaylorMatrix, Option<TaylorMatrix>, QrDecisions)> {
    let CharValues { mu, d, .. } = reducer.cv;
    let n = reducer.dae.n();
    if reducer.cfg.simplified && mu == 0 {
        // T2 spans range(Eᵀ), T2' = ker E doubles as Z2.
        let e = reducer.dae.coefficients(t, 1)?.e;
        let qr = smooth_qr_rank(&e.transpose(), Some(d), reference, reducer.cfg.rank_tol)?;
        let t2 = qr.q.columns(0, d);
        let t2p = qr.q.columns(d, n - d);
        Ok((t2, t2p.clone(), Some(t2p), qr.decisions))
    } else {
        let t2 = reduced.projectors.t2.clone();
        let (t2p, dec) = complete_to_basis(&t2, reference)?;
        Ok((t2, t2p, None, dec))
    }
}

/// Orthogonal `Q` from a smooth QR of `Ê1ᵀ`, so that `Ê1 T' = 0`.
fn rotated_q(
    reduced: &ReducedDae,
    reference: Option<&QrDecisions>,
) -> Result<(TaylorMatrix, QrDecisions)> {
    let qr = smooth_qr(&reduced.e1.transpose(), reference)?;
    Ok((qr.q, qr.decisions))
}

/// Fixes the discrete decisions of `strategy` at `t0`.
pub fn choose_q(strategy: &QStrategy, reducer: &Reducer, t0: f64) -> Result<QWindow> {
    strategy.validate(reducer.dae.symmetry)?;
    let reduce = reducer.freeze(t0)?;
    let CharValues { a, d, .. } = reducer.cv;
    let reduced = reducer.eval(t0, 1, &reduce)?;
    let q_ref = match strategy.kind {
        QKind::Rotated | QKind::Inherent | QKind::SpinStabilized => {
            let (q, decisions) = rotated_q(&reduced, None)?;
            match strategy.kind {
                QKind::Rotated => QRef::Rotated(decisions),
                kind => QRef::Frozen {
                    q0: q.value().clone(),
                    qdot0: q.slice(1).clone(),
                    spin: kind == QKind::SpinStabilized,
                },
            }
        }
        QKind::SelfAdjoint | QKind::SkewAdjoint => {
            let (t2, _, _, basis) = structured_basis(reducer, &reduced, t0, None)?;
            let e = reducer.dae.coefficients(t0, 1)?.e;
            let ebar = &(&t2.transpose() * &e) * &t2;
            let congruence = if strategy.kind == QKind::SelfAdjoint {
                congruence_to_j(&ebar, None)?.decisions
            } else {
                let (p, q) = inertia(reducer, d)?;
                congruence_to_s(&ebar, p, q, None)?.decisions
            };
            let completion = if reducer.cfg.simplified && reducer.cv.mu == 0 {
                None
            } else {
                Some(complete_to_basis(&t2, None)?.1)
            };
            QRef::Structured {
                basis,
                congruence,
                completion,
            }
        }
        QKind::Prescribed => QRef::Prescribed,
    };
    Ok(QWindow {
        t0,
        kind: strategy.kind,
        d,
        a,
        reduce,
        q_ref,
    })
}

fn inertia(reducer: &Reducer, d: usize) -> Result<(usize, usize)> {
    match (reducer.dae.p, reducer.dae.q) {
        (Some(p), Some(q)) if p + q == d => Ok((p, q)),
        (Some(p), Some(q)) => Err(DaeError::Config(format!(
            "declared inertia ({p}, {q}) does not match d = {d}"
        ))),
        _ => Err(DaeError::Config(
            "SKEW_ADJOINT needs the inertia (p, q) of the problem".into(),
        )),
    }
}

impl QWindow {
    /// Reduced blocks and `Q` at `t` with the window's frozen decisions.
    pub fn eval(&self, reducer: &Reducer, strategy: &QStrategy, t: f64) -> Result<WindowEval> {
        let reduced = reducer.eval(t, 1, &self.reduce)?;
        let n = reducer.dae.n();
        let plain = |q: TaylorMatrix, r: &ReducedDae| WindowEval {
            q,
            e1: r.e1.clone(),
            a1: r.a1.clone(),
            f1: r.f1.clone(),
            a2: r.a2.clone(),
            f2: r.f2.clone(),
        };
        match &self.q_ref {
            QRef::Rotated(dec) => {
                let (q, _) = rotated_q(&reduced, Some(dec))?;
                Ok(plain(q, &reduced))
            }
            QRef::Frozen { q0, qdot0, spin } => {
                let q = if *spin {
                    TaylorMatrix::new(vec![q0 + qdot0 * (t - self.t0), qdot0.clone()])?
                } else {
                    TaylorMatrix::constant(q0.clone(), 1)
                };
                Ok(plain(q, &reduced))
            }
            QRef::Prescribed => {
                let map = strategy
                    .prescribed
                    .as_ref()
                    .ok_or_else(|| DaeError::Config("PRESCRIBED needs a user map".into()))?;
                let (q, qdot) = map(t);
                if q.shape() != (n, n) || qdot.shape() != (n, n) {
                    return Err(DaeError::ShapeMismatch(format!(
                        "prescribed Q must be {n}x{n}"
                    )));
                }
                Ok(plain(TaylorMatrix::new(vec![q, qdot])?, &reduced))
            }
            QRef::Structured {
                basis,
                congruence,
                completion,
            } => {
                let (t2, mut t2p, z2, _) = structured_basis(reducer, &reduced, t, Some(basis))?;
                if let Some(dec) = completion {
                    t2p = complete_to_basis(&t2, Some(dec))?.0;
                }
                let c = reducer.dae.coefficients(t, 1)?;
                let ebar = &(&t2.transpose() * &c.e) * &t2;
                let w = match congruence {
                    CongruenceDecisions::Skew { .. } => congruence_to_j(&ebar, Some(congruence))?.w,
                    CongruenceDecisions::Sym { .. } => {
                        let (p, q) = inertia(reducer, self.d)?;
                        congruence_to_s(&ebar, p, q, Some(congruence))?.w
                    }
                };
                let tw = &t2 * &w;
                let twt = tw.transpose();
                let (a2, f2) = match z2 {
                    Some(z2) => {
                        let z2t = z2.transpose();
                        (&z2t * &c.a, &z2t * &c.f)
                    }
                    None => (reduced.a2.clone(), reduced.f2.clone()),
                };
                Ok(WindowEval {
                    q: TaylorMatrix::hstack(&[&tw, &t2p]),
                    e1: &twt * &c.e,
                    a1: &twt * &c.a,
                    f1: &twt * &c.f,
                    a2,
                    f2,
                })
            }
        }
    }
}

/// `ẋ1 = B x1 + c`, `x2 = P x1 + p` and `Q` at one time.
#[derive(Debug, Clone)]
pub struct InherentForm {
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub p_mat: DMatrix<f64>,
    pub p_vec: DVector<f64>,
    pub q: DMatrix<f64>,
}

impl InherentForm {
    pub fn from_window(w: &WindowEval, d: usize) -> Result<Self> {
        let n = w.q.nrows();
        let a = n - d;
        let t = w.q.columns(0, d);
        let tp = w.q.columns(d, a);
        let e1 = w.e1.value();
        let e11 = e1 * t.value();
        let e12 = e1 * tp.value();
        let a11 = w.a1.value() * t.value() - e1 * t.slice(1);
        let a12 = w.a1.value() * tp.value() - e1 * tp.slice(1);

        let (p_mat, p_dot, p_vec, pv_dot) = if a > 0 {
            let a21 = &w.a2 * &t;
            let a22 = &w.a2 * &tp;
            let pt = a22
                .solve(&a21)
                .map_err(|_| DaeError::Solvability("A22 = A2 T2' is singular".into()))?
                .scale(-1.0);
            let pv = a22.solve(&w.f2)?.scale(-1.0);
            (
                pt.value().clone(),
                pt.slice(1).clone(),
                pv.value().column(0).into_owned(),
                pv.slice(1).column(0).into_owned(),
            )
        } else {
            (
                DMatrix::zeros(0, d),
                DMatrix::zeros(0, d),
                DVector::zeros(0),
                DVector::zeros(0),
            )
        };
        let g = &e11 + &e12 * &p_mat;
        let h = &a11 + &a12 * &p_mat - &e12 * &p_dot;
        let hv = &a12 * &p_vec + w.f1.value().column(0) - &e12 * &pv_dot;
        let lu = g.lu();
        let scale = e1.amax().max(f64::MIN_POSITIVE);
        let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
        if !(min_pivot > PIVOT_TOL * scale) {
            return Err(DaeError::Singular(
                "E11 + E12 P is singular (window too long or critical point)".into(),
            ));
        }
        let b = lu.solve(&h).expect("nonsingular");
        let c = lu.solve(&hv).expect("nonsingular");
        Ok(Self {
            b,
            c,
            p_mat,
            p_vec,
            q: w.q.value().clone(),
        })
    }

    pub fn rhs(&self, x1: &DVector<f64>) -> DVector<f64> {
        &self.b * x1 + &self.c
    }

    pub fn x2(&self, x1: &DVector<f64>) -> DVector<f64> {
        &self.p_mat * x1 + &self.p_vec
    }

    pub fn lift(&self, x1: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.q.nrows());
        z.rows_mut(0, x1.len()).copy_from(x1);
        z.rows_mut(x1.len(), self.p_vec.len()).copy_from(&self.x2(x1));
        &self.q * z
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.b.nrows();
        let z = self
            .q
            .clone()
            .lu()
            .solve(x)
            .ok_or_else(|| DaeError::Singular("Q(t) is singular".into()))?;
        Ok(z.rows(0, d).into_owned())
    }
}

/// `(ẋ1, x2)` of the linear inherent ODE on a window.
pub fn inherent_rhs_linear(
    window: &WindowEval,
    d: usize,
    x1: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let form = InherentForm::from_window(window, d)?;
    Ok((form.rhs(x1), form.x2(x1)))
}

/// Inherent ODE of a linear DAE.
pub struct LinearInherent {
    pub reducer: Reducer,
    pub strategy: QStrategy,
    window: Option<QWindow>,
    cache: Option<(f64, InherentForm)>,
}

impl LinearInherent {
    pub fn new(reducer: Reducer, strategy: QStrategy) -> Result<Self> {
        strategy.validate(reducer.dae.symmetry)?;
        Ok(Self {
            reducer,
            strategy,
            window: None,
            cache: None,
        })
    }

    pub fn window(&self) -> Option<&QWindow> {
        self.window.as_ref()
    }

    pub fn window_eval(&self, t: f64) -> Result<WindowEval> {
        let w = self
            .window
            .as_ref()
            .ok_or_else(|| DaeError::Config("no window frozen".into()))?;
        w.eval(&self.reducer, &self.strategy, t)
    }

    pub fn form(&mut self, t: f64) -> Result<InherentForm> {
        if let Some((tc, f)) = &self.cache {
            if *tc == t {
                return Ok(f.clone());
            }
        }
        let f = InherentForm::from_window(&self.window_eval(t)?, self.reducer.cv.d)?;
        self.cache = Some((t, f.clone()));
        Ok(f)
    }
}

impl InherentSystem for LinearInherent {
    fn dim(&self) -> usize {
        self.reducer.dae.n()
    }

    fn d(&self) -> usize {
        self.reducer.cv.d
    }

    fn freeze(&mut self, t0: f64, _x0: &DVector<f64>) -> Result<()> {
        self.window = Some(choose_q(&self.strategy, &self.reducer, t0)?);
        self.cache = None;
        Ok(())
    }

    fn project(&mut self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.form(t)?.project(x)
    }

    fn lift(&mut self, t: f64, x1: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.form(t)?.lift(x1))
    }

    fn rhs(&mut self, t: f64, x1: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.form(t)?.rhs(x1))
    }

    fn affine(&mut self, t: f64) -> Result<Option<(DMatrix<f64>, DVector<f64>)>> {
        let f = self.form(t)?;
        Ok(Some((f.b, f.c)))
    }
}

/// Stopping rule and iteration cap of Gauss–Newton.
#[derive(Debug, Clone, Copy)]
pub struct GnOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for GnOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GnSolution {
    pub z: DVector<f64>,
    pub iterations: usize,
    /// Residual ∞-norms, one per evaluated iterate.
    pub residuals: Vec<f64>,
}

/// Minimum-norm solution of `J δ = -r` for `J` of full row rank, via QR with
/// column pivoting of `Jᵀ`.
pub fn min_norm_step(jac: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, ncols) = jac.shape();
    if m == 0 {
        return Ok(DVector::zeros(ncols));
    }
    if m > ncols {
        return Err(DaeError::ShapeMismatch(format!(
            "Gauss-Newton system has more equations ({m}) than unknowns ({ncols})"
        )));
    }
    let qr = jac.transpose().col_piv_qr();
    let q = qr.q();
    let rr = qr.r();
    let dmax = rr.diagonal().amax();
    let dmin = rr.diagonal().iter().fold(f64::INFINITY, |a, x| a.min(x.abs()));
    if !(dmin > 1e-13 * dmax) {
        return Err(DaeError::JacobianRankDeficient(dmin / dmax.max(f64::MIN_POSITIVE)));
    }
    // Jᵀ P = Q R  =>  J = P Rᵀ Qᵀ
    let mut rhs = -r.clone();
    qr.p().permute_rows(&mut rhs);
    let u = rr
        .transpose()
        .solve_lower_triangular(&rhs)
        .ok_or(DaeError::JacobianRankDeficient(0.0))?;
    Ok(q * u)
}

/// Gauss–Newton with minimum-norm steps for an underdetermined system.
pub fn gauss_newton<F>(mut eval: F, z0: DVector<f64>, opts: GnOptions) -> Result<GnSolution>
where
    F: FnMut(&DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>,
{
    let tol = opts.rel_tol * (1.0 + z0.amax());
    let mut z = z0;
    let mut residuals = Vec::new();
    for it in 0..=opts.max_iter {
        let (r, jac) = eval(&z)?;
        let rn = r.amax();
        residuals.push(rn);
        if !rn.is_finite() {
            break;
        }
        if rn <= tol {
            return Ok(GnSolution {
                z,
                iterations: it,
                residuals,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let step = min_norm_step(&jac, &r)?;
        z += &step;
        // badly scaled rows can keep the residual above `tol` at roundoff
        // level; a step below the tolerance means the iteration has settled
        if step.amax() <= opts.rel_tol * (1.0 + z.amax()) {
            return Ok(GnSolution {
                z,
                iterations: it + 1,
                residuals,
            });
        }
    }
    Err(DaeError::NoConvergence {
        iterations: opts.max_iter,
        residual: residuals.last().copied().unwrap_or(f64::NAN),
    })
}

/// Point of the level-(μ+1) system `F_{μ+1}(t, x, y) = 0`, `[I 0]Q⁻¹x = x1`.
#[derive(Debug, Clone)]
pub struct GnEval {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

impl GnEval {
    pub fn xdot(&self) -> DVector<f64> {
        self.y.rows(0, self.x.len()).into_owned()
    }
}

/// Solves the underdetermined evaluation system for `(x, y)` given `x1`.
pub fn gauss_newton_eval(
    dae: &dyn NonlinearDae,
    q_inv: &DMatrix<f64>,
    t: f64,
    x1: &DVector<f64>,
    guess_x: &DVector<f64>,
    guess_y: &DVector<f64>,
    opts: GnOptions,
) -> Result<GnEval> {
    let n = dae.dim();
    let CharValues { mu, d, .. } = dae.char_values();
    let level = mu + 1;
    let ny = (level + 1) * n;
    if guess_y.len() != ny || guess_x.len() != n || x1.len() != d {
        return Err(DaeError::ShapeMismatch("Gauss-Newton guess has wrong size".into()));
    }
    let sel = q_inv.rows(0, d).into_owned();
    let mut z0 = DVector::zeros(n + ny);
    z0.rows_mut(0, n).copy_from(guess_x);
    z0.rows_mut(n, ny).copy_from(guess_y);
    let sol = gauss_newton(
        |z| {
            let x = z.rows(0, n).into_owned();
            let y = z.rows(n, ny).into_owned();
            let mut r = DVector::zeros(ny + d);
            r.rows_mut(0, ny).copy_from(&dae.array(level, t, &x, &y));
            r.rows_mut(ny, d).copy_from(&(&sel * &x - x1));
            let mut jac = DMatrix::zeros(ny + d, n + ny);
            jac.view_mut((0, 0), (ny, n)).copy_from(&dae.jac_x(level, t, &x, &y));
            jac.view_mut((0, n), (ny, ny)).copy_from(&dae.jac_y(level, t, &x, &y));
            jac.view_mut((ny, 0), (d, n)).copy_from(&sel);
            Ok((r, jac))
        },
        z0,
        opts,
    )?;
    Ok(GnEval {
        x: sol.z.rows(0, n).into_owned(),
        y: sol.z.rows(n, ny).into_owned(),
        iterations: sol.iterations,
        residuals: sol.residuals,
    })
}

/// Solves `F_ℓ(t, x, y) = 0` for `y` with `x` fixed (consistent derivatives).
///
/// Rows that do not involve `y` (the constraints on `x`) make `F_y` rank
/// deficient, so the steps are minimum-norm least-squares steps. A state
/// that violates its constraints by more than `1e-6` is rejected.
pub fn consistent_derivatives(
    dae: &dyn NonlinearDae,
    level: usize,
    t: f64,
    x: &DVector<f64>,
    guess_y: &DVector<f64>,
    opts: GnOptions,
) -> Result<DVector<f64>> {
    let mut y = guess_y.clone();
    let tol = opts.rel_tol * (1.0 + x.amax().max(y.amax()));
    let mut rn = f64::NAN;
    for _ in 0..=opts.max_iter {
        let r = dae.array(level, t, x, &y);
        rn = r.amax();
        if !rn.is_finite() {
            break;
        }
        if rn <= tol {
            return Ok(y);
        }
        let svd = dae.jac_y(level, t, x, &y).svd(true, true);
        let eps = 1e-12 * svd.singular_values.max();
        let step = svd
            .solve(&(-r), eps)
            .map_err(|e| DaeError::Config(e.to_string()))?;
        y += &step;
        if step.amax() <= 1e-13 * (1.0 + y.amax()) {
            rn = dae.array(level, t, x, &y).amax();
            if rn <= 1e-6 * (1.0 + x.amax().max(y.amax())) {
                return Ok(y);
            }
            break;
        }
    }
    Err(DaeError::NoConvergence {
        iterations: opts.max_iter,
        residual: rn,
    })
}

/// The rotated `Q` of a nonlinear DAE at a consistent point: the kernel of the
/// hidden constraints, the differential equations `Z1ᵀF`, and the orthogonal
/// completion of `Ê1ᵀ`. Returns `(Q, Z1)`.
/// Orthonormal basis of the tangent space of the consistent states at `x`.
fn tangent_basis(dae: &dyn NonlinearDae, t: f64, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let n = dae.dim();
    let CharValues { mu, a, .. } = dae.char_values();
    let size = (mu + 1) * n;
    let ymu = y.rows(0, size).into_owned();
    let m = dae.jac_y(mu, t, x, &ymu);
    let z2 = left_null_plain(&m, size - a);
    let a2 = z2.transpose() * dae.jac_x(mu, t, x, &ymu);
    kernel_plain(&a2, a)
}

pub fn nonlinear_rotated_q(
    dae: &dyn NonlinearDae,
    t: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = dae.dim();
    let t2 = tangent_basis(dae, t, x, y);
    let (_, fxd) = dae.residual_jacobians(t, x, &y.rows(0, n).into_owned());
    let et2 = &fxd * &t2;
    let z1 = smooth_qr(&TaylorMatrix::constant(et2, 0), None)?.range().value().clone();
    let e1 = z1.transpose() * fxd;
    let q = smooth_qr(&TaylorMatrix::constant(e1.transpose(), 0), None)?
        .q
        .value()
        .clone();
    Ok((q, z1))
}

/// Inherent ODE of a nonlinear DAE (INHERENT and PRESCRIBED versions).
pub struct NonlinearInherent {
    pub dae: Arc<dyn NonlinearDae>,
    pub strategy: QStrategy,
    pub opts: GnOptions,
    q0: Option<DMatrix<f64>>,
    warm: Option<(DVector<f64>, DVector<f64>)>,
    anchor: Option<(DVector<f64>, DVector<f64>)>,
    chart0: f64,
    /// Gauss–Newton iterations spent so far.
    pub gn_iterations: usize,
}

impl NonlinearInherent {
    pub fn new(dae: Arc<dyn NonlinearDae>, strategy: QStrategy) -> Result<Self> {
        match strategy.kind {
            QKind::Inherent => {}
            QKind::Prescribed => strategy.validate(Symmetry::None)?,
            other => {
                return Err(DaeError::Config(format!(
                    "{other} is not available for nonlinear DAEs (only INHERENT and PRESCRIBED)"
                )))
            }
        }
        Ok(Self {
            dae,
            strategy,
            opts: GnOptions::default(),
            q0: None,
            warm: None,
            anchor: None,
            chart0: 0.0,
            gn_iterations: 0,
        })
    }

    /// Seeds the warm start with a known consistent point.
    pub fn set_warm_start(&mut self, x: DVector<f64>, y: DVector<f64>) {
        self.anchor = Some((x.clone(), y.clone()));
        self.warm = Some((x, y));
    }

    /// Gauss–Newton solve that also rejects solutions where the frozen
    /// coordinates have degenerated, since the equations for `x` then admit
    /// several nearby branches.
    fn gauss_newton_checked(
        &mut self,
        q_inv: &DMatrix<f64>,
        t: f64,
        x1: &DVector<f64>,
        gx: &DVector<f64>,
        gy: &DVector<f64>,
    ) -> Result<GnEval> {
        let ev = gauss_newton_eval(self.dae.as_ref(), q_inv, t, x1, gx, gy, self.opts)?;
        if self.strategy.kind == QKind::Inherent {
            let t2 = tangent_basis(self.dae.as_ref(), t, &ev.x, &ev.y);
            let sel = q_inv.rows(0, self.d()).into_owned();
            let c = (sel * t2).singular_values().min();
            if c < 0.5 * self.chart0 {
                self.gn_iterations += ev.iterations;
                return Err(DaeError::Singular(format!(
                    "frozen coordinates degenerate (conditioning {c:.3e} against {:.3e})",
                    self.chart0
                )));
            }
        }
        Ok(ev)
    }

    fn q_at(&self, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        match self.strategy.kind {
            QKind::Prescribed => {
                let map = self.strategy.prescribed.as_ref().expect("validated");
                Ok(map(t))
            }
            _ => {
                let q = self
                    .q0
                    .clone()
                    .ok_or_else(|| DaeError::Config("no window frozen".into()))?;
                let n = q.nrows();
                Ok((q, DMatrix::zeros(n, n)))
            }
        }
    }

    fn solve(&mut self, t: f64, x1: &DVector<f64>) -> Result<(GnEval, DMatrix<f64>, DMatrix<f64>)> {
        let (q, qdot) = self.q_at(t)?;
        let q_inv = q
            .clone()
            .try_inverse()
            .ok_or_else(|| DaeError::Singular("Q(t) is singular".into()))?;
        let (gx, gy) = self
            .warm
            .clone()
            .ok_or_else(|| DaeError::Config("no consistent starting point".into()))?;
        let first = self.gauss_newton_checked(&q_inv, t, x1, &gx, &gy);
        let ev = match (first, self.anchor.clone()) {
            (Ok(ev), _) => ev,
            // a rejected trial step can leave the warm start far off
            (Err(_), Some((ax, ay))) if ax != gx || ay != gy => {
                self.warm = Some((ax.clone(), ay.clone()));
                self.gauss_newton_checked(&q_inv, t, x1, &ax, &ay)?
            }
            (Err(e), _) => return Err(e),
        };
        self.gn_iterations += ev.iterations;
        self.warm = Some((ev.x.clone(), ev.y.clone()));
        Ok((ev, q_inv, qdot))
    }
}

impl InherentSystem for NonlinearInherent {
    fn dim(&self) -> usize {
        self.dae.dim()
    }

    fn d(&self) -> usize {
        self.dae.char_values().d
    }

    fn freeze(&mut self, t0: f64, x0: &DVector<f64>) -> Result<()> {
        let n = self.dae.dim();
        let level = self.dae.char_values().mu + 1;
        let zero = DVector::zeros((level + 1) * n);
        let y0 = match &self.anchor {
            Some((_, y)) => consistent_derivatives(self.dae.as_ref(), level, t0, x0, y, self.opts)
                .or_else(|_| {
                    consistent_derivatives(self.dae.as_ref(), level, t0, x0, &zero, self.opts)
                })?,
            None => consistent_derivatives(self.dae.as_ref(), level, t0, x0, &zero, self.opts)?,
        };
        self.warm = Some((x0.clone(), y0.clone()));
        self.anchor = Some((x0.clone(), y0.clone()));
        if self.strategy.kind == QKind::Inherent {
            let q0 = nonlinear_rotated_q(self.dae.as_ref(), t0, x0, &y0)?.0;
            let t2 = tangent_basis(self.dae.as_ref(), t0, x0, &y0);
            self.chart0 = match q0.clone().try_inverse() {
                Some(inv) => (inv.rows(0, self.d()) * t2).singular_values().min(),
                None => 0.0,
            };
            self.q0 = Some(q0);
        }
        Ok(())
    }

    fn project(&mut self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (q, _) = self.q_at(t)?;
        let d = self.d();
        let z = q
            .lu()
            .solve(x)
            .ok_or_else(|| DaeError::Singular("Q(t) is singular".into()))?;
        Ok(z.rows(0, d).into_owned())
    }

    fn lift(&mut self, t: f64, x1: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.solve(t, x1)?.0.x)
    }

    fn rhs(&mut self, t: f64, x1: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.d();
        let (ev, q_inv, qdot) = self.solve(t, x1)?;
        let v = &q_inv * (ev.xdot() - &qdot * (&q_inv * &ev.x));
        Ok(v.rows(0, d).into_owned())
    }

    fn affine(&mut self, _t: f64) -> Result<Option<(DMatrix<f64>, DVector<f64>)>> {
        Ok(None)
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_norm_matches_pseudo_inverse() {
        let j = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 3.0, 1.0]);
        let r = DVector::from_vec(vec![0.3, -0.7]);
        let step = min_norm_step(&j, &r).unwrap();
        let pinv = j.clone().pseudo_inverse(1e-14).unwrap();
        assert!((&step + pinv * &r).amax() < 1e-13);
        assert!((&j * &step + &r).amax() < 1e-13);
    }

    #[test]
    fn rank_deficient_jacobian_is_reported() {
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let r = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            min_norm_step(&j, &r),
            Err(DaeError::JacobianRankDeficient(_))
        ));
    }

    #[test]
    fn gauss_newton_on_circle() {
        // x² + y² = 1 from (2, 1): min-norm steps move radially
        let sol = gauss_newton(
            |z| {
                let r = DVector::from_vec(vec![z[0] * z[0] + z[1] * z[1] - 1.0]);
                let j = DMatrix::from_row_slice(1, 2, &[2.0 * z[0], 2.0 * z[1]]);
                Ok((r, j))
            },
            DVector::from_vec(vec![2.0, 1.0]),
            GnOptions::default(),
        )
        .unwrap();
        assert!((sol.z.norm() - 1.0).abs() < 1e-10);
        assert!((sol.z[0] / sol.z[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn version_names_round_trip() {
        for k in QKind::ALL {
            assert_eq!(k.name().parse::<QKind>().unwrap(), k);
        }
        assert!("spin-stabilized".parse::<QKind>().is_ok());
        assert!("bogus".parse::<QKind>().is_err());
    }
}
