//! Regularity analysis and the reduced DAE
//!
//! ```text
//! Ê1 ẋ = Â1 x + f̂1     (d differential equations)
//!    0 = Â2 x + f̂2     (a algebraic equations)
//! ```
//!
//! with `Z2` spanning the left null space of `M_μ`, `Â2 = Z2ᵀ N_μ[I 0 ⋯]ᵀ`,
//! `T2` spanning the kernel of `Â2` and `Z1` spanning the range of `E T2`.

use nalgebra::{DMatrix, SVD};

use crate::darray::{build_linear_array, DerivativeArrayLinear, LinearDae};
use crate::error::{DaeError, Result};
use crate::smoothfact::{smooth_qr, smooth_qr_rank, QrDecisions};
use crate::taylor::TaylorMatrix;

/// Characteristic values: level `mu`, `a` algebraic and `d` differential
/// components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharValues {
    pub mu: usize,
    pub a: usize,
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Z1Mode {
    /// Smooth QR of `E T2` at every evaluation point.
    Smooth,
    /// The reference value of `Z1`, held constant over a window.
    Constant,
}

#[derive(Debug, Clone, Copy)]
pub struct ReduceConfig {
    /// Relative rank threshold.
    pub rank_tol: f64,
    /// Largest level tried by [`characteristic_values`]; `None` means `n`.
    pub mu_max: Option<usize>,
    pub z1: Z1Mode,
    /// For μ = 0: take `Z1`, `Z2` from one QR of `E` instead of the
    /// derivative array.
    pub simplified: bool,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        Self {
            rank_tol: 1e-8,
            mu_max: None,
            z1: Z1Mode::Smooth,
            simplified: false,
        }
    }
}

pub(crate) fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Orthonormal basis of the left null space of `m` given its rank.
pub(crate) fn left_null_plain(m: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let rows = m.nrows();
    let full = m.clone().resize(rows, rows.max(m.ncols()), 0.0);
    let svd = SVD::new(full, true, false);
    let u = svd.u.expect("requested U");
    let mut idx: Vec<usize> = (0..rows).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let cols: Vec<_> = idx[rank..].iter().map(|&i| u.column(i).into_owned()).collect();
    if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the kernel of `m` given its rank.
pub(crate) fn kernel_plain(m: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    left_null_plain(&m.transpose(), rank)
}

/// Smallest μ for which the rank conditions hold with the same `(a, d)` on
/// every sample time.
pub fn characteristic_values(
    dae: &LinearDae,
    t_samples: &[f64],
    cfg: &ReduceConfig,
) -> Result<CharValues> {
    let n = dae.n();
    let mu_max = cfg.mu_max.unwrap_or(n);
    let tol = cfg.rank_tol;
    'levels: for mu in 0..=mu_max {
        let mut found: Option<usize> = None;
        for &t in t_samples {
            let arr = build_linear_array(dae, mu, t, 0)?;
            let m = arr.m.value();
            let size = m.nrows();
            let a = size - numerical_rank(m, tol);
            if a > n {
                continue 'levels;
            }
            let z2 = left_null_plain(m, size - a);
            let a2 = z2.transpose() * arr.n_mat.value();
            if numerical_rank(&a2, tol) != a {
                continue 'levels;
            }
            let d = n - a;
            let t2 = kernel_plain(&a2, a);
            let e = dae.coefficients(t, 0)?.e.value().clone();
            if numerical_rank(&(e * t2), tol) != d {
                continue 'levels;
            }
            match found {
                None => found = Some(a),
                Some(prev) if prev != a => {
                    return Err(DaeError::NonConstantRank(format!(
                        "a = {prev} and a = {a} at level {mu}"
                    )))
                }
                _ => {}
            }
        }
        if let Some(a) = found {
            return Ok(CharValues { mu, a, d: n - a });
        }
    }
    Err(DaeError::NonRegular(mu_max))
}

/// Reference decisions of the projector factorizations.
#[derive(Debug, Clone, Default)]
pub struct ReduceDecisions {
    pub z2: Option<QrDecisions>,
    pub t2: Option<QrDecisions>,
    pub z1: Option<QrDecisions>,
    pub z1_const: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct Projectors {
    pub z2: TaylorMatrix,
    pub t2: TaylorMatrix,
    pub z1: TaylorMatrix,
    pub a2hat: TaylorMatrix,
    pub decisions: ReduceDecisions,
}

pub fn compute_projectors(
    array: &DerivativeArrayLinear,
    e: &TaylorMatrix,
    cv: CharValues,
    cfg: &ReduceConfig,
    reference: Option<&ReduceDecisions>,
) -> Result<Projectors> {
    let n = array.n;
    let order = array.m.order();
    let size = array.m.nrows();
    let CharValues { mu, a, d } = cv;
    let refd = |f: fn(&ReduceDecisions) -> Option<&QrDecisions>| reference.and_then(f);
    let mut decisions = ReduceDecisions::default();

    let simplified = cfg.simplified && mu == 0;
    let (z2, z1_simplified) = if simplified {
        let qr = smooth_qr_rank(e, Some(d), refd(|r| r.z2.as_ref()), cfg.rank_tol)
            .map_err(|err| rank_context(err, "E"))?;
        let out = (qr.left_null(), Some(qr.range()));
        decisions.z2 = Some(qr.decisions);
        out
    } else if a > 0 {
        let qr = smooth_qr_rank(&array.m, Some(size - a), refd(|r| r.z2.as_ref()), cfg.rank_tol)
            .map_err(|err| rank_context(err, "M"))?;
        let z2 = qr.left_null();
        decisions.z2 = Some(qr.decisions);
        (z2, None)
    } else {
        (TaylorMatrix::zeros(size, 0, order), None)
    };

    let a2hat = &z2.transpose() * &array.n_mat;
    let t2 = if a > 0 {
        let qr = smooth_qr(&a2hat.transpose(), refd(|r| r.t2.as_ref()))
            .map_err(|err| rank_context(err, "A2hat"))?;
        let t2 = qr.q.columns(a, d);
        decisions.t2 = Some(qr.decisions);
        t2
    } else {
        TaylorMatrix::identity(n, order)
    };

    let z1 = match (z1_simplified, cfg.z1) {
        (Some(z1), Z1Mode::Smooth) => z1,
        (z1s, mode) => {
            let smooth = match z1s {
                Some(z1) => z1,
                None => {
                    let et2 = e * &t2;
                    let qr = smooth_qr(&et2, refd(|r| r.z1.as_ref()))
                        .map_err(|err| rank_context(err, "E T2"))?;
                    decisions.z1 = Some(qr.decisions.clone());
                    qr.range()
                }
            };
            if mode == Z1Mode::Constant {
                let value = reference
                    .and_then(|r| r.z1_const.clone())
                    .unwrap_or_else(|| smooth.value().clone());
                decisions.z1_const = Some(value.clone());
                TaylorMatrix::constant(value, order)
            } else {
                smooth
            }
        }
    };

    Ok(Projectors {
        z2,
        t2,
        z1,
        a2hat,
        decisions,
    })
}

fn rank_context(err: DaeError, what: &str) -> DaeError {
    match err {
        DaeError::RankDeficient(msg) => DaeError::RankDeficient(format!("{what}: {msg}")),
        other => other,
    }
}

/// The five blocks of the reduced DAE as Taylor series at one point.
#[derive(Debug, Clone)]
pub struct ReducedDae {
    pub t: f64,
    pub e1: TaylorMatrix,
    pub a1: TaylorMatrix,
    pub f1: TaylorMatrix,
    pub a2: TaylorMatrix,
    pub f2: TaylorMatrix,
    pub projectors: Projectors,
}

pub fn assemble_reduced(
    dae: &LinearDae,
    cv: CharValues,
    t: f64,
    order: usize,
    cfg: &ReduceConfig,
    reference: Option<&ReduceDecisions>,
) -> Result<ReducedDae> {
    let array = build_linear_array(dae, cv.mu, t, order)?;
    let c = dae.coefficients(t, order)?;
    let projectors = compute_projectors(&array, &c.e, cv, cfg, reference)?;
    let z1t = projectors.z1.transpose();
    Ok(ReducedDae {
        t,
        e1: &z1t * &c.e,
        a1: &z1t * &c.a,
        f1: &z1t * &c.f,
        a2: projectors.a2hat.clone(),
        f2: &projectors.z2.transpose() * &array.g,
        projectors,
    })
}

/// Bundles a linear DAE with its characteristic values and configuration.
#[derive(Debug, Clone)]
pub struct Reducer {
    pub dae: LinearDae,
    pub cv: CharValues,
    pub cfg: ReduceConfig,
}

impl Reducer {
    pub fn new(dae: LinearDae, cv: CharValues, cfg: ReduceConfig) -> Self {
        Self { dae, cv, cfg }
    }

    /// Takes all discrete decisions at `t0`.
    pub fn freeze(&self, t0: f64) -> Result<ReduceDecisions> {
        Ok(assemble_reduced(&self.dae, self.cv, t0, 0, &self.cfg, None)?
            .projectors
            .decisions)
    }

    pub fn eval(&self, t: f64, order: usize, decisions: &ReduceDecisions) -> Result<ReducedDae> {
        assemble_reduced(&self.dae, self.cv, t, order, &self.cfg, Some(decisions))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darray::{CoefficientProvider, Coefficients};
    use std::sync::Arc;

    struct Constant {
        e: DMatrix<f64>,
        a: DMatrix<f64>,
    }

    impl CoefficientProvider for Constant {
        fn dim(&self) -> usize {
            self.e.nrows()
        }
        fn max_order(&self) -> usize {
            10
        }
        fn coefficients(&self, _t: f64, order: usize) -> Coefficients {
            let n = self.dim();
            Coefficients {
                e: TaylorMatrix::constant(self.e.clone(), order),
                a: TaylorMatrix::constant(self.a.clone(), order),
                f: TaylorMatrix::zeros(n, 1, order),
            }
        }
    }

    fn dae(e: DMatrix<f64>, a: DMatrix<f64>) -> LinearDae {
        LinearDae::new(Arc::new(Constant { e, a }))
    }

    #[test]
    fn ode_reduces_to_itself() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, 0.3]);
        let d = dae(DMatrix::identity(2, 2), a.clone());
        let cfg = ReduceConfig::default();
        let cv = characteristic_values(&d, &[0.0, 1.0], &cfg).unwrap();
        assert_eq!(cv, CharValues { mu: 0, a: 0, d: 2 });
        let r = assemble_reduced(&d, cv, 0.0, 1, &cfg, None).unwrap();
        assert_eq!(r.a2.nrows(), 0);
        // Z1 orthogonal, so Z1ᵀ(Eẋ - Ax) = 0 is the ODE itself
        let z1 = r.projectors.z1.value();
        assert!((z1.transpose() * z1 - DMatrix::identity(2, 2)).amax() < 1e-14);
        assert!((r.a1.value() - z1.transpose() * &a).amax() < 1e-14);
    }

    #[test]
    fn higher_level_detected() {
        // x1' = x1, x3' = x2, 0 = x3
        let e = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let d = dae(e, DMatrix::identity(3, 3));
        let cv = characteristic_values(&d, &[0.0], &ReduceConfig::default()).unwrap();
        assert_eq!(cv, CharValues { mu: 1, a: 2, d: 1 });
        let r = assemble_reduced(&d, cv, 0.0, 1, &ReduceConfig::default(), None).unwrap();
        assert!((r.a2.value() * r.projectors.t2.value()).amax() < 1e-12);
        let t2 = r.projectors.t2.value();
        assert!((t2[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_regular_pencil_is_rejected() {
        let d = dae(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2));
        let cfg = ReduceConfig {
            mu_max: Some(2),
            ..ReduceConfig::default()
        };
        assert!(matches!(
            characteristic_values(&d, &[0.0], &cfg),
            Err(DaeError::NonRegular(2))
        ));
    }

    #[test]
    fn simplified_matches_general_subspaces() {
        let e = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let d = dae(e, DMatrix::identity(3, 3));
        let cv = CharValues { mu: 0, a: 1, d: 2 };
        let general = assemble_reduced(&d, cv, 0.0, 1, &ReduceConfig::default(), None).unwrap();
        let cfg = ReduceConfig {
            simplified: true,
            ..ReduceConfig::default()
        };
        let simple = assemble_reduced(&d, cv, 0.0, 1, &cfg, None).unwrap();
        let p = |z: &DMatrix<f64>| z * z.transpose();
        assert!((p(general.projectors.z1.value()) - p(simple.projectors.z1.value())).amax() < 1e-12);
        assert!((p(general.projectors.z2.value()) - p(simple.projectors.z2.value())).amax() < 1e-12);
    }
}
