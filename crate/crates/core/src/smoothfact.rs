//! Locally smooth factorizations over [`TaylorMatrix`].
//!
//! Every discrete choice (column pivots, reflector signs, the reference
//! congruence) is made once at a reference point and can be replayed at
//! nearby expansion points, so the factors depend smoothly on `t` and carry
//! exact derivative slices.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{DaeError, Result};
use crate::taylor::{TaylorMatrix, TaylorScalar};

/// Relative pivot threshold for nonsingularity and definiteness checks.
pub const PIVOT_TOL: f64 = 1e-10;

/// Discrete choices of a Householder QR taken at the reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct QrDecisions {
    /// Column order: column `k` of `A·Π` is column `perm[k]` of `A`.
    pub perm: Vec<usize>,
    /// Sign of the leading entry of each reflected column.
    pub signs: Vec<f64>,
    /// Number of reflection steps (the rank at the reference point).
    pub steps: usize,
}

/// `A·Π = Q·R` with `Q` square orthogonal at every coefficient slice.
#[derive(Debug, Clone)]
pub struct FrozenQr {
    pub q: TaylorMatrix,
    pub r: TaylorMatrix,
    pub decisions: QrDecisions,
}

impl FrozenQr {
    pub fn rank(&self) -> usize {
        self.decisions.steps
    }

    /// Orthonormal basis of the column range (first `rank` columns of `Q`).
    pub fn range(&self) -> TaylorMatrix {
        self.q.columns(0, self.rank())
    }

    /// Orthonormal basis of the left null space (trailing columns of `Q`).
    pub fn left_null(&self) -> TaylorMatrix {
        let m = self.q.ncols();
        self.q.columns(self.rank(), m - self.rank())
    }
}

struct Reflector {
    v: TaylorMatrix,
    beta: TaylorScalar,
    sign: f64,
}

/// Householder reflector `H = I - beta v vᵀ` with `H x = -sign·‖x‖·e1`.
fn reflector(x: &TaylorMatrix, sign: Option<f64>, threshold: f64) -> Result<Reflector> {
    let nrm2 = (&x.transpose() * x).entry(0, 0);
    if !(nrm2.value().sqrt() > threshold) {
        return Err(DaeError::RankDeficient(format!(
            "column norm {:e} below threshold {:e}",
            nrm2.value().max(0.0).sqrt(),
            threshold
        )));
    }
    let norm = nrm2.sqrt()?;
    let sign = sign.unwrap_or(if x.value()[(0, 0)] >= 0.0 { 1.0 } else { -1.0 });
    let mut v = x.clone();
    let head = &v.entry(0, 0) + &norm.scale(sign);
    v.set_entry(0, 0, &head);
    let vtv = (&v.transpose() * &v).entry(0, 0);
    let beta = TaylorScalar::constant(2.0, x.order()).div(&vtv)?;
    Ok(Reflector { v, beta, sign })
}

impl Reflector {
    /// `B ← H B`.
    fn apply_left(&self, b: &TaylorMatrix) -> TaylorMatrix {
        let w = (&self.v.transpose() * b).scale_by(&self.beta);
        b - &(&self.v * &w)
    }

    /// `B ← B H`.
    fn apply_right(&self, b: &TaylorMatrix) -> TaylorMatrix {
        let w = (b * &self.v).scale_by(&self.beta);
        b - &(&w * &self.v.transpose())
    }
}

fn permute_columns(a: &TaylorMatrix, perm: &[usize]) -> TaylorMatrix {
    let parts: Vec<TaylorMatrix> = perm.iter().map(|&j| a.columns(j, 1)).collect();
    let refs: Vec<&TaylorMatrix> = parts.iter().collect();
    TaylorMatrix::hstack(&refs)
}

/// Frozen-pivot Householder QR for an input of full column rank.
pub fn smooth_qr(a: &TaylorMatrix, reference: Option<&QrDecisions>) -> Result<FrozenQr> {
    let steps = a.ncols();
    if steps > a.nrows() {
        return Err(DaeError::RankDeficient(format!(
            "{}x{} matrix cannot have full column rank",
            a.nrows(),
            a.ncols()
        )));
    }
    factor(a, Some(steps), reference, PIVOT_TOL)
}

/// Rank-revealing frozen-pivot QR. With `rank = None` the rank is decided at
/// the reference point by column pivoting with relative threshold `tol`; only
/// `rank` reflections are performed, so `Q` splits into range and left null
/// space bases that stay valid while the rank is constant.
pub fn smooth_qr_rank(
    a: &TaylorMatrix,
    rank: Option<usize>,
    reference: Option<&QrDecisions>,
    tol: f64,
) -> Result<FrozenQr> {
    factor(a, rank, reference, tol)
}

fn factor(
    a: &TaylorMatrix,
    rank: Option<usize>,
    reference: Option<&QrDecisions>,
    tol: f64,
) -> Result<FrozenQr> {
    let (m, n) = a.shape();
    let order = a.order();
    let scale = a.value().amax().max(f64::MIN_POSITIVE);

    let (perm, fixed_signs, steps) = match reference {
        Some(dec) => {
            if dec.perm.len() != n {
                return Err(DaeError::ShapeMismatch(
                    "reference decisions belong to a different shape".into(),
                ));
            }
            (dec.perm.clone(), Some(dec.signs.clone()), dec.steps)
        }
        None => {
            let (perm, steps) = choose_pivots(a.value(), rank, tol);
            (perm, None, steps)
        }
    };
    if let Some(r) = rank {
        if r != steps {
            return Err(DaeError::RankDeficient(format!(
                "expected rank {r}, reference rank is {steps}"
            )));
        }
    }

    let mut r = permute_columns(a, &perm);
    let mut q = TaylorMatrix::identity(m, order);
    let mut signs = Vec::with_capacity(steps);
    for k in 0..steps {
        let x = r.block(k, k, m - k, 1);
        let sign = fixed_signs.as_ref().map(|s| s[k]);
        let h = reflector(&x, sign, tol * scale).map_err(|e| match e {
            DaeError::RankDeficient(msg) => {
                DaeError::RankDeficient(format!("QR step {k} of {steps}: {msg}"))
            }
            other => other,
        })?;
        let lower = r.block(k, 0, m - k, n);
        r.set_block(k, 0, &h.apply_left(&lower));
        let right = q.block(0, k, m, m - k);
        q.set_block(0, k, &h.apply_right(&right));
        signs.push(h.sign);
    }
    // Reflection k leaves -sign·‖x‖ on the diagonal; flip to make it positive.
    for (k, &s) in signs.iter().enumerate() {
        if s > 0.0 {
            let row = r.rows(k, 1).scale(-1.0);
            r.set_block(k, 0, &row);
            let col = q.columns(k, 1).scale(-1.0);
            q.set_block(0, k, &col);
        }
    }
    Ok(FrozenQr {
        q,
        r,
        decisions: QrDecisions { perm, signs, steps },
    })
}

/// Column pivoting on a plain matrix; returns the permutation and the number
/// of columns whose residual norm exceeds `tol` times the first pivot.
fn choose_pivots(a: &DMatrix<f64>, rank: Option<usize>, tol: f64) -> (Vec<usize>, usize) {
    let (m, n) = a.shape();
    let mut work = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let limit = rank.unwrap_or(m.min(n)).min(n).min(m);
    let mut first = 0.0;
    let mut steps = 0;
    for k in 0..limit {
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..n {
            let nrm = work.view((k, j), (m - k, 1)).norm();
            if nrm > best_norm {
                best_norm = nrm;
                best = j;
            }
        }
        if k == 0 {
            first = best_norm;
        }
        if rank.is_none() && !(best_norm > tol * first && best_norm > 0.0) {
            break;
        }
        work.swap_columns(k, best);
        perm.swap(k, best);
        // plain Householder on the working copy to expose the next residuals
        let x = work.view((k, k), (m - k, 1)).into_owned();
        let alpha = if x[0] >= 0.0 { -best_norm } else { best_norm };
        let mut v = x;
        v[0] -= alpha;
        let vtv = v.norm_squared();
        if vtv > 0.0 {
            let block = work.view((k, 0), (m - k, n)).into_owned();
            let w = v.transpose() * &block * (2.0 / vtv);
            work.view_mut((k, 0), (m - k, n)).copy_from(&(block - &v * w));
        }
        steps += 1;
    }
    (perm, steps)
}

/// Smooth Cholesky factor `L` (lower triangular) with `L·Lᵀ = A`.
pub fn smooth_cholesky(a: &TaylorMatrix) -> Result<TaylorMatrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(DaeError::ShapeMismatch("Cholesky needs a square matrix".into()));
    }
    let order = a.order();
    let threshold = PIVOT_TOL * a.value().amax().max(f64::MIN_POSITIVE);
    let mut l = TaylorMatrix::zeros(n, n, order);
    for j in 0..n {
        let mut diag = a.entry(j, j);
        for k in 0..j {
            let ljk = l.entry(j, k);
            diag = &diag - &(&ljk * &ljk);
        }
        if !(diag.value() > threshold) {
            return Err(DaeError::NotPositiveDefinite(format!(
                "pivot {j} is {:e}",
                diag.value()
            )));
        }
        let ljj = diag.sqrt()?;
        l.set_entry(j, j, &ljj);
        for i in j + 1..n {
            let mut s = a.entry(i, j);
            for k in 0..j {
                s = &s - &(&l.entry(i, k) * &l.entry(j, k));
            }
            l.set_entry(i, j, &s.div(&ljj)?);
        }
    }
    Ok(l)
}

/// Reference data of a congruence normalization.
#[derive(Debug, Clone, PartialEq)]
pub enum CongruenceDecisions {
    /// Reflector signs of the anti-triangularization.
    Skew { signs: Vec<f64> },
    /// Constant reference factor with `W0ᵀ E(t0) W0 = S`.
    Sym { w0: DMatrix<f64> },
}

/// `Wᵀ·Ebar·W = target` as a Taylor identity.
#[derive(Debug, Clone)]
pub struct CongruenceResult {
    pub w: TaylorMatrix,
    pub target: DMatrix<f64>,
    pub p: usize,
    pub q: usize,
    pub decisions: CongruenceDecisions,
}

/// Canonical skew form `[[0, I], [-I, 0]]` of size `2p`.
pub fn symplectic_unit(p: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * p, 2 * p);
    for i in 0..p {
        j[(i, p + i)] = 1.0;
        j[(p + i, i)] = -1.0;
    }
    j
}

/// Signature matrix `diag(I_p, -I_q)`.
pub fn signature(p: usize, q: usize) -> DMatrix<f64> {
    let mut s = DMatrix::identity(p + q, p + q);
    for i in p..p + q {
        s[(i, i)] = -1.0;
    }
    s
}

fn check_structure(e: &DMatrix<f64>, skew: bool) -> Result<()> {
    let sym = if skew { e + e.transpose() } else { e - e.transpose() };
    if sym.amax() > 1e-10 * e.amax().max(1.0) {
        return Err(DaeError::NotStructured(if skew {
            "skew-symmetric"
        } else {
            "symmetric"
        }));
    }
    Ok(())
}

/// Congruence of a pointwise skew-symmetric nonsingular matrix to `J`.
///
/// Stage one anti-triangularizes with Householder reflectors so the lower
/// right block vanishes; stage two is the explicit block congruence
/// `W2 = [[I, 0], [-½ E12⁻¹ E11, E12⁻¹]]`.
pub fn congruence_to_j(
    ebar: &TaylorMatrix,
    reference: Option<&CongruenceDecisions>,
) -> Result<CongruenceResult> {
    let m = ebar.nrows();
    if ebar.ncols() != m || m % 2 != 0 || m == 0 {
        return Err(DaeError::ShapeMismatch(format!(
            "congruence to J needs an even square matrix, got {:?}",
            ebar.shape()
        )));
    }
    check_structure(ebar.value(), true)?;
    let fixed = match reference {
        Some(CongruenceDecisions::Skew { signs }) => Some(signs.clone()),
        Some(_) => {
            return Err(DaeError::Config("symmetric decisions passed to congruence_to_j".into()))
        }
        None => None,
    };
    let p = m / 2;
    let order = ebar.order();
    let threshold = PIVOT_TOL * ebar.value().amax().max(f64::MIN_POSITIVE);

    let mut e = ebar.clone();
    let mut w1 = TaylorMatrix::identity(m, order);
    let mut signs = Vec::with_capacity(p);
    for k in 0..p {
        let lo = k;
        let hi = m - 1 - k;
        let len = hi - lo;
        let c = e.block(lo, hi, len, 1);
        let h = reflector(&c, fixed.as_ref().map(|s| s[k]), threshold)
            .map_err(|_| DaeError::Singular(format!("anti-triangularization step {k}")))?;
        signs.push(h.sign);
        let rows = e.block(lo, 0, len, m);
        e.set_block(lo, 0, &h.apply_left(&rows));
        let cols = e.block(0, lo, m, len);
        e.set_block(0, lo, &h.apply_right(&cols));
        let wc = w1.block(0, lo, m, len);
        w1.set_block(0, lo, &h.apply_right(&wc));
    }

    let e11 = e.block(0, 0, p, p);
    let e12 = e.block(0, p, p, p);
    let e12_inv = e12
        .inverse()
        .map_err(|_| DaeError::Singular("E12 block of anti-triangular form".into()))?;
    let x = (&e12_inv * &e11).scale(-0.5);
    let mut w2 = TaylorMatrix::zeros(m, m, order);
    w2.set_block(0, 0, &TaylorMatrix::identity(p, order));
    w2.set_block(p, 0, &x);
    w2.set_block(p, p, &e12_inv);

    Ok(CongruenceResult {
        w: &w1 * &w2,
        target: symplectic_unit(p),
        p,
        q: p,
        decisions: CongruenceDecisions::Skew { signs },
    })
}

/// Reference factor `W0` with `W0ᵀ E W0 = diag(I_p, -I_q)`: eigenvectors
/// sorted by descending eigenvalue, each column signed so its largest entry
/// is positive, scaled by `1/sqrt|λ|`.
pub fn reference_signature_factor(e: &DMatrix<f64>, p: usize, q: usize) -> Result<DMatrix<f64>> {
    let n = e.nrows();
    let sym = (e + e.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let found_p = eig.eigenvalues.iter().filter(|&&l| l > PIVOT_TOL * lmax).count();
    let found_q = eig.eigenvalues.iter().filter(|&&l| l < -PIVOT_TOL * lmax).count();
    if found_p != p || found_q != q {
        return Err(DaeError::InertiaMismatch {
            expected_p: p,
            expected_q: q,
            found_p,
            found_q,
        });
    }
    let mut w0 = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
        w0.set_column(col, &(v / eig.eigenvalues[i].abs().sqrt()));
    }
    Ok(w0)
}

/// Congruence of a pointwise symmetric nonsingular matrix with inertia
/// `(p, q)` to `S = diag(I_p, -I_q)`.
pub fn congruence_to_s(
    ebar: &TaylorMatrix,
    p: usize,
    q: usize,
    reference: Option<&CongruenceDecisions>,
) -> Result<CongruenceResult> {
    let n = ebar.nrows();
    if ebar.ncols() != n || n != p + q || p == 0 {
        return Err(DaeError::ShapeMismatch(format!(
            "congruence to S with (p, q) = ({p}, {q}) on {:?}",
            ebar.shape()
        )));
    }
    check_structure(ebar.value(), false)?;
    let order = ebar.order();
    let w0 = match reference {
        Some(CongruenceDecisions::Sym { w0 }) => w0.clone(),
        Some(_) => {
            return Err(DaeError::Config("skew decisions passed to congruence_to_s".into()))
        }
        None => reference_signature_factor(ebar.value(), p, q)?,
    };
    let w0t = TaylorMatrix::constant(w0.clone(), order);
    let et = &(&w0t.transpose() * ebar) * &w0t;

    let e11 = et.block(0, 0, p, p);
    let l11 = smooth_cholesky(&e11)?;
    let mut v1 = TaylorMatrix::identity(n, order);
    v1.set_block(0, 0, &l11.inverse()?.transpose());
    let mut v2 = TaylorMatrix::identity(n, order);
    if q > 0 {
        let e12 = et.block(0, p, p, q);
        let e22 = et.block(p, p, q, q);
        let e11_inv_e12 = e11.solve(&e12)?;
        let schur = &e22 - &(&e12.transpose() * &e11_inv_e12);
        let l22 = smooth_cholesky(&schur.scale(-1.0))?;
        v1.set_block(0, p, &e11_inv_e12.scale(-1.0));
        v2.set_block(p, p, &l22.inverse()?.transpose());
    }
    Ok(CongruenceResult {
        w: &(&w0t * &v1) * &v2,
        target: signature(p, q),
        p,
        q,
        decisions: CongruenceDecisions::Sym { w0 },
    })
}

/// Completes `T2` (full column rank) to a pointwise nonsingular
/// `[T2, T2']` with `T2'` orthonormal and orthogonal to the range of `T2`.
pub fn complete_to_basis(
    t2: &TaylorMatrix,
    reference: Option<&QrDecisions>,
) -> Result<(TaylorMatrix, QrDecisions)> {
    let (n, d) = t2.shape();
    let qr = smooth_qr(t2, reference)?;
    Ok((qr.q.columns(d, n - d), qr.decisions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn max_slice_dev(a: &TaylorMatrix, b: &TaylorMatrix) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn qr_of_identity() {
        let qr = smooth_qr(&TaylorMatrix::identity(3, 1), None).unwrap();
        assert!(max_slice_dev(&qr.q, &TaylorMatrix::identity(3, 1)) < 1e-15);
        assert!(max_slice_dev(&qr.r, &TaylorMatrix::identity(3, 1)) < 1e-15);
    }

    #[test]
    fn qr_of_rotation() {
        let rot_dot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let a = TaylorMatrix::new(vec![DMatrix::identity(2, 2), rot_dot.clone()]).unwrap();
        let qr = smooth_qr(&a, None).unwrap();
        assert!((qr.q.slice(1) - &rot_dot).amax() < 1e-14);
        assert!((qr.r.slice(0) - DMatrix::identity(2, 2)).amax() < 1e-14);
        assert!(qr.r.slice(1).amax() < 1e-14);
    }

    #[test]
    fn qr_reconstructs_and_stays_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = TaylorMatrix::new(vec![rand_mat(&mut rng, 3, 2), rand_mat(&mut rng, 3, 2)]).unwrap();
        let qr = smooth_qr(&a, None).unwrap();
        let ap = permute_columns(&a, &qr.decisions.perm);
        assert!(max_slice_dev(&(&qr.q * &qr.r), &ap) < 1e-10);
        let qtq = &qr.q.transpose() * &qr.q;
        assert!(max_slice_dev(&qtq, &TaylorMatrix::identity(3, 1)) < 1e-10);
    }

    #[test]
    fn rank_revealing_null_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // rank-2 4x4 matrix function B(t) C(t)
        let b = TaylorMatrix::new(vec![rand_mat(&mut rng, 4, 2), rand_mat(&mut rng, 4, 2)]).unwrap();
        let c = TaylorMatrix::new(vec![rand_mat(&mut rng, 2, 4), rand_mat(&mut rng, 2, 4)]).unwrap();
        let a = &b * &c;
        let qr = smooth_qr_rank(&a, None, None, 1e-8).unwrap();
        assert_eq!(qr.rank(), 2);
        let z = qr.left_null();
        assert!((&z.transpose() * &a).amax() < 1e-10);
    }

    #[test]
    fn frozen_decisions_detect_rank_loss() {
        let a0 = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let qr = smooth_qr(&TaylorMatrix::constant(a0, 1), None).unwrap();
        let zero = TaylorMatrix::zeros(2, 1, 1);
        assert!(matches!(
            smooth_qr(&zero, Some(&qr.decisions)),
            Err(DaeError::RankDeficient(_))
        ));
    }

    #[test]
    fn cholesky_examples() {
        let a = TaylorMatrix::new(vec![
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0])),
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.0])),
        ])
        .unwrap();
        let l = smooth_cholesky(&a).unwrap();
        assert!((l.slice(0)[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((l.slice(0)[(1, 1)] - 3.0).abs() < 1e-15);
        assert!((l.slice(1)[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(l.slice(1)[(1, 1)].abs() < 1e-15);

        let i = smooth_cholesky(&TaylorMatrix::identity(3, 1)).unwrap();
        assert_eq!(i, TaylorMatrix::identity(3, 1));

        let neg = TaylorMatrix::constant(-DMatrix::identity(2, 2), 1);
        assert!(matches!(smooth_cholesky(&neg), Err(DaeError::NotPositiveDefinite(_))));
    }

    #[test]
    fn congruence_j_canonical_and_scaled() {
        for alpha in [1.0, 4.0] {
            let e = TaylorMatrix::constant(symplectic_unit(1) * alpha, 1);
            let c = congruence_to_j(&e, None).unwrap();
            let wew = &(&c.w.transpose() * &e) * &c.w;
            assert!((wew.slice(0) - &c.target).amax() < 1e-12);
            assert!(wew.slice(1).amax() < 1e-12);
        }
    }

    #[test]
    fn congruence_j_rejects_symmetric() {
        let e = TaylorMatrix::identity(2, 1);
        assert!(matches!(congruence_to_j(&e, None), Err(DaeError::NotStructured(_))));
    }

    #[test]
    fn congruence_s_examples() {
        let e = TaylorMatrix::constant(signature(2, 1), 1);
        let c = congruence_to_s(&e, 2, 1, None).unwrap();
        let wew = &(&c.w.transpose() * &e) * &c.w;
        assert!((wew.slice(0) - signature(2, 1)).amax() < 1e-12);
        assert!(wew.slice(1).amax() < 1e-12);

        let d = TaylorMatrix::constant(DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, -9.0]), 1);
        let c = congruence_to_s(&d, 1, 1, None).unwrap();
        let wew = &(&c.w.transpose() * &d) * &c.w;
        assert!((wew.slice(0) - signature(1, 1)).amax() < 1e-12);

        assert!(matches!(
            congruence_to_s(&d, 2, 0, None),
            Err(DaeError::InertiaMismatch { .. })
        ));
    }

    #[test]
    fn completion_of_unit_columns() {
        let t2 = TaylorMatrix::constant(DMatrix::identity(3, 3).columns(0, 2).into_owned(), 1);
        let (comp, _) = complete_to_basis(&t2, None).unwrap();
        let q = TaylorMatrix::hstack(&[&t2, &comp]);
        assert!(q.value().determinant().abs() > 0.5);

        let t = TaylorMatrix::new(vec![
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        ])
        .unwrap();
        let (comp, _) = complete_to_basis(&t, None).unwrap();
        let q = TaylorMatrix::hstack(&[&t, &comp]);
        assert!(q.value().determinant().abs() > 0.5);
    }
}
