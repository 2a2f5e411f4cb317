//! Truncated Taylor arithmetic for scalars and matrices.
//!
//! A value of order `K` stores `K + 1` normalized Taylor coefficients
//! `c[j] = x^{(j)}(t0) / j!`. With this normalization products are plain
//! Cauchy convolutions and quotients/roots follow from division-free
//! recurrences on the leading coefficient. Order 1 is the classical
//! value/derivative pair.
//!
//! None of the kernels branch on data: every smooth algorithm written on top
//! of these types (Cholesky, Householder with frozen decisions) is therefore
//! differentiated exactly.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use smallvec::SmallVec;

use crate::error::{DaeError, Result};

type Coeffs = SmallVec<[f64; 4]>;

/// Truncated Taylor series of a scalar function around an expansion point.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorScalar {
    coeffs: Coeffs,
}

impl TaylorScalar {
    /// Builds from normalized coefficients. Panics on an empty slice.
    pub fn new(coeffs: &[f64]) -> Self {
        assert!(!coeffs.is_empty(), "a Taylor value needs at least one coefficient");
        Self {
            coeffs: Coeffs::from_slice(coeffs),
        }
    }

    /// Builds from plain derivatives `x, x', x'', ...` (divides by `j!`).
    pub fn from_derivatives(derivs: &[f64]) -> Self {
        let mut fact = 1.0;
        let coeffs = derivs
            .iter()
            .enumerate()
            .map(|(j, &d)| {
                if j > 0 {
                    fact *= j as f64;
                }
                d / fact
            })
            .collect();
        Self { coeffs }
    }

    pub fn constant(value: f64, order: usize) -> Self {
        let mut coeffs = Coeffs::from_elem(0.0, order + 1);
        coeffs[0] = value;
        Self { coeffs }
    }

    pub fn zero(order: usize) -> Self {
        Self::constant(0.0, order)
    }

    /// The independent variable `t` expanded around `t0`.
    pub fn variable(t0: f64, order: usize) -> Self {
        let mut s = Self::constant(t0, order);
        if order >= 1 {
            s.coeffs[1] = 1.0;
        }
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, j: usize) -> f64 {
        self.coeffs[j]
    }

    /// `j`-th derivative, i.e. `j! * c[j]`.
    pub fn derivative(&self, j: usize) -> f64 {
        self.coeffs[j] * factorial(j)
    }

    fn check_order(&self, other: &Self) {
        assert_eq!(
            self.order(),
            other.order(),
            "Taylor order mismatch in arithmetic"
        );
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Quotient `self / rhs`. Fails when the leading coefficient of `rhs` is zero.
    pub fn div(&self, rhs: &Self) -> Result<Self> {
        self.check_order(rhs);
        let b0 = rhs.coeffs[0];
        if b0 == 0.0 {
            return Err(DaeError::Singular(
                "division by Taylor value with zero leading coefficient".into(),
            ));
        }
        let k = self.coeffs.len();
        let mut out = Coeffs::from_elem(0.0, k);
        for n in 0..k {
            let mut acc = self.coeffs[n];
            for j in 1..=n {
                acc -= rhs.coeffs[j] * out[n - j];
            }
            out[n] = acc / b0;
        }
        Ok(Self { coeffs: out })
    }

    pub fn recip(&self) -> Result<Self> {
        Self::constant(1.0, self.order()).div(self)
    }

    /// Square root. Fails unless the leading coefficient is positive.
    pub fn sqrt(&self) -> Result<Self> {
        let a0 = self.coeffs[0];
        if !(a0 > 0.0) {
            return Err(DaeError::Singular(format!(
                "square root of non-positive leading coefficient {a0:e}"
            )));
        }
        let k = self.coeffs.len();
        let mut out = Coeffs::from_elem(0.0, k);
        out[0] = a0.sqrt();
        for n in 1..k {
            let mut acc = self.coeffs[n];
            for j in 1..n {
                acc -= out[j] * out[n - j];
            }
            out[n] = acc / (2.0 * out[0]);
        }
        Ok(Self { coeffs: out })
    }

    /// Series of the time derivative (order drops by one).
    pub fn differentiate(&self) -> Self {
        if self.order() == 0 {
            return Self::zero(0);
        }
        Self {
            coeffs: (1..self.coeffs.len())
                .map(|j| j as f64 * self.coeffs[j])
                .collect(),
        }
    }

    /// Keeps the first `order + 1` coefficients, padding with zeros.
    pub fn with_order(&self, order: usize) -> Self {
        let mut coeffs = Coeffs::from_elem(0.0, order + 1);
        for (dst, src) in coeffs.iter_mut().zip(self.coeffs.iter()) {
            *dst = *src;
        }
        Self { coeffs }
    }
}

impl Add for &TaylorScalar {
    type Output = TaylorScalar;
    fn add(self, rhs: &TaylorScalar) -> TaylorScalar {
        self.check_order(rhs);
        TaylorScalar {
            coeffs: self
                .coeffs
                .iter()
                .zip(rhs.coeffs.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &TaylorScalar {
    type Output = TaylorScalar;
    fn sub(self, rhs: &TaylorScalar) -> TaylorScalar {
        self.check_order(rhs);
        TaylorScalar {
            coeffs: self
                .coeffs
                .iter()
                .zip(rhs.coeffs.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &TaylorScalar {
    type Output = TaylorScalar;
    fn mul(self, rhs: &TaylorScalar) -> TaylorScalar {
        self.check_order(rhs);
        let k = self.coeffs.len();
        let mut out = Coeffs::from_elem(0.0, k);
        for n in 0..k {
            let mut acc = 0.0;
            for j in 0..=n {
                acc += self.coeffs[j] * rhs.coeffs[n - j];
            }
            out[n] = acc;
        }
        TaylorScalar { coeffs: out }
    }
}

impl Neg for &TaylorScalar {
    type Output = TaylorScalar;
    fn neg(self) -> TaylorScalar {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for TaylorScalar {
            type Output = TaylorScalar;
            fn $m(self, rhs: TaylorScalar) -> TaylorScalar {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&TaylorScalar> for TaylorScalar {
            type Output = TaylorScalar;
            fn $m(self, rhs: &TaylorScalar) -> TaylorScalar {
                (&self).$m(rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// Scalar operation selector for [`arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Sqrt,
}

/// Applies one scalar operation. Binary operations need `b`.
pub fn arith(op: ArithOp, a: &TaylorScalar, b: Option<&TaylorScalar>) -> Result<TaylorScalar> {
    let need_b = || {
        b.ok_or_else(|| DaeError::Config(format!("{op:?} needs a second operand")))
            .and_then(|b| {
                if b.order() != a.order() {
                    Err(DaeError::OrderMismatch {
                        left: a.order(),
                        right: b.order(),
                    })
                } else {
                    Ok(b)
                }
            })
    };
    match op {
        ArithOp::Add => Ok(a + need_b()?),
        ArithOp::Sub => Ok(a - need_b()?),
        ArithOp::Mul => Ok(a * need_b()?),
        ArithOp::Div => a.div(need_b()?),
        ArithOp::Sqrt => a.sqrt(),
    }
}

/// Central finite-difference estimate of the normalized Taylor coefficients
/// `0..=order` of `f` at `t0`. Accuracy is `O(h^2)` per coefficient; meant as
/// an independent oracle for checking coefficient providers.
pub fn taylor_lift<F: Fn(f64) -> f64>(f: F, t0: f64, order: usize, h: f64) -> TaylorScalar {
    let derivs: Vec<f64> = (0..=order)
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..=j {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let offset = (j as f64 / 2.0 - i as f64) * h;
                acc += sign * binomial(j, i) * f(t0 + offset);
            }
            acc / h.powi(j as i32)
        })
        .collect();
    TaylorScalar::from_derivatives(&derivs)
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Truncated Taylor series of a matrix-valued function, stored as one real
/// matrix per normalized coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorMatrix {
    coeffs: Vec<DMatrix<f64>>,
}

impl TaylorMatrix {
    /// Builds from coefficient slices; all slices must share a shape.
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| DaeError::ShapeMismatch("empty coefficient list".into()))?;
        let shape = first.shape();
        if coeffs.iter().any(|c| c.shape() != shape) {
            return Err(DaeError::ShapeMismatch(
                "coefficient slices differ in shape".into(),
            ));
        }
        Ok(Self { coeffs })
    }

    /// Builds from plain derivative matrices `A, A', A'', ...`.
    pub fn from_derivatives(derivs: Vec<DMatrix<f64>>) -> Result<Self> {
        let coeffs = derivs
            .into_iter()
            .enumerate()
            .map(|(j, d)| d / factorial(j))
            .collect();
        Self::new(coeffs)
    }

    pub fn zeros(rows: usize, cols: usize, order: usize) -> Self {
        Self {
            coeffs: vec![DMatrix::zeros(rows, cols); order + 1],
        }
    }

    pub fn identity(n: usize, order: usize) -> Self {
        Self::constant(DMatrix::identity(n, n), order)
    }

    /// A matrix function with vanishing derivatives.
    pub fn constant(value: DMatrix<f64>, order: usize) -> Self {
        let (r, c) = value.shape();
        let mut coeffs = vec![DMatrix::zeros(r, c); order + 1];
        coeffs[0] = value;
        Self { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn nrows(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn ncols(&self) -> usize {
        self.coeffs[0].ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coeffs[0].shape()
    }

    pub fn value(&self) -> &DMatrix<f64> {
        &self.coeffs[0]
    }

    pub fn slice(&self, j: usize) -> &DMatrix<f64> {
        &self.coeffs[j]
    }

    pub fn slice_mut(&mut self, j: usize) -> &mut DMatrix<f64> {
        &mut self.coeffs[j]
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    /// `j`-th derivative matrix.
    pub fn derivative(&self, j: usize) -> DMatrix<f64> {
        &self.coeffs[j] * factorial(j)
    }

    pub fn entry(&self, i: usize, j: usize) -> TaylorScalar {
        TaylorScalar {
            coeffs: self.coeffs.iter().map(|c| c[(i, j)]).collect(),
        }
    }

    pub fn set_entry(&mut self, i: usize, j: usize, v: &TaylorScalar) {
        assert_eq!(v.order(), self.order(), "Taylor order mismatch in set_entry");
        for (c, x) in self.coeffs.iter_mut().zip(v.coeffs.iter()) {
            c[(i, j)] = *x;
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c.transpose()).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Multiplies by a scalar series (Cauchy product over slices).
    pub fn scale_by(&self, s: &TaylorScalar) -> Self {
        assert_eq!(s.order(), self.order(), "Taylor order mismatch in scale_by");
        let k = self.coeffs.len();
        let coeffs = (0..k)
            .map(|n| {
                let mut acc = DMatrix::zeros(self.nrows(), self.ncols());
                for j in 0..=n {
                    acc += &self.coeffs[n - j] * s.coeffs[j];
                }
                acc
            })
            .collect();
        Self { coeffs }
    }

    pub fn checked_add(&self, rhs: &Self) -> Result<Self> {
        self.check_same(rhs)?;
        Ok(self + rhs)
    }

    pub fn checked_sub(&self, rhs: &Self) -> Result<Self> {
        self.check_same(rhs)?;
        Ok(self - rhs)
    }

    pub fn checked_mul(&self, rhs: &Self) -> Result<Self> {
        if self.order() != rhs.order() {
            return Err(DaeError::OrderMismatch {
                left: self.order(),
                right: rhs.order(),
            });
        }
        if self.ncols() != rhs.nrows() {
            return Err(DaeError::ShapeMismatch(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(self * rhs)
    }

    fn check_same(&self, rhs: &Self) -> Result<()> {
        if self.order() != rhs.order() {
            return Err(DaeError::OrderMismatch {
                left: self.order(),
                right: rhs.order(),
            });
        }
        if self.shape() != rhs.shape() {
            return Err(DaeError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(())
    }

    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .map(|c| c.view((r0, c0), (nr, nc)).into_owned())
                .collect(),
        }
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        assert_eq!(b.order(), self.order(), "Taylor order mismatch in set_block");
        for (c, bc) in self.coeffs.iter_mut().zip(b.coeffs.iter()) {
            c.view_mut((r0, c0), bc.shape()).copy_from(bc);
        }
    }

    pub fn columns(&self, c0: usize, nc: usize) -> Self {
        self.block(0, c0, self.nrows(), nc)
    }

    pub fn rows(&self, r0: usize, nr: usize) -> Self {
        self.block(r0, 0, nr, self.ncols())
    }

    /// `[a b ...]`; all parts must share row count and order.
    pub fn hstack(parts: &[&Self]) -> Self {
        let rows = parts[0].nrows();
        let order = parts[0].order();
        let cols = parts.iter().map(|p| p.ncols()).sum();
        let mut out = Self::zeros(rows, cols, order);
        let mut c0 = 0;
        for p in parts {
            out.set_block(0, c0, p);
            c0 += p.ncols();
        }
        out
    }

    pub fn vstack(parts: &[&Self]) -> Self {
        let cols = parts[0].ncols();
        let order = parts[0].order();
        let rows = parts.iter().map(|p| p.nrows()).sum();
        let mut out = Self::zeros(rows, cols, order);
        let mut r0 = 0;
        for p in parts {
            out.set_block(r0, 0, p);
            r0 += p.nrows();
        }
        out
    }

    /// Solves `self * X = rhs` for a square `self` with nonsingular value.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        if self.nrows() != self.ncols() || self.nrows() != rhs.nrows() {
            return Err(DaeError::ShapeMismatch(format!(
                "solve with {:?} and rhs {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        if self.order() != rhs.order() {
            return Err(DaeError::OrderMismatch {
                left: self.order(),
                right: rhs.order(),
            });
        }
        let lu = self.coeffs[0].clone().lu();
        let scale = self.coeffs[0].amax().max(f64::MIN_POSITIVE);
        let u = lu.u();
        let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
        if !(min_pivot > 1e-14 * scale) {
            return Err(DaeError::Singular(format!(
                "matrix value is singular (pivot {min_pivot:e})"
            )));
        }
        let k = self.coeffs.len();
        let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(k);
        for n in 0..k {
            let mut acc = rhs.coeffs[n].clone();
            for j in 1..=n {
                acc -= &self.coeffs[j] * &out[n - j];
            }
            let x = lu
                .solve(&acc)
                .ok_or_else(|| DaeError::Singular("LU solve failed".into()))?;
            out.push(x);
        }
        Ok(Self { coeffs: out })
    }

    pub fn inverse(&self) -> Result<Self> {
        self.solve(&Self::identity(self.nrows(), self.order()))
    }

    /// Series of the time derivative (order drops by one).
    pub fn differentiate(&self) -> Self {
        if self.order() == 0 {
            return Self::zeros(self.nrows(), self.ncols(), 0);
        }
        Self {
            coeffs: (1..self.coeffs.len())
                .map(|j| &self.coeffs[j] * j as f64)
                .collect(),
        }
    }

    /// Keeps the first `order + 1` slices, padding with zeros.
    pub fn with_order(&self, order: usize) -> Self {
        let mut coeffs: Vec<_> = self.coeffs.iter().take(order + 1).cloned().collect();
        while coeffs.len() < order + 1 {
            coeffs.push(DMatrix::zeros(self.nrows(), self.ncols()));
        }
        Self { coeffs }
    }

    /// Largest absolute entry over all slices.
    pub fn amax(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.amax()))
    }
}

impl Add for &TaylorMatrix {
    type Output = TaylorMatrix;
    fn add(self, rhs: &TaylorMatrix) -> TaylorMatrix {
        assert_eq!(self.order(), rhs.order(), "Taylor order mismatch");
        TaylorMatrix {
            coeffs: self
                .coeffs
                .iter()
                .zip(rhs.coeffs.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &TaylorMatrix {
    type Output = TaylorMatrix;
    fn sub(self, rhs: &TaylorMatrix) -> TaylorMatrix {
        assert_eq!(self.order(), rhs.order(), "Taylor order mismatch");
        TaylorMatrix {
            coeffs: self
                .coeffs
                .iter()
                .zip(rhs.coeffs.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &TaylorMatrix {
    type Output = TaylorMatrix;
    fn mul(self, rhs: &TaylorMatrix) -> TaylorMatrix {
        assert_eq!(self.order(), rhs.order(), "Taylor order mismatch");
        let k = self.coeffs.len();
        let coeffs = (0..k)
            .map(|n| {
                let mut acc = &self.coeffs[0] * &rhs.coeffs[n];
                for j in 1..=n {
                    acc += &self.coeffs[j] * &rhs.coeffs[n - j];
                }
                acc
            })
            .collect();
        TaylorMatrix { coeffs }
    }
}

impl Neg for &TaylorMatrix {
    type Output = TaylorMatrix;
    fn neg(self) -> TaylorMatrix {
        self.scale(-1.0)
    }
}

/// Matrix operation selector for [`mat_arith`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatOp {
    Add,
    Sub,
    Matmul,
    Transpose,
    Scale(f64),
}

/// Applies one matrix operation with shape and order checks.
pub fn mat_arith(op: MatOp, a: &TaylorMatrix, b: Option<&TaylorMatrix>) -> Result<TaylorMatrix> {
    let need_b =
        || b.ok_or_else(|| DaeError::Config(format!("{op:?} needs a second operand")));
    match op {
        MatOp::Add => a.checked_add(need_b()?),
        MatOp::Sub => a.checked_sub(need_b()?),
        MatOp::Matmul => a.checked_mul(need_b()?),
        MatOp::Transpose => Ok(a.transpose()),
        MatOp::Scale(s) => Ok(a.scale(s)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(x: f64, dx: f64) -> TaylorScalar {
        TaylorScalar::new(&[x, dx])
    }

    #[test]
    fn pair_rules() {
        assert_eq!(&pair(2.0, 3.0) * &pair(5.0, 7.0), pair(10.0, 29.0));
        assert_eq!(pair(4.0, 4.0).sqrt().unwrap(), pair(2.0, 1.0));
        assert_eq!(pair(6.0, 1.0).div(&pair(2.0, 0.0)).unwrap(), pair(3.0, 0.5));
        assert_eq!(&pair(1.0, 2.0) + &pair(3.0, 4.0), pair(4.0, 6.0));
        assert_eq!(&pair(1.0, 2.0) - &pair(3.0, 5.0), pair(-2.0, -3.0));
    }

    #[test]
    fn singular_points() {
        assert!(matches!(
            pair(1.0, 1.0).div(&pair(0.0, 1.0)),
            Err(DaeError::Singular(_))
        ));
        assert!(matches!(pair(0.0, 1.0).sqrt(), Err(DaeError::Singular(_))));
        assert!(matches!(pair(-1.0, 1.0).sqrt(), Err(DaeError::Singular(_))));
    }

    #[test]
    fn arith_checks_operands() {
        let a = pair(1.0, 0.0);
        assert!(matches!(arith(ArithOp::Add, &a, None), Err(DaeError::Config(_))));
        let b = TaylorScalar::new(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            arith(ArithOp::Mul, &a, Some(&b)),
            Err(DaeError::OrderMismatch { .. })
        ));
    }

    #[test]
    fn higher_order_exp_times_exp() {
        // e^t * e^t = e^{2t}; coefficients 2^j / j!
        let e = TaylorScalar::from_derivatives(&[1.0; 5]);
        let sq = &e * &e;
        for j in 0..5 {
            assert!((sq.coeff(j) - 2f64.powi(j as i32) / factorial(j)).abs() < 1e-15);
        }
        let back = sq.div(&e).unwrap();
        for j in 0..5 {
            assert!((back.coeff(j) - e.coeff(j)).abs() < 1e-14);
        }
        let root = sq.sqrt().unwrap();
        for j in 0..5 {
            assert!((root.coeff(j) - e.coeff(j)).abs() < 1e-14);
        }
    }

    #[test]
    fn matmul_identity_and_symplectic_unit() {
        let i = TaylorMatrix::identity(3, 1);
        let p = &i * &i;
        assert_eq!(p, i);

        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let a = TaylorMatrix::new(vec![DMatrix::identity(2, 2), j.clone()]).unwrap();
        let sq = &a * &a;
        assert_eq!(sq.slice(0), &DMatrix::identity(2, 2));
        assert_eq!(sq.slice(1), &(j * 2.0));
    }

    #[test]
    fn mat_arith_shape_errors() {
        let a = TaylorMatrix::zeros(2, 3, 1);
        let b = TaylorMatrix::zeros(2, 3, 1);
        assert!(matches!(
            mat_arith(MatOp::Matmul, &a, Some(&b)),
            Err(DaeError::ShapeMismatch(_))
        ));
        assert!(mat_arith(MatOp::Add, &a, Some(&b)).is_ok());
        let t = mat_arith(MatOp::Transpose, &a, None).unwrap();
        assert_eq!(t.shape(), (3, 2));
    }

    #[test]
    fn inverse_series() {
        // A(t) = [[1+t, t],[0, 2]] around 0 to order 3
        let a = TaylorMatrix::new(vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
        ])
        .unwrap();
        let inv = a.inverse().unwrap();
        let prod = &a * &inv;
        let id = TaylorMatrix::identity(2, 3);
        assert!((&prod - &id).amax() < 1e-14);
    }

    #[test]
    fn lift_of_simple_functions() {
        let c = taylor_lift(|_| 3.5, 0.2, 1, 1e-3);
        assert!((c.coeff(0) - 3.5).abs() < 1e-12 && c.coeff(1).abs() < 1e-9);
        let sq = taylor_lift(|t| t * t, 1.0, 1, 1e-3);
        assert!((sq.coeff(0) - 1.0).abs() < 1e-12 && (sq.coeff(1) - 2.0).abs() < 1e-6);
        let s = taylor_lift(f64::sin, 0.0, 2, 1e-3);
        assert!(s.coeff(0).abs() < 1e-12);
        assert!((s.coeff(1) - 1.0).abs() < 1e-6);
        assert!(s.coeff(2).abs() < 1e-6);
    }

    #[test]
    fn differentiate_polynomial() {
        // t^3 around 1: 1 + 3u + 3u^2 + u^3
        let p = TaylorScalar::new(&[1.0, 3.0, 3.0, 1.0]);
        let d = p.differentiate();
        assert_eq!(d.coeffs(), &[3.0, 6.0, 3.0]);
    }
}
