//! Finite-dimensional operator algebra on `d x d` complex matrices.
//!
//! Everything here works in the algebra `M_d` with its standard trace. The
//! Loewner order, the positive functional calculus and Schatten norms are the
//! primitives every other module uses to state its inequalities.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default tolerance for psd checks, relative to the operator norm.
pub const TOL_PSD: f64 = 1e-10;

/// Largest relative Hermitian drift that is silently symmetrized away.
pub const HERMITIAN_DRIFT: f64 = 1e-12;

/// Which trace normalizes Schatten norms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Trace {
    #[default]
    Standard,
    /// `tr(x) / d`
    Normalized,
}

/// A `d x d` complex matrix.
#[derive(Clone, PartialEq)]
pub struct MatrixValue {
    m: DMatrix<C64>,
}

impl fmt::Debug for MatrixValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MatrixValue{}", self.m)
    }
}

impl MatrixValue {
    pub fn zeros(d: usize) -> Self {
        Self { m: DMatrix::zeros(d, d) }
    }

    pub fn identity(d: usize) -> Self {
        Self { m: DMatrix::identity(d, d) }
    }

    /// Build from row-major entries.
    pub fn from_row_major(d: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::LengthMismatch { expected: d * d, got: entries.len() });
        }
        Ok(Self { m: DMatrix::from_row_slice(d, d, entries) })
    }

    /// Build from real row-major entries.
    pub fn from_real(d: usize, entries: &[f64]) -> Result<Self> {
        let c: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_row_major(d, &c)
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        Self { m }
    }

    /// Matrix unit `E_ij`.
    pub fn unit(d: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(d, d);
        m[(i, j)] = C64::new(1.0, 0.0);
        Self { m }
    }

    pub fn from_dmatrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NonSquare { rows: m.nrows(), cols: m.ncols() });
        }
        Ok(Self { m })
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.m[(i, j)] = v;
    }

    pub fn row_major(&self) -> Vec<C64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { m: &self.m * C64::new(s, 0.0) }
    }

    pub fn scale_c(&self, s: C64) -> Self {
        Self { m: &self.m * s }
    }

    /// `x* x`
    pub fn abs_sq(&self) -> Self {
        Self { m: self.m.adjoint() * &self.m }
    }

    /// `x x*`
    pub fn abs_sq_row(&self) -> Self {
        Self { m: &self.m * self.m.adjoint() }
    }

    pub fn frobenius(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Relative Frobenius distance between `x` and `x*`.
    pub fn hermitian_drift(&self) -> f64 {
        let scale = self.frobenius();
        if scale == 0.0 {
            return 0.0;
        }
        (&self.m - self.m.adjoint()).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / scale
    }

    /// Hermitian part `(x + x*)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self { m: (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0) }
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        match self.dim() {
            0 => 0.0,
            1 => self.m[(0, 0)].norm(),
            _ => max_eig_unchecked(&self.abs_sq()).max(0.0).sqrt(),
        }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_drift() <= tol
    }
}

impl Add for &MatrixValue {
    type Output = MatrixValue;
    fn add(self, rhs: &MatrixValue) -> MatrixValue {
        MatrixValue { m: &self.m + &rhs.m }
    }
}

impl Sub for &MatrixValue {
    type Output = MatrixValue;
    fn sub(self, rhs: &MatrixValue) -> MatrixValue {
        MatrixValue { m: &self.m - &rhs.m }
    }
}

impl Mul for &MatrixValue {
    type Output = MatrixValue;
    fn mul(self, rhs: &MatrixValue) -> MatrixValue {
        MatrixValue { m: &self.m * &rhs.m }
    }
}

impl Add for MatrixValue {
    type Output = MatrixValue;
    fn add(self, rhs: MatrixValue) -> MatrixValue {
        MatrixValue { m: self.m + rhs.m }
    }
}

impl Sub for MatrixValue {
    type Output = MatrixValue;
    fn sub(self, rhs: MatrixValue) -> MatrixValue {
        MatrixValue { m: self.m - rhs.m }
    }
}

impl Mul for MatrixValue {
    type Output = MatrixValue;
    fn mul(self, rhs: MatrixValue) -> MatrixValue {
        MatrixValue { m: self.m * rhs.m }
    }
}

impl Neg for &MatrixValue {
    type Output = MatrixValue;
    fn neg(self) -> MatrixValue {
        MatrixValue { m: -&self.m }
    }
}

impl AddAssign<&MatrixValue> for MatrixValue {
    fn add_assign(&mut self, rhs: &MatrixValue) {
        self.m += &rhs.m;
    }
}

impl SubAssign<&MatrixValue> for MatrixValue {
    fn sub_assign(&mut self, rhs: &MatrixValue) {
        self.m -= &rhs.m;
    }
}

/// A positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdMatrix(MatrixValue);

impl PsdMatrix {
    pub fn new(m: MatrixValue) -> Result<Self> {
        Self::with_tol(m, TOL_PSD)
    }

    /// Validate `m` as psd with smallest eigenvalue at least `-tol * ||m||`.
    pub fn with_tol(m: MatrixValue, tol: f64) -> Result<Self> {
        let (vals, _) = hermitian_eigh(&m)?;
        let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if vals.is_empty() || min >= -tol * scale.max(f64::MIN_POSITIVE) || min >= -f64::MIN_POSITIVE {
            Ok(Self(m.hermitian_part()))
        } else {
            Err(Error::NotPsd(min))
        }
    }

    /// Wrap a matrix that is psd by construction (e.g. `x* x`).
    pub(crate) fn trusted(m: MatrixValue) -> Self {
        Self(m.hermitian_part())
    }

    pub fn zeros(d: usize) -> Self {
        Self(MatrixValue::zeros(d))
    }

    pub fn identity(d: usize) -> Self {
        Self(MatrixValue::identity(d))
    }

    pub fn as_matrix(&self) -> &MatrixValue {
        &self.0
    }

    pub fn into_matrix(self) -> MatrixValue {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// Trace as a real number.
    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Largest eigenvalue, which is the operator norm for psd input.
    pub fn max_eig(&self) -> f64 {
        max_eig_unchecked(&self.0).max(0.0)
    }

    pub fn add(&self, other: &PsdMatrix) -> PsdMatrix {
        PsdMatrix(&self.0 + &other.0)
    }

    pub fn scale(&self, s: f64) -> PsdMatrix {
        debug_assert!(s >= 0.0);
        PsdMatrix(self.0.scale(s))
    }
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
///
/// Drift up to [`HERMITIAN_DRIFT`] is removed by symmetrization; larger drift
/// is an error.
pub fn hermitian_eigh(x: &MatrixValue) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let drift = x.hermitian_drift();
    if drift > HERMITIAN_DRIFT {
        return Err(Error::NotHermitian(drift));
    }
    Ok(eigh_unchecked(&x.hermitian_part()))
}

fn eigh_unchecked(h: &MatrixValue) -> (Vec<f64>, DMatrix<C64>) {
    let d = h.dim();
    if d == 1 {
        return (vec![h.m[(0, 0)].re], DMatrix::identity(1, 1));
    }
    let eig = SymmetricEigen::new(h.m.clone());
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(d, d);
    for (col, &i) in idx.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Largest eigenvalue of the Hermitian part, with closed forms for `d <= 2`.
pub fn max_eig_unchecked(x: &MatrixValue) -> f64 {
    match x.dim() {
        0 => 0.0,
        1 => x.m[(0, 0)].re,
        2 => {
            let a = x.m[(0, 0)].re;
            let c = x.m[(1, 1)].re;
            let b = (x.m[(0, 1)] + x.m[(1, 0)].conj()) * 0.5;
            0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b.norm_sqr()).sqrt()
        }
        _ => {
            let (vals, _) = eigh_unchecked(&x.hermitian_part());
            *vals.last().unwrap()
        }
    }
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eig_unchecked(x: &MatrixValue) -> f64 {
    match x.dim() {
        0 => 0.0,
        1 => x.m[(0, 0)].re,
        2 => {
            let a = x.m[(0, 0)].re;
            let c = x.m[(1, 1)].re;
            let b = (x.m[(0, 1)] + x.m[(1, 0)].conj()) * 0.5;
            0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b.norm_sqr()).sqrt()
        }
        _ => eigh_unchecked(&x.hermitian_part()).0[0],
    }
}

fn reassemble(vals: &[f64], vecs: &DMatrix<C64>) -> MatrixValue {
    let d = vals.len();
    let mut scaled = vecs.clone();
    for j in 0..d {
        let s = C64::new(vals[j], 0.0);
        for i in 0..d {
            scaled[(i, j)] *= s;
        }
    }
    MatrixValue { m: scaled * vecs.adjoint() }
}

/// Apply a real function to the spectrum of a Hermitian matrix.
pub fn hermitian_apply(x: &MatrixValue, f: impl Fn(f64) -> f64) -> Result<MatrixValue> {
    let (vals, vecs) = hermitian_eigh(x)?;
    let mapped: Vec<f64> = vals.iter().map(|&v| f(v)).collect();
    Ok(reassemble(&mapped, &vecs))
}

/// Hermitian part of `x` with negative eigenvalues set to zero; for values
/// that are psd in exact arithmetic but come from a cancelling difference.
pub fn psd_part(x: &MatrixValue) -> PsdMatrix {
    let h = x.hermitian_part();
    if min_eig_unchecked(&h) >= 0.0 {
        return PsdMatrix::trusted(h);
    }
    let (vals, vecs) = eigh_unchecked(&h);
    let clipped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
    PsdMatrix::trusted(reassemble(&clipped, &vecs))
}

/// `|x| = (x* x)^{1/2}`.
pub fn abs_psd(x: &MatrixValue) -> PsdMatrix {
    let (vals, vecs) = eigh_unchecked(&x.abs_sq().hermitian_part());
    let roots: Vec<f64> = vals.iter().map(|&v| v.max(0.0).sqrt()).collect();
    PsdMatrix::trusted(reassemble(&roots, &vecs))
}

/// Eigenvalue-wise power `a^r` for `r >= 0`, with `0^r := 0`.
pub fn psd_power(a: &PsdMatrix, r: f64) -> Result<PsdMatrix> {
    psd_power_tol(a.as_matrix(), r, TOL_PSD)
}

/// [`psd_power`] on an unvalidated Hermitian matrix.
pub fn psd_power_tol(a: &MatrixValue, r: f64, tol: f64) -> Result<PsdMatrix> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidExponent(r));
    }
    let (vals, vecs) = hermitian_eigh(a)?;
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(&min) = vals.first() {
        if min < -tol * scale {
            return Err(Error::NotPsd(min));
        }
    }
    let powered: Vec<f64> = vals.iter().map(|&v| if v <= 0.0 { 0.0 } else { v.powf(r) }).collect();
    Ok(PsdMatrix::trusted(reassemble(&powered, &vecs)))
}

/// Singular values of `x`, descending.
pub fn singular_values(x: &MatrixValue) -> Vec<f64> {
    let mut s: Vec<f64> = x.m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Schatten `p`-norm with the standard trace; `p = inf` is the operator norm.
pub fn schatten_norm(x: &MatrixValue, p: f64) -> Result<f64> {
    schatten_norm_tr(x, p, Trace::Standard)
}

pub fn schatten_norm_tr(x: &MatrixValue, p: f64, trace: Trace) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    if p.is_infinite() {
        return Ok(x.op_norm());
    }
    let s = singular_values(x);
    let mut sum: f64 = s.iter().map(|v| v.powf(p)).sum();
    if trace == Trace::Normalized {
        sum /= x.dim() as f64;
    }
    Ok(sum.powf(1.0 / p))
}

/// Schatten norm of a psd matrix from its eigenvalues, allowing any `p > 0`.
pub(crate) fn psd_trace_power(a: &MatrixValue, p: f64) -> f64 {
    match a.dim() {
        1 => a.m[(0, 0)].re.max(0.0).powf(p),
        2 => {
            let hi = max_eig_unchecked(a).max(0.0);
            let lo = min_eig_unchecked(a).max(0.0);
            hi.powf(p) + lo.powf(p)
        }
        _ => eigh_unchecked(&a.hermitian_part()).0.iter().map(|v| v.max(0.0).powf(p)).sum(),
    }
}

/// `a <= b` in the Loewner order, up to `tol`.
pub fn loewner_leq(a: &MatrixValue, b: &MatrixValue, tol: f64) -> Result<bool> {
    Ok(loewner_slack(a, b)? >= -tol)
}

/// Smallest eigenvalue of `b - a` for Hermitian `a`, `b`.
pub fn loewner_slack(a: &MatrixValue, b: &MatrixValue) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch { expected: a.dim(), got: b.dim() });
    }
    for m in [a, b] {
        let drift = m.hermitian_drift();
        if drift > HERMITIAN_DRIFT {
            return Err(Error::NotHermitian(drift));
        }
    }
    Ok(min_eig_unchecked(&(b - a)))
}

/// The two sides `(b* a b, (b* a^p b)^{1/p})` of Hansen's inequality.
pub fn hansen_transform_bound(a: &PsdMatrix, b: &MatrixValue, p: f64) -> Result<(PsdMatrix, PsdMatrix)> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidExponent(p));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch { expected: a.dim(), got: b.dim() });
    }
    let norm = b.op_norm();
    if norm > 1.0 + 1e-12 {
        return Err(Error::NotContraction(norm));
    }
    // Both sides as functions of a^r b, through its SVD: forming b* a^p b
    // first would square the conditioning before the 1/p root.
    let half = &psd_power(a, 0.5)?.into_matrix() * b;
    let lhs = half.abs_sq();
    let c = &psd_power(a, 0.5 * p)?.into_matrix() * b;
    let svd = c.m.svd(false, true);
    let v = svd.v_t.expect("requested").adjoint();
    let powered: Vec<f64> = svd.singular_values.iter().map(|&s| s.powf(2.0 / p)).collect();
    Ok((PsdMatrix::trusted(lhs), PsdMatrix::trusted(reassemble(&powered, &v))))
}

/// Seeded random matrices used by the ensembles and the property tests.
pub mod random {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub fn gaussian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> MatrixValue {
        let m = DMatrix::from_fn(d, d, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        });
        MatrixValue { m }
    }

    pub fn psd<R: Rng + ?Sized>(d: usize, rng: &mut R) -> PsdMatrix {
        PsdMatrix::trusted(gaussian(d, rng).abs_sq())
    }

    /// Haar-like unitary from the QR factorization of a Gaussian matrix.
    pub fn unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> MatrixValue {
        let g = gaussian(d, rng);
        let qr = g.m.qr();
        let q = qr.q();
        let r = qr.r();
        let mut u = q.clone();
        for j in 0..d {
            let rjj = r[(j, j)];
            let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
            for i in 0..d {
                u[(i, j)] = q[(i, j)] * phase;
            }
        }
        MatrixValue { m: u }
    }

    /// A random matrix with operator norm at most one.
    pub fn contraction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> MatrixValue {
        let g = gaussian(d, rng);
        let n = g.op_norm();
        let target: f64 = rng.random_range(0.0..1.0);
        if n == 0.0 {
            g
        } else {
            g.scale(target / n)
        }
    }
}
