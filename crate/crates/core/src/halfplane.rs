//! Poisson extension of step functions to the upper half-plane, its gradient,
//! and the Green energy identity `‖f‖_2^2 = 2 ∬ |∇f|^2 y dx dy`.
//!
//! All integrals of kernels against step functions use exact antiderivatives.
//! Writing `f` through its jumps `c_e = f(e+) - f(e-)` at the grid points,
//! `f(x, y) = (1/π) Σ_e c_e arctan((x - e)/y)`, and the gradient is
//! `Σ_e c_e (P_y(x - e), -(x - e) / (π((x - e)^2 + y^2)))`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flat;
use crate::gridfn::{GridSpec, MatrixField};
use crate::matcore::{MatrixValue, C64};
use crate::net::ConeGrid;

/// Horizontal margin of the half-plane quadrature, in multiples of `y`.
pub const X_MARGIN: f64 = 16.0;

/// A point of the upper half-plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelPoint {
    pub x: f64,
    pub y: f64,
}

impl KernelPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(y > 0.0) {
            return Err(Error::NonPositiveHeight(y));
        }
        Ok(Self { x, y })
    }
}

/// The two slots `(∂_x f, ∂_y f)` of a gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct GradPair {
    pub dx: MatrixValue,
    pub dy: MatrixValue,
}

impl GradPair {
    /// `|∇f|^2 = dx* dx + dy* dy`.
    pub fn norm_sq(&self) -> MatrixValue {
        &self.dx.abs_sq() + &self.dy.abs_sq()
    }

    /// Slot product `∇f ∇g = ∂_x f ∂_x g + ∂_y f ∂_y g`.
    pub fn product(&self, other: &GradPair) -> MatrixValue {
        &(&self.dx * &other.dx) + &(&self.dy * &other.dy)
    }
}

/// `P_y(x) = (1/π) y / (x^2 + y^2)`.
pub fn poisson_kernel(x: f64, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::NonPositiveHeight(y));
    }
    Ok(y / (PI * (x * x + y * y)))
}

/// `(∂_x P_y(x), ∂_y P_y(x))`.
pub fn grad_kernel(x: f64, y: f64) -> Result<(f64, f64)> {
    if !(y > 0.0) {
        return Err(Error::NonPositiveHeight(y));
    }
    let r2 = x * x + y * y;
    Ok((-2.0 * x * y / (PI * r2 * r2), (x * x - y * y) / (PI * r2 * r2)))
}

/// `∫ P_y(x - s) f(s) ds`, summed exactly cell by cell.
pub fn extend(f: &MatrixField, x: f64, y: f64) -> Result<MatrixValue> {
    if !(y > 0.0) {
        return Err(Error::NonPositiveHeight(y));
    }
    let grid = f.grid();
    let d = f.dim();
    let mut acc = flat::zeros(d);
    for i in 0..f.len() {
        let (a, b) = grid.cell_bounds(i);
        let w = (((x - a) / y).atan() - ((x - b) / y).atan()) / PI;
        flat::axpy(&mut acc, w, f.block(i));
    }
    Ok(flat::to_matrix(d, &acc))
}

pub fn extend_at(f: &MatrixField, p: KernelPoint) -> Result<MatrixValue> {
    extend(f, p.x, p.y)
}

/// Jump positions and jump values of a step field (zero outside `W`).
#[derive(Clone, Debug)]
pub(crate) struct Jumps {
    pub d: usize,
    pub pos: Vec<f64>,
    pub coef: Vec<C64>,
}

impl Jumps {
    pub fn new(f: &MatrixField) -> Self {
        let grid = f.grid();
        let n = f.len();
        let dd = f.dim() * f.dim();
        let mut pos = Vec::with_capacity(n + 1);
        let mut coef = Vec::with_capacity((n + 1) * dd);
        let zero = vec![C64::new(0.0, 0.0); dd];
        for m in 0..=n {
            let right = if m < n { f.block(m) } else { &zero[..] };
            let left = if m > 0 { f.block(m - 1) } else { &zero[..] };
            pos.push(grid.unit_to_f64(grid.origin_units() + m as i64));
            coef.extend(right.iter().zip(left).map(|(r, l)| r - l));
        }
        Self { d: f.dim(), pos, coef }
    }

    pub fn block(&self, m: usize) -> &[C64] {
        let dd = self.d * self.d;
        &self.coef[m * dd..(m + 1) * dd]
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    /// Gradient blocks `(dx, dy)` at one point.
    pub fn gradient(&self, x: f64, y: f64, dx: &mut [C64], dy: &mut [C64]) {
        dx.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        dy.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for m in 0..self.len() {
            let z = x - self.pos[m];
            let inv = 1.0 / (PI * (z * z + y * y));
            flat::axpy(dx, y * inv, self.block(m));
            flat::axpy(dy, -z * inv, self.block(m));
        }
    }
}

/// Gradient of the Poisson extension at one point.
pub fn gradient(f: &MatrixField, x: f64, y: f64) -> Result<GradPair> {
    if !(y > 0.0) {
        return Err(Error::NonPositiveHeight(y));
    }
    let d = f.dim();
    let jumps = Jumps::new(f);
    let (mut dx, mut dy) = (flat::zeros(d), flat::zeros(d));
    jumps.gradient(x, y, &mut dx, &mut dy);
    Ok(GradPair { dx: flat::to_matrix(d, &dx), dy: flat::to_matrix(d, &dy) })
}

pub fn gradient_at(f: &MatrixField, p: KernelPoint) -> Result<GradPair> {
    gradient(f, p.x, p.y)
}

/// Gradient samples on the shifted cell-center lattice `t_i + shift`,
/// `i = -ext .. n + ext`, stored as row-major blocks.
#[derive(Clone, Debug)]
pub struct LatticeGrad {
    pub d: usize,
    pub ext: usize,
    pub dx: Vec<C64>,
    pub dy: Vec<C64>,
}

impl LatticeGrad {
    /// Blocks at lattice index `i` (`-ext <= i < n + ext`).
    pub fn at(&self, i: isize) -> (&[C64], &[C64]) {
        let dd = self.d * self.d;
        let k = (i + self.ext as isize) as usize;
        (&self.dx[k * dd..(k + 1) * dd], &self.dy[k * dd..(k + 1) * dd])
    }

    /// `tr |∇f|^2` at lattice index `i`.
    pub fn trace_sq(&self, i: isize) -> f64 {
        let (a, b) = self.at(i);
        a.iter().chain(b).map(|z| z.norm_sqr()).sum()
    }
}

/// Evaluates the gradient on shifted copies of the cell-center lattice by
/// FFT convolution of the jump sequence with the sampled kernels.
pub struct LatticeEngine {
    grid: GridSpec,
    d: usize,
    n: usize,
    ext: usize,
    len: usize,
    spectra: Vec<Vec<C64>>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl LatticeEngine {
    /// `ext` extra lattice points on each side of `W`.
    pub fn new(f: &MatrixField, ext: usize) -> Self {
        let n = f.len();
        let d = f.dim();
        let len = 2 * n + 2 * ext;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        let ifft = planner.plan_fft_inverse(len);
        let jumps = Jumps::new(f);
        let dd = d * d;
        let mut spectra = Vec::with_capacity(dd);
        for q in 0..dd {
            let mut buf = vec![C64::new(0.0, 0.0); len];
            for m in 0..jumps.len() {
                buf[m] = jumps.block(m)[q];
            }
            fft.process(&mut buf);
            spectra.push(buf);
        }
        Self { grid: f.grid(), d, n, ext, len, spectra, fft, ifft }
    }

    pub fn ext(&self) -> usize {
        self.ext
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn eval(&self, shift: f64, y: f64) -> LatticeGrad {
        let w = self.grid.cell_width_f64();
        let (n, ext, len) = (self.n as isize, self.ext as isize, self.len);
        let mut k1 = vec![C64::new(0.0, 0.0); len];
        let mut k2 = vec![C64::new(0.0, 0.0); len];
        for r in (-ext - n)..(n + ext) {
            let z = (r as f64 + 0.5) * w + shift;
            let inv = 1.0 / (PI * (z * z + y * y));
            let idx = r.rem_euclid(len as isize) as usize;
            k1[idx] = C64::new(y * inv, 0.0);
            k2[idx] = C64::new(-z * inv, 0.0);
        }
        self.fft.process(&mut k1);
        self.fft.process(&mut k2);
        let dd = self.d * self.d;
        let count = self.n + 2 * self.ext;
        let mut dx = vec![C64::new(0.0, 0.0); count * dd];
        let mut dy = vec![C64::new(0.0, 0.0); count * dd];
        let scale = 1.0 / len as f64;
        let mut buf = vec![C64::new(0.0, 0.0); len];
        for q in 0..dd {
            for (kern, out) in [(&k1, &mut dx), (&k2, &mut dy)] {
                for ((b, s), k) in buf.iter_mut().zip(&self.spectra[q]).zip(kern.iter()) {
                    *b = s * k;
                }
                self.ifft.process(&mut buf);
                for i in -ext..(n + ext) {
                    let idx = i.rem_euclid(len as isize) as usize;
                    out[((i + ext) as usize) * dd + q] = buf[idx] * scale;
                }
            }
        }
        LatticeGrad { d: self.d, ext: self.ext, dx, dy }
    }
}

/// Result of the Green energy computation.
#[derive(Clone, Debug, Serialize)]
pub struct GreenEnergy {
    /// `2 tr ∬ |∇f|^2 y dx dy`: net quadrature above `y_min` plus the exact
    /// strip below it.
    pub energy: f64,
    /// `tr ∫ |f|^2`.
    pub l2sq: f64,
    /// Part computed by net quadrature.
    pub quadrature: f64,
    /// Closed-form contribution of the strip `0 < y < y_min`.
    pub strip: f64,
    /// Size of the dropped part above `y_max` (leading-order estimate).
    pub tail_estimate: f64,
    /// Set when `∫ f` is not zero; the dropped tail then decays only like `1/y_max`.
    pub nonzero_mean: bool,
}

/// `(2/π)[Y - (|Δ|/2) arctan(2Y/|Δ|)]`: the energy kernel of two unit jumps
/// at distance `Δ` over the strip `0 < y < Y`.
fn strip_kernel(delta: f64, top: f64) -> f64 {
    let a = delta.abs();
    if a == 0.0 {
        2.0 * top / PI
    } else {
        2.0 / PI * (top - 0.5 * a * (2.0 * top / a).atan())
    }
}

/// `2 ∬_{0<y<Y} ∇f ∇g y dx dy`, exactly, as a matrix (slot product `f g`).
pub fn strip_pair(f: &MatrixField, g: &MatrixField, top: f64) -> Result<MatrixValue> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch);
    }
    if f.dim() != g.dim() {
        return Err(Error::DimMismatch { expected: f.dim(), got: g.dim() });
    }
    let d = f.dim();
    let (jf, jg) = (Jumps::new(f), Jumps::new(g));
    let mut acc = flat::zeros(d);
    let mut tmp = flat::zeros(d);
    for a in 0..jf.len() {
        tmp.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for b in 0..jg.len() {
            flat::axpy(&mut tmp, strip_kernel(jf.pos[a] - jg.pos[b], top), jg.block(b));
        }
        // acc += c_a(f) * tmp
        let ca = jf.block(a);
        for i in 0..d {
            for j in 0..d {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..d {
                    s += ca[i * d + k] * tmp[k * d + j];
                }
                acc[i * d + j] += s;
            }
        }
    }
    Ok(flat::to_matrix(d, &acc))
}

/// `2 tr ∬_{0<y<Y} |∇f|^2 y dx dy`, exactly.
pub fn strip_energy(f: &MatrixField, top: f64) -> f64 {
    let jumps = Jumps::new(f);
    let n = jumps.len();
    let mut total = 0.0;
    for a in 0..n {
        let ba = jumps.block(a);
        total += strip_kernel(0.0, top) * ba.iter().map(|z| z.norm_sqr()).sum::<f64>();
        for b in 0..a {
            let ip = flat::trace_adj_mul(ba, jumps.block(b)).re;
            total += 2.0 * strip_kernel(jumps.pos[a] - jumps.pos[b], top) * ip;
        }
    }
    total
}

/// Lattice spacing used for a row: `w 2^p` with `p` chosen so the spacing
/// does not exceed `hx`.
fn aligned_spacing(w: f64, hx: f64) -> i32 {
    (hx / w).log2().floor() as i32
}

/// `Σ_k g(x_k)` over the quadrature points of one net row, where `g` maps
/// gradient blocks to a value, with the half-plane x-range `|x| < 2^J + X_MARGIN y`.
fn row_sum<T: Default + std::ops::AddAssign>(
    engine: &LatticeEngine,
    jumps: &Jumps,
    row_y: f64,
    hx: f64,
    mut g: impl FnMut(&[C64], &[C64]) -> T,
) -> (T, f64) {
    let grid = engine.grid();
    let w = grid.cell_width_f64();
    let half = grid.half_width();
    let reach = half + X_MARGIN * row_y;
    let ext_needed = ((X_MARGIN * row_y) / w).ceil() as usize;
    let mut total = T::default();
    if ext_needed <= engine.ext() {
        let p = aligned_spacing(w, hx);
        let n = grid.cell_count() as isize;
        let ext = ext_needed as isize;
        if p <= 0 {
            let m = 1usize << (-p);
            let spacing = w / m as f64;
            for r in 0..m {
                let shift = ((r as f64 + 0.5) / m as f64 - 0.5) * w;
                let lat = engine.eval(shift, row_y);
                for i in -ext..(n + ext) {
                    let (a, b) = lat.at(i);
                    total += g(a, b);
                }
            }
            return (total, spacing);
        }
        let stride = 1isize << p;
        let lat = engine.eval(0.5 * w, row_y);
        let first = -(ext / stride + 1) * stride + (stride / 2 - 1);
        let mut i = first;
        while i < n + ext {
            if i >= -ext {
                let (a, b) = lat.at(i);
                total += g(a, b);
            }
            i += stride;
        }
        return (total, w * stride as f64);
    }
    // coarse rows: the σ(i,j) sub-square midpoints, evaluated directly
    let d = jumps.d;
    let (mut dx, mut dy) = (flat::zeros(d), flat::zeros(d));
    let k = (reach / hx).ceil() as i64;
    for idx in -k..k {
        let x = (idx as f64 + 0.5) * hx;
        jumps.gradient(x, row_y, &mut dx, &mut dy);
        total += g(&dx, &dy);
    }
    (total, hx)
}

/// Green energy with net quadrature above `y_min` and the exact strip below.
pub fn green_energy(f: &MatrixField, net: &ConeGrid) -> Result<GreenEnergy> {
    let l2sq = f.l2_norm_sq();
    let engine = LatticeEngine::new(f, f.len() / 2);
    let jumps = Jumps::new(f);
    let mut quadrature = 0.0;
    for row in net.rows() {
        let (s, spacing) = row_sum(&engine, &jumps, row.y, row.hx, |a, b| {
            a.iter().chain(b).map(|z| z.norm_sqr()).sum::<f64>()
        });
        quadrature += 2.0 * row.y * row.dy * spacing * s;
    }
    let strip = strip_energy(f, net.y_min());
    let mean = f.integral();
    let nonzero_mean = mean.frobenius() > 1e-12 * f.l2_norm().max(f64::MIN_POSITIVE);
    // far field: ∫|∇f|^2 dx ~ |∫f|^2 / (2π y^3), or the dipole term ~ 1/y^5
    let m2 = mean.frobenius().powi(2);
    let y = net.y_max();
    let dipole = {
        let grid = f.grid();
        let mut first = MatrixValue::zeros(f.dim());
        for i in 0..f.len() {
            first += &f.cell(i).scale(grid.cell_center(i) * grid.cell_width_f64());
        }
        first.frobenius().powi(2)
    };
    let tail_estimate = if nonzero_mean { m2 / (PI * y) } else { 3.0 * dipole / (4.0 * PI * y.powi(3)) };
    Ok(GreenEnergy { energy: quadrature + strip, l2sq, quadrature, strip, tail_estimate, nonzero_mean })
}

/// `(2 ∬ ∇f ∇g y dx dy, ∫ f g ds)`; the left side by net quadrature above
/// `y_min` plus the exact strip below.
pub fn polarized_green(f: &MatrixField, g: &MatrixField, net: &ConeGrid) -> Result<(MatrixValue, MatrixValue)> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch);
    }
    if f.dim() != g.dim() {
        return Err(Error::DimMismatch { expected: f.dim(), got: g.dim() });
    }
    let d = f.dim();
    let ext = f.len() / 2;
    let (ef, eg) = (LatticeEngine::new(f, ext), LatticeEngine::new(g, ext));
    let (jf, jg) = (Jumps::new(f), Jumps::new(g));
    let mut lhs = flat::zeros(d);
    for row in net.rows() {
        let (sf, spacing) = row_points(&ef, &jf, row.y, row.hx);
        let (sg, _) = row_points(&eg, &jg, row.y, row.hx);
        for ((fx, fy), (gx, gy)) in sf.iter().zip(&sg) {
            // ∂_x f ∂_x g + ∂_y f ∂_y g
            let prod = slot_product(d, fx, gx, fy, gy);
            flat::axpy(&mut lhs, 2.0 * row.y * row.dy * spacing, &prod);
        }
    }
    let strip = strip_pair(f, g, net.y_min())?;
    let lhs = &flat::to_matrix(d, &lhs) + &strip;
    let w = f.grid().cell_width_f64();
    let mut rhs = MatrixValue::zeros(d);
    for i in 0..f.len() {
        rhs += &(&f.cell(i) * &g.cell(i)).scale(w);
    }
    Ok((lhs, rhs))
}

fn slot_product(d: usize, fx: &[C64], gx: &[C64], fy: &[C64], gy: &[C64]) -> Vec<C64> {
    let mut out = flat::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..d {
                s += fx[i * d + k] * gx[k * d + j] + fy[i * d + k] * gy[k * d + j];
            }
            out[i * d + j] = s;
        }
    }
    out
}

type BlockPair = (Vec<C64>, Vec<C64>);

fn row_points(engine: &LatticeEngine, jumps: &Jumps, y: f64, hx: f64) -> (Vec<BlockPair>, f64) {
    #[derive(Default)]
    struct Collect(Vec<BlockPair>);
    impl std::ops::AddAssign for Collect {
        fn add_assign(&mut self, mut rhs: Self) {
            self.0.append(&mut rhs.0);
        }
    }
    let (c, spacing) = row_sum(engine, jumps, y, hx, |a, b| Collect(vec![(a.to_vec(), b.to_vec())]));
    (c.0, spacing)
}
