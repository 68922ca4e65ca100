//! Cone quadrature shared by the area integrals and the Φ/Ψ transforms.
//!
//! Each row of a [`ConeGrid`] gets its own x-lattice aligned with the
//! cell-center lattice of the function grid: spacing `w / 2^m` when the net
//! square is narrower than a cell, `w 2^p` otherwise. A cone cell at offset
//! `r` from a center `t_i` then samples at a lattice point, so one FFT
//! evaluation per (row, phase) serves every `t_i` at once.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::flat;
use crate::gridfn::{GridSpec, MatrixField};
use crate::halfplane::LatticeEngine;
use crate::matcore::{self, C64};
use crate::net::{clip_to_cone, ConeGrid};

/// Finest sub-lattice is `w / 2^MAX_SUB_LOG2`.
pub const MAX_SUB_LOG2: u32 = 6;

/// A cone cell `[(r - 1/2)δ, (r + 1/2)δ] x [y_lo, y_hi]` clipped to the cone,
/// sampled at `(r δ, y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeCell {
    pub r: i64,
    pub x: f64,
    pub area: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConeRow {
    pub level: i32,
    pub y_lo: f64,
    pub y_hi: f64,
    pub y: f64,
    pub spacing: f64,
    /// Phases per cell width (fine rows), else 1.
    pub sub: usize,
    /// Cell widths per lattice step (coarse rows), else 1.
    pub stride: usize,
    pub cells: Vec<ConeCell>,
}

impl ConeRow {
    /// Phase (shift `phase * w / sub`) and cell-lattice offset of `t_i + x_r`.
    pub fn locate(&self, r: i64) -> (usize, isize) {
        if self.sub > 1 {
            (r.rem_euclid(self.sub as i64) as usize, r.div_euclid(self.sub as i64) as isize)
        } else {
            (0, (r * self.stride as i64) as isize)
        }
    }

    /// Index of `t + x_r`, for t-sample `kt`, on the lattice
    /// `t_first + k w / sub` where `t_first` is the first t-sample.
    pub fn u_index(&self, kt: usize, r: i64) -> i64 {
        kt as i64 + r * self.stride as i64
    }

    pub fn area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).sum()
    }
}

/// Cone `Γ(0, y0)` discretized against a function grid. The t-samples are the
/// cell centers `t_i`, `i = -ext_t .. n + ext_t`, refined `sub` times in rows
/// finer than a cell so that `t + x` covers the row lattice uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeLayout {
    grid: GridSpec,
    net: ConeGrid,
    y0: f64,
    ext_t: usize,
    rows: Vec<ConeRow>,
}

impl ConeLayout {
    pub fn new(grid: GridSpec, net: &ConeGrid, y0: f64, ext_t: usize) -> Result<Self> {
        if !(y0 >= 0.0) {
            return Err(Error::NonPositiveHeight(y0));
        }
        if y0 >= net.y_max() {
            return Err(Error::Truncation(format!("y0 = {y0} is above the net top {}", net.y_max())));
        }
        let w = grid.cell_width_f64();
        let mut rows = Vec::new();
        for row in net.rows() {
            if row.y_hi <= y0 {
                continue;
            }
            let (spacing, sub, stride) = if row.hx < w {
                let m = ((w / row.hx).log2().ceil() as u32).min(MAX_SUB_LOG2);
                (w / (1u64 << m) as f64, 1usize << m, 1usize)
            } else {
                let p = (row.hx / w).log2().floor().max(0.0) as u32;
                (w * (1u64 << p) as f64, 1usize, 1usize << p)
            };
            let reach = row.y_hi - y0;
            let rmax = (reach / spacing + 0.5).ceil() as i64;
            let mut cells = Vec::new();
            for r in -rmax..=rmax {
                let x0 = (r as f64 - 0.5) * spacing;
                let x1 = x0 + spacing;
                let lo = (row.y_lo - y0).max(0.0);
                if let Some(c) = clip_to_cone(x0, x1, lo, row.y_hi - y0) {
                    cells.push(ConeCell { r, x: r as f64 * spacing, area: c.area });
                }
            }
            if !cells.is_empty() {
                rows.push(ConeRow { level: row.level, y_lo: row.y_lo, y_hi: row.y_hi, y: row.y, spacing, sub, stride, cells });
            }
        }
        Ok(Self { grid, net: net.clone(), y0, ext_t, rows })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn net(&self) -> &ConeGrid {
        &self.net
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn ext_t(&self) -> usize {
        self.ext_t
    }

    pub fn rows(&self) -> &[ConeRow] {
        &self.rows
    }

    /// Number of t-samples.
    pub fn t_count(&self) -> usize {
        self.grid.cell_count() + 2 * self.ext_t
    }

    /// t-sample index range, as lattice indices.
    pub fn t_range(&self) -> std::ops::Range<isize> {
        -(self.ext_t as isize)..(self.grid.cell_count() + self.ext_t) as isize
    }

    /// Position of t-sample `i` (a cell center, possibly outside `W`).
    pub fn t_at(&self, i: isize) -> f64 {
        -self.grid.half_width() + (i as f64 + 0.5) * self.grid.cell_width_f64()
    }

    pub fn cell_count(&self) -> usize {
        self.rows.iter().map(|r| r.cells.len()).sum()
    }

    /// Number of t-samples of a row: the centers, refined `sub` times.
    pub fn row_t_count(&self, row: &ConeRow) -> usize {
        self.t_count() * row.sub
    }

    /// Position of t-sample `kt` of a row.
    pub fn row_t_at(&self, row: &ConeRow, kt: usize) -> f64 {
        self.t_at(-(self.ext_t as isize)) + kt as f64 * self.grid.cell_width_f64() / row.sub as f64
    }

    /// Gradient samples `∇f(t + x_r, y)` for every row, cell and t-sample of
    /// the row (only the cell centers when `centers_only`), one FFT
    /// evaluation per (row, phase of `t + x_r`).
    pub(crate) fn visit_samples(
        &self,
        f: &MatrixField,
        centers_only: bool,
        mut visit: impl FnMut(usize, usize, usize, &[C64], &[C64]),
    ) {
        let mut engines: BTreeMap<usize, LatticeEngine> = BTreeMap::new();
        let w = self.grid.cell_width_f64();
        let ext_t = self.ext_t as isize;
        for (ri, row) in self.rows.iter().enumerate() {
            let sub = row.sub as i64;
            let taus = if centers_only { 1 } else { sub };
            // u-phase -> (cell, t-phase, cell-lattice offset)
            let mut phases: BTreeMap<usize, Vec<(usize, usize, isize)>> = BTreeMap::new();
            let mut reach = 0usize;
            for (ci, c) in row.cells.iter().enumerate() {
                for tau in 0..taus {
                    let (phase, off) = row.locate(c.r + tau);
                    reach = reach.max(off.unsigned_abs() + 1);
                    phases.entry(phase).or_default().push((ci, tau as usize, off));
                }
            }
            let ext = (self.ext_t + reach).next_power_of_two();
            let engine = engines.entry(ext).or_insert_with(|| LatticeEngine::new(f, ext));
            for (phase, list) in phases {
                let lat = engine.eval(phase as f64 * w / row.sub as f64, row.y);
                for (ci, tau, off) in list {
                    for i in self.t_range() {
                        let kt = (i + ext_t) as usize * row.sub + tau;
                        let (a, b) = lat.at(i + off);
                        visit(ri, ci, kt, a, b);
                    }
                }
            }
        }
    }
}

/// `S^2(t_i) = Σ_cells area |∇f(t_i + x, y)|^2` (column convention) at the
/// cell-center t-samples, as row-major blocks.
pub(crate) fn square_samples(f: &MatrixField, layout: &ConeLayout) -> Vec<C64> {
    let d = f.dim();
    let dd = d * d;
    let mut out = vec![C64::new(0.0, 0.0); layout.t_count() * dd];
    layout.visit_samples(f, true, |ri, ci, kt, a, b| {
        let row = &layout.rows[ri];
        let area = row.cells[ci].area;
        let k = kt / row.sub;
        let s = &mut out[k * dd..(k + 1) * dd];
        flat::adj_mul_acc(s, d, area, a, a);
        flat::adj_mul_acc(s, d, area, b, b);
    });
    out
}

/// `(Σ_i w tr (S_i)^{p/2})^{1/p}` over psd blocks `S_i`.
pub fn mixed_norm_of_squares(d: usize, w: f64, squares: &[C64], p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    let dd = d * d;
    if p.is_infinite() {
        let m = squares
            .chunks(dd)
            .map(|b| matcore::max_eig_unchecked(&flat::to_matrix(d, b)).max(0.0))
            .fold(0.0, f64::max);
        return Ok(m.sqrt());
    }
    let total: f64 = squares.chunks(dd).map(|b| matcore::psd_trace_power(&flat::to_matrix(d, b), 0.5 * p)).sum();
    Ok((total * w).powf(1.0 / p))
}

/// An element `h(x, y, t)` of the cone-valued space, sampled at the cells of a
/// [`ConeLayout`] for every t-sample, with the two slots of `Γ̃`.
#[derive(Clone, Debug)]
pub struct ConeField {
    layout: Arc<ConeLayout>,
    d: usize,
    /// Per row: `[t][cell][slot][d*d]`.
    data: Vec<Vec<C64>>,
}

impl ConeField {
    pub fn zeros(layout: Arc<ConeLayout>, d: usize) -> Self {
        let dd = d * d;
        let data =
            layout.rows.iter().map(|r| vec![C64::new(0.0, 0.0); layout.row_t_count(r) * r.cells.len() * 2 * dd]).collect();
        Self { layout, d, data }
    }

    /// Fills every sample from `(x, y, t) -> (slot 1, slot 2)` row-major blocks.
    pub fn from_fn(layout: Arc<ConeLayout>, d: usize, mut g: impl FnMut(f64, f64, f64) -> (Vec<C64>, Vec<C64>)) -> Self {
        let mut h = Self::zeros(layout.clone(), d);
        let dd = d * d;
        for (ri, row) in layout.rows.iter().enumerate() {
            for k in 0..layout.row_t_count(row) {
                let t = layout.row_t_at(row, k);
                for (ci, c) in row.cells.iter().enumerate() {
                    let (a, b) = g(c.x, row.y, t);
                    assert_eq!(a.len(), dd);
                    assert_eq!(b.len(), dd);
                    let base = h.offset(ri, k, ci);
                    h.data[ri][base..base + dd].copy_from_slice(&a);
                    h.data[ri][base + dd..base + 2 * dd].copy_from_slice(&b);
                }
            }
        }
        h
    }

    /// Independent standard complex Gaussian entries in both slots.
    pub fn random<R: Rng + ?Sized>(layout: Arc<ConeLayout>, d: usize, rng: &mut R) -> Self {
        let mut h = Self::zeros(layout, d);
        for row in &mut h.data {
            for z in row.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *z = C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
            }
        }
        h
    }

    pub fn layout(&self) -> &Arc<ConeLayout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn offset(&self, ri: usize, k: usize, ci: usize) -> usize {
        let dd = self.d * self.d;
        let cells = self.layout.rows[ri].cells.len();
        ((k * cells) + ci) * 2 * dd
    }

    /// Slots at row `ri`, row t-sample `k`, cell `ci`. Cell centers are the
    /// samples `k = i * sub`.
    pub fn get(&self, ri: usize, k: usize, ci: usize) -> (&[C64], &[C64]) {
        let dd = self.d * self.d;
        let o = self.offset(ri, k, ci);
        let s = &self.data[ri][o..o + 2 * dd];
        s.split_at(dd)
    }

    pub fn get_mut(&mut self, ri: usize, k: usize, ci: usize) -> (&mut [C64], &mut [C64]) {
        let dd = self.d * self.d;
        let o = self.offset(ri, k, ci);
        let s = &mut self.data[ri][o..o + 2 * dd];
        s.split_at_mut(dd)
    }

    pub(crate) fn row_data(&self, ri: usize) -> &[C64] {
        &self.data[ri]
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().flatten().for_each(|z| *z *= s);
        out
    }

    pub fn add(&self, other: &ConeField) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(out)
    }

    /// Keeps only the cell-center samples, right-multiplied by `sub * m[i]`
    /// for a per-center block `m[i]`. With this weighting, [`ConeField::inner`]
    /// against the result is the center-only pairing used by the norms.
    pub(crate) fn weight_centers(&mut self, blocks: &[C64]) {
        let d = self.d;
        let dd = d * d;
        for ri in 0..self.data.len() {
            let row = &self.layout.rows[ri];
            let (cells, sub) = (row.cells.len(), row.sub);
            for kt in 0..self.layout.row_t_count(row) {
                for ci in 0..cells {
                    let o = self.offset(ri, kt, ci);
                    let s = &mut self.data[ri][o..o + 2 * dd];
                    if kt % sub != 0 {
                        s.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                        continue;
                    }
                    let m = &blocks[(kt / sub) * dd..(kt / sub + 1) * dd];
                    for slot in s.chunks_mut(dd) {
                        let prod = mat_mul(d, slot, m);
                        slot.iter_mut().zip(prod).for_each(|(z, v)| *z = v * sub as f64);
                    }
                }
            }
        }
    }

    fn check_compatible(&self, other: &ConeField) -> Result<()> {
        if self.d != other.d {
            return Err(Error::DimMismatch { expected: self.d, got: other.d });
        }
        if *self.layout != *other.layout {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `Σ_cells area (h_1* h_1 + h_2* h_2)` at each cell-center t-sample.
    pub fn squares(&self) -> Vec<C64> {
        let d = self.d;
        let dd = d * d;
        let mut out = vec![C64::new(0.0, 0.0); self.layout.t_count() * dd];
        for (ri, row) in self.layout.rows.iter().enumerate() {
            for k in 0..self.layout.t_count() {
                let s = &mut out[k * dd..(k + 1) * dd];
                for (ci, c) in row.cells.iter().enumerate() {
                    let (a, b) = self.get(ri, k * row.sub, ci);
                    flat::adj_mul_acc(s, d, c.area, a, a);
                    flat::adj_mul_acc(s, d, c.area, b, b);
                }
            }
        }
        out
    }

    /// `(tr ∫ (Σ area |h|^2)^{p/2} dt)^{1/p}`, `t` over the cell centers.
    pub fn norm(&self, p: f64) -> Result<f64> {
        mixed_norm_of_squares(self.d, self.layout.grid.cell_width_f64(), &self.squares(), p)
    }

    /// `Σ_t (w / sub) Σ_cells area tr(h_1* g_1 + h_2* g_2)` over all t-samples.
    pub fn inner(&self, other: &ConeField) -> Result<C64> {
        self.check_compatible(other)?;
        let w = self.layout.grid.cell_width_f64();
        let dd = self.d * self.d;
        let mut acc = C64::new(0.0, 0.0);
        for (ri, row) in self.layout.rows.iter().enumerate() {
            let (a, b) = (&self.data[ri], &other.data[ri]);
            for (q, (x, y)) in a.chunks(2 * dd).zip(b.chunks(2 * dd)).enumerate() {
                let area = row.cells[q % row.cells.len()].area;
                acc += flat::trace_adj_mul(x, y) * (area / row.sub as f64);
            }
        }
        Ok(acc * w)
    }

    /// Largest operator norm of a sample, over both slots.
    pub fn max_op_norm(&self) -> f64 {
        let d = self.d;
        let dd = d * d;
        self.data
            .iter()
            .flat_map(|row| row.chunks(dd))
            .map(|b| matcore::singular_values(&flat::to_matrix(d, b)).into_iter().fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }
}

fn mat_mul(d: usize, a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for k in 0..d {
            let x = a[i * d + k];
            for j in 0..d {
                out[i * d + j] += x * b[k * d + j];
            }
        }
    }
    out
}
