//! BMO norms over interval families, BMO^q window norms, and Carleson
//! functionals of `|∇φ|^2 y dx dy`.
//!
//! Intervals are always subintervals of `W`: the field is only known there,
//! and the dyadic comparison runs over atoms inside `W`.

use serde::Serialize;

use crate::dyadic::{self, FiltrationId};
use crate::error::{Error, Result};
use crate::flat;
use crate::gridfn::{GridSpec, MatrixField, MomentPrefix, Rat, RatInterval};
use crate::halfplane::LatticeEngine;
use crate::matcore::{self, MatrixValue, PsdMatrix, C64};
use crate::maximal;
use crate::net::ConeGrid;

/// Largest cell count accepted by the all-interval enumeration.
pub const MAX_ENUM_CELLS: usize = 3 << 11;

/// Constant of the dyadic-pair comparison, `4√3`.
pub const DYADIC_PAIR_CONSTANT: f64 = 6.928_203_230_275_509;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Column,
    Row,
}

impl Side {
    /// The field the column computation runs on.
    pub fn orient(self, phi: &MatrixField) -> MatrixField {
        match self {
            Side::Column => phi.clone(),
            Side::Row => phi.adjoint(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BmoMode {
    AllGridIntervals,
    DyadicPair,
    WindowFamily,
}

/// A BMO-type value: exact, or a `(lower, upper)` bound pair.
#[derive(Clone, Debug, PartialEq)]
pub struct BmoReport {
    pub lower: f64,
    pub upper: f64,
    pub exact: bool,
    /// Interval attaining the sup (the whole window for bound pairs).
    pub interval: RatInterval,
    pub mode: BmoMode,
}

impl BmoReport {
    pub fn exact(value: f64, interval: RatInterval, mode: BmoMode) -> Self {
        Self { lower: value, upper: value, exact: true, interval, mode }
    }

    pub fn bound(lower: f64, upper: f64, interval: RatInterval, mode: BmoMode) -> Self {
        Self { lower: lower.min(upper), upper, exact: false, interval, mode }
    }

    /// The exact value, or the lower end of a bound pair.
    pub fn value(&self) -> f64 {
        self.lower
    }
}

/// `‖(1/|I|) ∫_I |φ - φ_I|^2‖` for a grid-aligned `I ⊆ W`.
pub fn interval_sharp(phi: &MatrixField, iv: &RatInterval) -> Result<PsdMatrix> {
    let (a, b) = inside_cells(phi.grid(), iv)?;
    let m = MomentPrefix::new(phi).sharp(a, b, &mut Vec::new());
    Ok(PsdMatrix::trusted(m.hermitian_part()))
}

fn inside_cells(grid: GridSpec, iv: &RatInterval) -> Result<(usize, usize)> {
    if !grid.window().contains_interval(iv) {
        return Err(Error::OutsideWindow(iv.to_string()));
    }
    let (lo, hi) = grid.interval_units(iv)?;
    Ok(grid.clip_units(lo, hi))
}

fn cell_interval(grid: GridSpec, a: usize, b: usize) -> RatInterval {
    let o = grid.origin_units();
    let u = grid.units_per_one();
    RatInterval::new(Rat::new(o + a as i64, u), Rat::new(o + b as i64, u)).expect("nonempty cell range")
}

/// `‖φ‖_{BMO_c}` (or `BMO_r` via `φ*`) over the mode's interval family.
///
/// * `AllGridIntervals`: exact sup over all grid-aligned subintervals of `W`.
/// * `DyadicPair`: sup over atoms of `D` and `D'` inside `W`, returned as the
///   bound `(s, 4√3 s)`.
/// * `WindowFamily`: exact sup over the symmetric windows `I_t^n ⊆ W`.
pub fn bmo_norm(phi: &MatrixField, side: Side, mode: BmoMode) -> Result<BmoReport> {
    let phi = side.orient(phi);
    let grid = phi.grid();
    match mode {
        BmoMode::AllGridIntervals => {
            let n = phi.len();
            if n > MAX_ENUM_CELLS {
                return Err(Error::Config(format!("{n} cells exceed the enumeration cap {MAX_ENUM_CELLS}")));
            }
            let pre = MomentPrefix::new(&phi);
            let mut buf = Vec::new();
            let (mut best, mut arg) = (0.0f64, (0, n));
            for a in 0..n {
                for b in a + 1..=n {
                    let v = matcore::max_eig_unchecked(&pre.sharp(a, b, &mut buf));
                    if v > best {
                        best = v;
                        arg = (a, b);
                    }
                }
            }
            Ok(BmoReport::exact(best.max(0.0).sqrt(), cell_interval(grid, arg.0, arg.1), mode))
        }
        BmoMode::DyadicPair => {
            let mut best = BmoReport::exact(0.0, grid.window(), mode);
            for filtration in FiltrationId::both() {
                let r = dyadic::dyadic_bmo_q_norm(&phi, f64::INFINITY, filtration, Side::Column)?;
                if r.value() > best.value() {
                    best = r;
                }
            }
            Ok(BmoReport::bound(best.value(), DYADIC_PAIR_CONSTANT * best.value(), best.interval, mode))
        }
        BmoMode::WindowFamily => {
            let pre = MomentPrefix::new(&phi);
            let mut buf = Vec::new();
            let (mut best, mut arg) = (0.0f64, grid.window());
            for (_, half) in window_levels(grid) {
                for i in 0..phi.len() {
                    if let Some((a, b)) = window_cells(grid, i, half) {
                        let v = matcore::max_eig_unchecked(&pre.sharp(a, b, &mut buf));
                        if v > best {
                            best = v;
                            arg = cell_interval(grid, a, b);
                        }
                    }
                }
            }
            Ok(BmoReport::exact(best.max(0.0).sqrt(), arg, mode))
        }
    }
}

/// Levels `n` of the windows `I_t^n = (t - 2^{n-1}, t + 2^{n-1}]` that are
/// grid-aligned and fit in `W`, with the half-width in grid units.
pub fn window_levels(grid: GridSpec) -> Vec<(i32, i64)> {
    (1 - grid.k()..=grid.j() + 1).map(|n| (n, 3i64 << (n - 1 + grid.k()))).collect()
}

/// Cells of `I_t^n` for `t` the right endpoint of cell `i`, when inside `W`.
fn window_cells(grid: GridSpec, i: usize, half: i64) -> Option<(usize, usize)> {
    let t = i as i64 + 1;
    let n = grid.cell_count() as i64;
    (t - half >= 0 && t + half <= n).then(|| ((t - half) as usize, (t + half) as usize))
}

/// `φ_n^#(t) = 2^{-n} ∫_{I_t^n} |φ - φ_{I_t^n}|^2` at each cell's right
/// endpoint `t`; zero where the window leaves `W`.
pub fn window_sharp_field(phi: &MatrixField, half_units: i64) -> MatrixField {
    let grid = phi.grid();
    let pre = MomentPrefix::new(phi);
    let mut buf = Vec::new();
    let mut out = MatrixField::zeros(grid, phi.dim());
    for i in 0..phi.len() {
        if let Some((a, b)) = window_cells(grid, i, half_units) {
            let m = matcore::psd_part(&pre.sharp(a, b, &mut buf));
            out.set_cell(i, m.as_matrix());
        }
    }
    out
}

/// `‖sup_n φ_n^#‖_{q/2}^{1/2}` over the window family `I_t^n ⊆ W`.
///
/// Finite `q` gives a bound pair from the noncommutative maximal bounds
/// (exact when the family commutes); `q = inf` is exact.
pub fn bmo_q_norm(phi: &MatrixField, q: f64, side: Side) -> Result<BmoReport> {
    if q.is_nan() || q <= 2.0 {
        return Err(Error::InvalidExponent(q));
    }
    if q.is_infinite() {
        return bmo_norm(phi, side, BmoMode::WindowFamily);
    }
    let phi = side.orient(phi);
    let fields: Vec<MatrixField> =
        window_levels(phi.grid()).into_iter().map(|(_, h)| window_sharp_field(&phi, h)).collect();
    let b = maximal::ncsup_bounds_fields(&fields, q / 2.0)?;
    let mut rep = BmoReport::bound(b.lower.sqrt(), b.upper.sqrt(), phi.grid().window(), BmoMode::WindowFamily);
    rep.exact = b.exact;
    Ok(rep)
}

/// Per-row, per-cell quadrature of `|∇φ|^2 y` over `W`, with prefix sums so
/// that Carleson boxes over grid-aligned intervals are O(rows) lookups.
pub struct CarlesonTable {
    grid: GridSpec,
    d: usize,
    rows: Vec<(f64, f64, f64)>,
    prefix: Vec<Vec<C64>>,
}

impl CarlesonTable {
    pub fn new(phi: &MatrixField, net: &ConeGrid) -> Self {
        let grid = phi.grid();
        let d = phi.dim();
        let dd = d * d;
        let n = phi.len();
        let w = grid.cell_width_f64();
        let engine = LatticeEngine::new(phi, 0);
        let mut rows = Vec::new();
        let mut prefix = Vec::new();
        for row in net.rows() {
            // lattice spacing w / m, never coarser than the cells
            let m = if row.hx >= w { 1 } else { 1usize << (w / row.hx).log2().ceil() as u32 };
            let mut acc = vec![C64::new(0.0, 0.0); n * dd];
            for r in 0..m {
                let shift = ((r as f64 + 0.5) / m as f64 - 0.5) * w;
                let lat = engine.eval(shift, row.y);
                for i in 0..n {
                    let (a, b) = lat.at(i as isize);
                    let blk = &mut acc[i * dd..(i + 1) * dd];
                    flat::adj_mul_acc(blk, d, 1.0, a, a);
                    flat::adj_mul_acc(blk, d, 1.0, b, b);
                }
            }
            let weight = row.y * row.dy * w / m as f64;
            let mut p = vec![C64::new(0.0, 0.0); (n + 1) * dd];
            for i in 0..n {
                for q in 0..dd {
                    p[(i + 1) * dd + q] = p[i * dd + q] + acc[i * dd + q] * weight;
                }
            }
            rows.push((row.y_lo, row.y_hi, row.y));
            prefix.push(p);
        }
        Self { grid, d, rows, prefix }
    }

    /// `(1/|I|) ∬_{T(I)} |∇φ|^2 y dx dy` for the cells `a..b`.
    fn box_cells(&self, a: usize, b: usize) -> MatrixValue {
        let dd = self.d * self.d;
        let top = (b - a) as f64 * self.grid.cell_width_f64();
        let mut out = vec![C64::new(0.0, 0.0); dd];
        for (k, &(lo, hi, y)) in self.rows.iter().enumerate() {
            if lo >= top {
                break;
            }
            // partial top row: rescale by the share of ∫ y dy it keeps
            let frac = if hi <= top { 1.0 } else { 0.5 * (top * top - lo * lo) / (y * (hi - lo)) };
            let p = &self.prefix[k];
            for q in 0..dd {
                out[q] += (p[b * dd + q] - p[a * dd + q]) * frac;
            }
        }
        flat::to_matrix(self.d, &out).scale(1.0 / top).hermitian_part()
    }

    pub fn functional(&self, iv: &RatInterval) -> Result<PsdMatrix> {
        let (a, b) = inside_cells(self.grid, iv)?;
        Ok(PsdMatrix::trusted(self.box_cells(a, b)))
    }
}

/// `(1/|I|) ∬_{T(I)} |∇φ|^2 y dx dy` by net quadrature above `y_min`.
pub fn carleson_functional(phi: &MatrixField, iv: &RatInterval, net: &ConeGrid) -> Result<PsdMatrix> {
    inside_cells(phi.grid(), iv)?;
    CarlesonTable::new(phi, net).functional(iv)
}

/// `N(λ_φ) = sup_I ‖(1/|I|) ∬_{T(I)} |∇φ|^2 y dx dy‖` over the mode's family.
pub fn carleson_sup(phi: &MatrixField, net: &ConeGrid, mode: BmoMode) -> Result<BmoReport> {
    let grid = phi.grid();
    let table = CarlesonTable::new(phi, net);
    let n = phi.len();
    let mut best = (0.0f64, (0, n));
    let mut consider = |a: usize, b: usize| {
        let v = matcore::max_eig_unchecked(&table.box_cells(a, b));
        if v > best.0 {
            best = (v, (a, b));
        }
    };
    match mode {
        BmoMode::AllGridIntervals => {
            if n > MAX_ENUM_CELLS {
                return Err(Error::Config(format!("{n} cells exceed the enumeration cap {MAX_ENUM_CELLS}")));
            }
            for a in 0..n {
                for b in a + 1..=n {
                    consider(a, b);
                }
            }
        }
        BmoMode::DyadicPair => {
            let (lo, hi) = dyadic::level_range(grid);
            for filtration in FiltrationId::both() {
                for lvl in lo..=hi {
                    for at in dyadic::atoms_meeting_window(grid, filtration, lvl)?.iter().filter(|a| a.inside) {
                        consider(at.start, at.end);
                    }
                }
            }
        }
        BmoMode::WindowFamily => {
            for (_, half) in window_levels(grid) {
                for i in 0..n {
                    if let Some((a, b)) = window_cells(grid, i, half) {
                        consider(a, b);
                    }
                }
            }
        }
    }
    let (v, (a, b)) = best;
    Ok(BmoReport::exact(v, cell_interval(grid, a, b), mode))
}

/// Ratio bound between the full BMO norm and the window-family value at
/// `q = inf`: some window of length `2^n < 4|I|` inside `W` contains `I`.
pub const WINDOW_FAMILY_FACTOR: f64 = 2.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: GridSpec, d: usize, seed: u64) -> MatrixField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MatrixField::from_fn(grid, d, |_| random::gaussian(d, &mut rng))
    }

    /// Scalar BMO by direct enumeration of `(1/n) Σ |v - mean|^2`.
    fn scalar_bmo(f: &MatrixField) -> f64 {
        let vals: Vec<C64> = (0..f.len()).map(|i| f.block(i)[0]).collect();
        let mut best = 0.0f64;
        for a in 0..vals.len() {
            for b in a + 1..=vals.len() {
                let s = &vals[a..b];
                let mean = s.iter().sum::<C64>() / s.len() as f64;
                let var = s.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / s.len() as f64;
                best = best.max(var);
            }
        }
        best.sqrt()
    }

    #[test]
    fn constant_fields_have_zero_norms() {
        let grid = GridSpec::new(1, 2).unwrap();
        let c = MatrixField::constant(grid, &MatrixValue::diag(&[2.0, -3.0]));
        for mode in [BmoMode::AllGridIntervals, BmoMode::DyadicPair, BmoMode::WindowFamily] {
            assert!(bmo_norm(&c, Side::Column, mode).unwrap().upper < 1e-7);
        }
        assert!(bmo_q_norm(&c, 6.0, Side::Column).unwrap().upper < 1e-7);
        // only the jumps at the window ends remain: |∇u| <= 2 * 5 / (π dist)
        let net = ConeGrid::for_grid(grid, 1).unwrap();
        let iv = RatInterval::from_ratios((-1, 2), (1, 2)).unwrap();
        let bound = (10.0 / (std::f64::consts::PI * 1.5)).powi(2) * 0.5;
        let v = carleson_functional(&c, &iv, &net).unwrap().max_eig();
        assert!(v <= bound, "{v} > {bound}");
    }

    #[test]
    fn sign_function_example() {
        let grid = GridSpec::new(1, 3).unwrap();
        let f = MatrixField::from_fn(grid, 1, |i| {
            let t = grid.cell_center(i);
            MatrixValue::diag(&[if t.abs() > 1.0 { 0.0 } else { t.signum() }])
        });
        let exact = bmo_norm(&f, Side::Column, BmoMode::AllGridIntervals).unwrap();
        assert!((exact.value() - scalar_bmo(&f)).abs() < 1e-12);
        let dy = bmo_norm(&f, Side::Column, BmoMode::DyadicPair).unwrap();
        assert!(dy.lower <= exact.value());
        assert!(exact.value() <= dy.upper + 1e-12);
    }

    #[test]
    fn row_norm_is_column_norm_of_adjoint() {
        let grid = GridSpec::new(1, 2).unwrap();
        let f = random_field(grid, 2, 3);
        let r = bmo_norm(&f, Side::Row, BmoMode::AllGridIntervals).unwrap();
        let c = bmo_norm(&f.adjoint(), Side::Column, BmoMode::AllGridIntervals).unwrap();
        assert_eq!(r.value(), c.value());
    }

    #[test]
    fn norm_ignores_constants_and_is_subadditive() {
        let grid = GridSpec::new(1, 2).unwrap();
        let f = random_field(grid, 2, 4);
        let g = random_field(grid, 2, 5);
        let base = bmo_norm(&f, Side::Column, BmoMode::AllGridIntervals).unwrap().value();
        let shifted = f.add_constant(&MatrixValue::diag(&[4.0, -1.0]));
        let v = bmo_norm(&shifted, Side::Column, BmoMode::AllGridIntervals).unwrap().value();
        assert!((v - base).abs() < 1e-10 * base);
        let sum = bmo_norm(&f.add(&g).unwrap(), Side::Column, BmoMode::AllGridIntervals).unwrap().value();
        let gv = bmo_norm(&g, Side::Column, BmoMode::AllGridIntervals).unwrap().value();
        assert!(sum <= base + gv + 1e-12);
    }

    #[test]
    fn window_family_brackets_full_norm() {
        let grid = GridSpec::new(1, 3).unwrap();
        for seed in 0..5 {
            let f = random_field(grid, 2, 10 + seed);
            let full = bmo_norm(&f, Side::Column, BmoMode::AllGridIntervals).unwrap().value();
            let q = bmo_q_norm(&f, f64::INFINITY, Side::Column).unwrap();
            assert!(q.lower <= full + 1e-12);
            assert!(full <= 4.0 * q.upper);
            assert!(full <= WINDOW_FAMILY_FACTOR * q.upper + 1e-12);
        }
        assert!(bmo_q_norm(&random_field(grid, 1, 1), 2.0, Side::Column).is_err());
    }

    #[test]
    fn scalar_bmo_q_matches_pointwise_max() {
        let grid = GridSpec::new(1, 2).unwrap();
        let f = random_field(grid, 1, 7);
        let q = 6.0;
        let rep = bmo_q_norm(&f, q, Side::Column).unwrap();
        assert!(rep.exact);
        let w = grid.cell_width_f64();
        let mut total = 0.0;
        for i in 0..f.len() {
            let t = i as i64 + 1;
            let mut best = 0.0f64;
            for (_, half) in window_levels(grid) {
                if t - half >= 0 && t + half <= f.len() as i64 {
                    let s: Vec<C64> = (t - half..t + half).map(|c| f.block(c as usize)[0]).collect();
                    let mean = s.iter().sum::<C64>() / s.len() as f64;
                    best = best.max(s.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / s.len() as f64);
                }
            }
            total += w * best.powf(q / 2.0);
        }
        let direct = total.powf(1.0 / q);
        assert!((rep.value() - direct).abs() < 1e-10 * direct, "{} vs {direct}", rep.value());
    }

    #[test]
    fn carleson_scaling_and_oracle() {
        let grid = GridSpec::new(1, 3).unwrap();
        let net = ConeGrid::for_grid(grid, 1).unwrap();
        let f = random_field(grid, 2, 8);
        let a = carleson_sup(&f, &net, BmoMode::DyadicPair).unwrap();
        let b = carleson_sup(&f.scale(3.0), &net, BmoMode::DyadicPair).unwrap();
        assert!((b.value() - 9.0 * a.value()).abs() < 1e-9 * b.value());

        // single jump at 0, I = (-1/2, 1/2]: dense midpoint sum of the closed-form gradient
        let one = MatrixValue::identity(1);
        let step = MatrixField::indicator(grid, &RatInterval::from_ratios((0, 1), (2, 1)).unwrap(), &one).unwrap();
        let iv = RatInterval::from_ratios((-1, 2), (1, 2)).unwrap();
        let v = carleson_functional(&step, &iv, &net).unwrap().max_eig();
        let (nx, ny) = (800, 1600);
        let mut dense = 0.0;
        for iy in 0..ny {
            // geometric heights from 1e-6 to |I| = 1
            let y0 = 1e-6 * (1e6f64).powf(iy as f64 / ny as f64);
            let y1 = 1e-6 * (1e6f64).powf((iy + 1) as f64 / ny as f64);
            let y = 0.5 * (y0 + y1);
            for ix in 0..nx {
                let x = -0.5 + (ix as f64 + 0.5) / nx as f64;
                let g = crate::halfplane::gradient(&step, x, y).unwrap();
                dense += g.norm_sq().get(0, 0).re * y * (y1 - y0) / nx as f64;
            }
        }
        assert!((v - dense).abs() <= 0.03 * dense, "{v} vs {dense}");
    }
}
