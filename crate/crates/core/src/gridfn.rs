//! Matrix-valued step functions on the exact grid `p / (3 * 2^K)` inside the
//! window `W = (-2^J, 2^J]`.

use std::fmt;
use std::io::{BufRead, Write};

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flat;
use crate::matcore::{self, MatrixValue, PsdMatrix, C64};

pub type Rat = Ratio<i64>;

/// Largest `K + J + 1` accepted; keeps unit arithmetic far from overflow.
const MAX_EXPONENT: i32 = 40;

/// The discretization: window exponent `J` and resolution exponent `K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct GridSpec {
    j: i32,
    k: i32,
}

impl GridSpec {
    pub fn new(j: i32, k: i32) -> Result<Self> {
        if j < 0 || k < 0 || j + k + 1 > MAX_EXPONENT {
            return Err(Error::Config(format!("grid exponents out of range: J={j}, K={k}")));
        }
        Ok(Self { j, k })
    }

    pub fn j(&self) -> i32 {
        self.j
    }

    pub fn k(&self) -> i32 {
        self.k
    }

    pub fn cell_count(&self) -> usize {
        3usize << (self.k + self.j + 1)
    }

    /// Grid points per unit length, `3 * 2^K`.
    pub fn units_per_one(&self) -> i64 {
        3i64 << self.k
    }

    /// Left end of `W` in grid units (negative).
    pub fn origin_units(&self) -> i64 {
        -(3i64 << (self.k + self.j))
    }

    pub fn cell_width(&self) -> Rat {
        Rat::new(1, self.units_per_one())
    }

    pub fn cell_width_f64(&self) -> f64 {
        1.0 / self.units_per_one() as f64
    }

    pub fn window(&self) -> RatInterval {
        let h = Rat::from_integer(1i64 << self.j);
        RatInterval { lo: -h, hi: h }
    }

    pub fn half_width(&self) -> f64 {
        (1i64 << self.j) as f64
    }

    pub fn unit_to_f64(&self, u: i64) -> f64 {
        u as f64 / self.units_per_one() as f64
    }

    /// `(a, b]` of cell `i` as floats.
    pub fn cell_bounds(&self, i: usize) -> (f64, f64) {
        let u = self.origin_units() + i as i64;
        (self.unit_to_f64(u), self.unit_to_f64(u + 1))
    }

    pub fn cell_interval(&self, i: usize) -> RatInterval {
        let u = self.origin_units() + i as i64;
        let den = self.units_per_one();
        RatInterval { lo: Rat::new(u, den), hi: Rat::new(u + 1, den) }
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        let (a, b) = self.cell_bounds(i);
        0.5 * (a + b)
    }

    /// Cell right endpoints are the grid points `t` with `f(t)` sampled from
    /// the cell `(t - w, t]`.
    pub fn cell_right(&self, i: usize) -> f64 {
        self.cell_bounds(i).1
    }

    /// Exact position of `x` in grid units.
    pub fn to_units(&self, x: Rat) -> Result<i64> {
        let scaled = x * Rat::from_integer(self.units_per_one());
        if scaled.is_integer() {
            Ok(scaled.to_integer())
        } else {
            Err(Error::OffGrid(x.to_string()))
        }
    }

    /// The cell `(a, b]` with `a < t <= b`, or `None` outside `W`.
    pub fn cell_of(&self, t: f64) -> Option<usize> {
        let pos = (t - self.unit_to_f64(self.origin_units())) * self.units_per_one() as f64;
        let idx = pos.ceil() - 1.0;
        if idx < 0.0 || idx >= self.cell_count() as f64 {
            None
        } else {
            Some(idx as usize)
        }
    }

    /// Grid-unit endpoints of a grid-aligned interval.
    pub fn interval_units(&self, iv: &RatInterval) -> Result<(i64, i64)> {
        Ok((self.to_units(iv.lo)?, self.to_units(iv.hi)?))
    }

    /// Range of cell indices covered by `(lo, hi]` (grid units), clipped to `W`.
    pub fn clip_units(&self, lo: i64, hi: i64) -> (usize, usize) {
        let o = self.origin_units();
        let n = self.cell_count() as i64;
        let a = (lo - o).clamp(0, n);
        let b = (hi - o).clamp(0, n);
        (a as usize, b.max(a) as usize)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "J={} K={}", self.j, self.k)
    }
}

/// Half-open interval `(lo, hi]` with exact rational endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RatInterval {
    pub lo: Rat,
    pub hi: Rat,
}

impl RatInterval {
    pub fn new(lo: Rat, hi: Rat) -> Result<Self> {
        if lo >= hi {
            return Err(Error::NonPositiveWindow(lo.to_string(), hi.to_string()));
        }
        Ok(Self { lo, hi })
    }

    pub fn from_ratios(lo: (i64, i64), hi: (i64, i64)) -> Result<Self> {
        Self::new(Rat::new(lo.0, lo.1), Rat::new(hi.0, hi.1))
    }

    pub fn len(&self) -> Rat {
        self.hi - self.lo
    }

    pub fn len_f64(&self) -> f64 {
        self.len().to_f64().unwrap_or(f64::NAN)
    }

    pub fn lo_f64(&self) -> f64 {
        self.lo.to_f64().unwrap_or(f64::NAN)
    }

    pub fn hi_f64(&self) -> f64 {
        self.hi.to_f64().unwrap_or(f64::NAN)
    }

    pub fn center_f64(&self) -> f64 {
        0.5 * (self.lo_f64() + self.hi_f64())
    }

    pub fn contains(&self, t: Rat) -> bool {
        self.lo < t && t <= self.hi
    }

    pub fn contains_interval(&self, other: &RatInterval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersects(&self, other: &RatInterval) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }
}

impl fmt::Display for RatInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}]", self.lo, self.hi)
    }
}

/// Matrix-valued step function, constant on grid cells and zero outside `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixField {
    grid: GridSpec,
    d: usize,
    data: Vec<C64>,
}

impl MatrixField {
    pub fn zeros(grid: GridSpec, d: usize) -> Self {
        Self { grid, d, data: vec![C64::new(0.0, 0.0); grid.cell_count() * d * d] }
    }

    pub fn constant(grid: GridSpec, m: &MatrixValue) -> Self {
        Self::from_fn(grid, m.dim(), |_| m.clone())
    }

    pub fn from_fn(grid: GridSpec, d: usize, mut f: impl FnMut(usize) -> MatrixValue) -> Self {
        let mut out = Self::zeros(grid, d);
        for i in 0..grid.cell_count() {
            let m = f(i);
            assert_eq!(m.dim(), d, "cell value dimension");
            out.block_mut(i).copy_from_slice(&m.row_major());
        }
        out
    }

    pub fn from_cells(grid: GridSpec, cells: &[MatrixValue]) -> Result<Self> {
        if cells.len() != grid.cell_count() {
            return Err(Error::LengthMismatch { expected: grid.cell_count(), got: cells.len() });
        }
        let d = cells.first().map(|m| m.dim()).unwrap_or(1);
        for m in cells {
            if m.dim() != d {
                return Err(Error::DimMismatch { expected: d, got: m.dim() });
            }
        }
        Ok(Self::from_fn(grid, d, |i| cells[i].clone()))
    }

    /// Raw row-major blocks, one `d*d` block per cell.
    pub fn from_data(grid: GridSpec, d: usize, data: Vec<C64>) -> Result<Self> {
        let expected = grid.cell_count() * d * d;
        if data.len() != expected {
            return Err(Error::LengthMismatch { expected, got: data.len() });
        }
        Ok(Self { grid, d, data })
    }

    /// `m` on the cells of a grid-aligned interval, zero elsewhere.
    pub fn indicator(grid: GridSpec, iv: &RatInterval, m: &MatrixValue) -> Result<Self> {
        let (lo, hi) = grid.interval_units(iv)?;
        let (a, b) = grid.clip_units(lo, hi);
        let block = m.row_major();
        let mut out = Self::zeros(grid, m.dim());
        for i in a..b {
            out.block_mut(i).copy_from_slice(&block);
        }
        Ok(out)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.grid.cell_count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn block(&self, i: usize) -> &[C64] {
        let s = self.d * self.d;
        &self.data[i * s..(i + 1) * s]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [C64] {
        let s = self.d * self.d;
        &mut self.data[i * s..(i + 1) * s]
    }

    pub fn cell(&self, i: usize) -> MatrixValue {
        flat::to_matrix(self.d, self.block(i))
    }

    pub fn set_cell(&mut self, i: usize, m: &MatrixValue) {
        self.block_mut(i).copy_from_slice(&m.row_major());
    }

    /// Value at a point under the half-open convention; zero outside `W`.
    pub fn value_at(&self, t: f64) -> MatrixValue {
        match self.grid.cell_of(t) {
            Some(i) => self.cell(i),
            None => MatrixValue::zeros(self.d),
        }
    }

    fn check_compatible(&self, other: &MatrixField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.d != other.d {
            return Err(Error::DimMismatch { expected: self.d, got: other.d });
        }
        Ok(())
    }

    /// Pointwise adjoint `f*`.
    pub fn adjoint(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.len() {
            let a = flat::adjoint(self.d, self.block(i));
            out.block_mut(i).copy_from_slice(&a);
        }
        out
    }

    pub fn add(&self, other: &MatrixField) -> Result<Self> {
        self.check_compatible(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { grid: self.grid, d: self.d, data })
    }

    pub fn sub(&self, other: &MatrixField) -> Result<Self> {
        self.check_compatible(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid, d: self.d, data })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { grid: self.grid, d: self.d, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_c(&self, s: C64) -> Self {
        Self { grid: self.grid, d: self.d, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add_constant(&self, m: &MatrixValue) -> Self {
        let block = m.row_major();
        let mut out = self.clone();
        for i in 0..self.len() {
            for (o, b) in out.block_mut(i).iter_mut().zip(&block) {
                *o += b;
            }
        }
        out
    }

    /// Pointwise `f(t) u`.
    pub fn right_mul(&self, u: &MatrixValue) -> Self {
        Self::from_fn(self.grid, self.d, |i| &self.cell(i) * u)
    }

    /// Pointwise `u f(t)`.
    pub fn left_mul(&self, u: &MatrixValue) -> Self {
        Self::from_fn(self.grid, self.d, |i| u * &self.cell(i))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Sum of cell values over the cell index range `a..b`.
    pub fn cell_sum(&self, a: usize, b: usize) -> Vec<C64> {
        let mut acc = flat::zeros(self.d);
        for i in a..b {
            flat::axpy(&mut acc, 1.0, self.block(i));
        }
        acc
    }

    /// `∫_W f`.
    pub fn integral(&self) -> MatrixValue {
        let s = self.cell_sum(0, self.len());
        flat::to_matrix(self.d, &s).scale(self.grid.cell_width_f64())
    }

    /// `tr ∫ |f|^2`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_width_f64()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// True when every entry of the cell sum is exactly zero.
    pub fn is_mean_zero(&self) -> bool {
        self.cell_sum(0, self.len()).iter().all(|z| z.is_zero())
    }

    /// `f - f_W` (floating-point centering, not exact).
    pub fn centered(&self) -> Self {
        let w = self.grid.window();
        let m = mean_over(self, &w).expect("window is grid aligned");
        self.add_constant(&-&m)
    }

    /// Serialize in the line-oriented `NCFA1` format.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "NCFA1 d={} J={} K={}", self.d, self.grid.j, self.grid.k)?;
        for i in 0..self.len() {
            write!(w, "{i}")?;
            for z in self.block(i) {
                write!(w, " {:.16e} {:.16e}", z.re, z.im)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parse the `NCFA1` format; cells not listed stay zero.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut field: Option<MatrixField> = None;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: lineno, msg };
            match field.as_mut() {
                None => {
                    let mut parts = content.split_whitespace();
                    if parts.next() != Some("NCFA1") {
                        return Err(parse_err("missing NCFA1 header".into()));
                    }
                    let (mut d, mut j, mut k) = (None, None, None);
                    for p in parts {
                        let (key, val) =
                            p.split_once('=').ok_or_else(|| parse_err(format!("bad header token `{p}`")))?;
                        let v: i64 = val.parse().map_err(|_| parse_err(format!("bad value `{val}`")))?;
                        match key {
                            "d" => d = Some(v),
                            "J" => j = Some(v),
                            "K" => k = Some(v),
                            _ => return Err(parse_err(format!("unknown header key `{key}`"))),
                        }
                    }
                    let (d, j, k) = match (d, j, k) {
                        (Some(d), Some(j), Some(k)) if d >= 1 => (d as usize, j as i32, k as i32),
                        _ => return Err(parse_err("header needs d>=1, J and K".into())),
                    };
                    let grid = GridSpec::new(j, k).map_err(|e| parse_err(e.to_string()))?;
                    field = Some(MatrixField::zeros(grid, d));
                }
                Some(f) => {
                    let mut parts = content.split_whitespace();
                    let idx: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err("bad cell index".into()))?;
                    if idx >= f.len() {
                        return Err(parse_err(format!("cell index {idx} out of range")));
                    }
                    let nums: Vec<f64> = parts
                        .map(|s| s.parse::<f64>().map_err(|_| parse_err(format!("bad number `{s}`"))))
                        .collect::<Result<_>>()?;
                    let dd = f.d * f.d;
                    if nums.len() != 2 * dd {
                        return Err(parse_err(format!("expected {} numbers, got {}", 2 * dd, nums.len())));
                    }
                    let block = f.block_mut(idx);
                    for q in 0..dd {
                        block[q] = C64::new(nums[2 * q], nums[2 * q + 1]);
                    }
                }
            }
        }
        field.ok_or(Error::Parse { line: 0, msg: "empty input".into() })
    }

    pub fn from_text(s: &str) -> Result<Self> {
        Self::read_from(s.as_bytes())
    }
}

/// Running sums of cell values, for O(1) integrals over intervals.
#[derive(Clone, Debug)]
pub struct Prefix {
    grid: GridSpec,
    d: usize,
    sums: Vec<C64>,
}

impl Prefix {
    pub fn new(f: &MatrixField) -> Self {
        let dd = f.d * f.d;
        let mut sums = vec![C64::new(0.0, 0.0); (f.len() + 1) * dd];
        for i in 0..f.len() {
            for q in 0..dd {
                sums[(i + 1) * dd + q] = sums[i * dd + q] + f.data[i * dd + q];
            }
        }
        Self { grid: f.grid, d: f.d, sums }
    }

    fn at(&self, i: usize) -> &[C64] {
        let dd = self.d * self.d;
        &self.sums[i * dd..(i + 1) * dd]
    }

    /// Sum of cell values over `a..b`.
    pub fn cell_sum(&self, a: usize, b: usize) -> Vec<C64> {
        self.at(b).iter().zip(self.at(a)).map(|(x, y)| x - y).collect()
    }

    /// `∫_a^b f` for real `a <= b`, with fractional end cells.
    pub fn integral(&self, a: f64, b: f64) -> Vec<C64> {
        let n = self.grid.cell_count();
        let upo = self.grid.units_per_one() as f64;
        let o = self.grid.origin_units() as f64;
        // positions in cell units from the left end of W, clipped to W
        let pa = ((a * upo) - o).clamp(0.0, n as f64);
        let pb = ((b * upo) - o).clamp(0.0, n as f64);
        let mut out = vec![C64::new(0.0, 0.0); self.d * self.d];
        if pb <= pa {
            return out;
        }
        let ia = pa.floor() as usize;
        let ib = pb.floor() as usize;
        let w = self.grid.cell_width_f64();
        if ia == ib {
            let cell = self.cell_sum(ia, ia + 1);
            flat::axpy(&mut out, (pb - pa) * w, &cell);
            return out;
        }
        // whole cells ia+1..ib, plus the partial cells at both ends
        flat::axpy(&mut out, w, &self.cell_sum(ia + 1, ib));
        flat::axpy(&mut out, (ia as f64 + 1.0 - pa) * w, &self.cell_sum(ia, ia + 1));
        if ib < n {
            flat::axpy(&mut out, (pb - ib as f64) * w, &self.cell_sum(ib, ib + 1));
        }
        out
    }
}

/// A field whose cell values are positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdField(MatrixField);

impl PsdField {
    pub fn new(f: MatrixField) -> Result<Self> {
        for i in 0..f.len() {
            PsdMatrix::new(f.cell(i))?;
        }
        Ok(Self(f))
    }

    pub(crate) fn trusted(f: MatrixField) -> Self {
        Self(f)
    }

    pub fn field(&self) -> &MatrixField {
        &self.0
    }

    pub fn into_field(self) -> MatrixField {
        self.0
    }

    pub fn value(&self, i: usize) -> PsdMatrix {
        PsdMatrix::trusted(self.0.cell(i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn grid(&self) -> GridSpec {
        self.0.grid
    }

    pub fn dim(&self) -> usize {
        self.0.d
    }
}

/// Column prefix sums of `φ` and `φ*φ` (cell units).
pub(crate) struct MomentPrefix {
    d: usize,
    s: Vec<C64>,
    sq: Vec<C64>,
}

impl MomentPrefix {
    pub(crate) fn new(phi: &MatrixField) -> Self {
        let d = phi.dim();
        let dd = d * d;
        let n = phi.len();
        let mut s = vec![C64::new(0.0, 0.0); (n + 1) * dd];
        let mut sq = vec![C64::new(0.0, 0.0); (n + 1) * dd];
        for i in 0..n {
            let (lo, hi) = s.split_at_mut((i + 1) * dd);
            hi[..dd].copy_from_slice(&lo[i * dd..]);
            flat::axpy(&mut hi[..dd], 1.0, phi.block(i));
            let (lo, hi) = sq.split_at_mut((i + 1) * dd);
            hi[..dd].copy_from_slice(&lo[i * dd..]);
            flat::adj_mul_acc(&mut hi[..dd], d, 1.0, phi.block(i), phi.block(i));
        }
        Self { d, s, sq }
    }

    /// `(1/|I|) ∫_I |φ - φ_I|^2` for the cells `a..b`.
    pub(crate) fn sharp(&self, a: usize, b: usize, buf: &mut Vec<C64>) -> MatrixValue {
        let d = self.d;
        let dd = d * d;
        let n = (b - a) as f64;
        let mut sum = vec![C64::new(0.0, 0.0); dd];
        buf.clear();
        for q in 0..dd {
            sum[q] = self.s[b * dd + q] - self.s[a * dd + q];
            buf.push((self.sq[b * dd + q] - self.sq[a * dd + q]) / n);
        }
        flat::adj_mul_acc(buf, d, -1.0 / (n * n), &sum, &sum);
        flat::to_matrix(d, buf)
    }
}

/// Cell range and length (in grid units) of a grid-aligned interval meeting `W`.
fn interval_cells(grid: GridSpec, iv: &RatInterval) -> Result<(usize, usize, i64)> {
    let (lo, hi) = grid.interval_units(iv)?;
    let (a, b) = grid.clip_units(lo, hi);
    if a == b {
        return Err(Error::EmptyIntersection);
    }
    Ok((a, b, hi - lo))
}

/// `(1/|I|) ∫_I f`, zero-extended outside `W`.
pub fn mean_over(f: &MatrixField, iv: &RatInterval) -> Result<MatrixValue> {
    let (a, b, n) = interval_cells(f.grid, iv)?;
    let s = f.cell_sum(a, b);
    Ok(flat::to_matrix(f.d, &s).scale(1.0 / n as f64))
}

/// `∫_I |f - f_I|^2 = ∫_I f*f - |I| f_I* f_I`.
pub fn centered_second_moment(f: &MatrixField, iv: &RatInterval) -> Result<PsdMatrix> {
    let (a, b, n) = interval_cells(f.grid, iv)?;
    let d = f.d;
    let w = f.grid.cell_width_f64();
    let mut sq = flat::zeros(d);
    let mut s = flat::zeros(d);
    for i in a..b {
        flat::adj_mul_acc(&mut sq, d, 1.0, f.block(i), f.block(i));
        flat::axpy(&mut s, 1.0, f.block(i));
    }
    // ∫ f*f - (1/|I|) (∫f)*(∫f), in units of cell width
    flat::adj_mul_acc(&mut sq, d, -1.0 / n as f64, &s, &s);
    let m = flat::to_matrix(d, &sq).scale(w);
    let scale = m.frobenius().max(w * f.max_abs().powi(2) * n as f64);
    let min = matcore::min_eig_unchecked(&m);
    if min < -matcore::TOL_PSD * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd(min));
    }
    Ok(PsdMatrix::trusted(m))
}

/// `(tr ∫ g^p)^{1/p}`; `p = inf` gives the largest cell operator norm.
pub fn lp_mixed_norm(g: &PsdField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    let f = g.field();
    if p.is_infinite() {
        return Ok((0..f.len()).map(|i| g.value(i).max_eig()).fold(0.0, f64::max));
    }
    let w = f.grid.cell_width_f64();
    let total: f64 = (0..f.len()).map(|i| matcore::psd_trace_power(&f.cell(i), p)).sum();
    Ok((total * w).powf(1.0 / p))
}

/// `‖(∫ |f|^2 / (1+t^2) dt)^{1/2}‖_{L^q}` with the weight integrated exactly.
pub fn weighted_column_norm(f: &MatrixField, q: f64) -> Result<f64> {
    let m = weighted_column_square(f);
    let root = matcore::psd_power(&m, 0.5)?;
    matcore::schatten_norm(root.as_matrix(), q)
}

/// `∫ |f|^2 / (1+t^2) dt`.
pub fn weighted_column_square(f: &MatrixField) -> PsdMatrix {
    let d = f.d;
    let mut acc = flat::zeros(d);
    for i in 0..f.len() {
        let (a, b) = f.grid.cell_bounds(i);
        let weight = b.atan() - a.atan();
        flat::adj_mul_acc(&mut acc, d, weight, f.block(i), f.block(i));
    }
    PsdMatrix::trusted(flat::to_matrix(d, &acc))
}

/// `∫ φ* f dt`.
pub fn pairing(phi: &MatrixField, f: &MatrixField) -> Result<MatrixValue> {
    phi.check_compatible(f)?;
    let d = f.d;
    let mut acc = flat::zeros(d);
    for i in 0..f.len() {
        flat::adj_mul_acc(&mut acc, d, 1.0, phi.block(i), f.block(i));
    }
    Ok(flat::to_matrix(d, &acc).scale(f.grid.cell_width_f64()))
}

/// `tr ∫ φ* f dt`.
pub fn scalar_pairing(phi: &MatrixField, f: &MatrixField) -> Result<C64> {
    phi.check_compatible(f)?;
    let s: C64 = phi.data.iter().zip(&f.data).map(|(a, b)| a.conj() * b).sum();
    Ok(s * f.grid.cell_width_f64())
}

/// Column square `∫ |f|^2 dt` over `W`.
pub fn column_square(f: &MatrixField) -> PsdMatrix {
    let d = f.d;
    let mut acc = flat::zeros(d);
    for i in 0..f.len() {
        flat::adj_mul_acc(&mut acc, d, 1.0, f.block(i), f.block(i));
    }
    PsdMatrix::trusted(flat::to_matrix(d, &acc).scale(f.grid.cell_width_f64()))
}
