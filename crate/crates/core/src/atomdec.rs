//! Column atoms: certificates, a constructive dyadic decomposition and the
//! `H^1_c` norm of atoms.
//!
//! An atom supported on `I` has `∫_I a = 0` and `τ(∫_I |a|^2)^{1/2} <= |I|^{-1/2}`.
//! The decomposition splits a mean-zero field into martingale differences of
//! `D`, one atom per parent atom, plus a top term carried by the smallest `D'`
//! atom containing `W` and a remainder per finest `D` atom. It runs in exact
//! rational arithmetic, so the pieces sum back to the input exactly.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::dyadic::{self, AtomCells, FiltrationId};
use crate::error::{Error, Result};
use crate::flat;
use crate::gridfn::{GridSpec, MatrixField, RatInterval};
use crate::matcore::{self, C64};
use crate::net::ConeGrid;
use crate::squarefn::{self, Side};

/// Relative slack allowed on the size condition.
pub const SIZE_TOL: f64 = 1e-12;

/// Outcome of the three atom conditions for a field and an interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomCertificate {
    #[serde(serialize_with = "ser_interval")]
    pub support: RatInterval,
    /// Zero outside the support (checked exactly).
    pub supported: bool,
    /// Frobenius norm of `∫_I a`, from an exact sum.
    pub mean_norm: f64,
    /// `τ(∫_I |a|^2)^{1/2} |I|^{1/2}`; at most one for an atom.
    pub size_value: f64,
    pub valid: bool,
}

fn ser_interval<S: serde::Serializer>(iv: &RatInterval, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&iv.to_string())
}

impl AtomCertificate {
    fn new(support: RatInterval, supported: bool, mean_norm: f64, size_value: f64, tol: f64) -> Self {
        let valid = supported && mean_norm <= tol && size_value <= 1.0 + tol.max(SIZE_TOL);
        Self { support, supported, mean_norm, size_value, valid }
    }
}

/// Exact rational copy of a field: per cell, `re` and `im` of each entry.
#[derive(Clone, Debug, PartialEq)]
struct ExactField {
    channels: usize,
    data: Vec<BigRational>,
}

impl ExactField {
    fn zeros(cells: usize, d: usize) -> Self {
        let channels = 2 * d * d;
        Self { channels, data: vec![BigRational::zero(); cells * channels] }
    }

    fn from_field(f: &MatrixField) -> Result<Self> {
        let mut data = Vec::with_capacity(f.data().len() * 2);
        for z in f.data() {
            for v in [z.re, z.im] {
                data.push(BigRational::from_float(v).ok_or_else(|| Error::InvalidParameter(format!("non-finite value {v}")))?);
            }
        }
        Ok(Self { channels: 2 * f.dim() * f.dim(), data })
    }

    fn cell(&self, i: usize) -> &[BigRational] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    fn sum(&self, start: usize, end: usize) -> Vec<BigRational> {
        let mut s = vec![BigRational::zero(); self.channels];
        for i in start..end {
            for (a, b) in s.iter_mut().zip(self.cell(i)) {
                *a += b;
            }
        }
        s
    }
}

fn to_c64(v: &[BigRational]) -> Vec<C64> {
    v.chunks(2).map(|p| C64::new(p[0].to_f64().unwrap_or(f64::NAN), p[1].to_f64().unwrap_or(f64::NAN))).collect()
}

/// Cell range of a grid-aligned interval, clipped to `W`, and whether the
/// field vanishes on every cell outside it.
fn support_cells(a: &MatrixField, iv: &RatInterval) -> Result<(usize, usize, bool)> {
    let (lo, hi) = a.grid().interval_units(iv)?;
    let (s, e) = a.grid().clip_units(lo, hi);
    let zero_outside = (0..a.len()).filter(|&i| i < s || i >= e).all(|i| a.block(i).iter().all(|z| z.re == 0.0 && z.im == 0.0));
    Ok((s, e, zero_outside))
}

/// `τ(∫_I |a|^2)^{1/2} |I|^{1/2}` over the cells `start..end`.
fn size_value(a: &MatrixField, start: usize, end: usize, len: f64) -> f64 {
    let d = a.dim();
    let mut m = flat::zeros(d);
    for i in start..end {
        flat::adj_mul_acc(&mut m, d, 1.0, a.block(i), a.block(i));
    }
    let m = flat::to_matrix(d, &m).scale(a.grid().cell_width_f64()).hermitian_part();
    matcore::psd_trace_power(&m, 0.5) * len.sqrt()
}

/// Checks the atom conditions of `a` on the grid-aligned interval `iv`. The
/// support and mean conditions are exact; `tol` applies to the mean norm and,
/// relatively, to the size.
pub fn validate_atom(a: &MatrixField, iv: &RatInterval, tol: f64) -> Result<AtomCertificate> {
    let (s, e, supported) = support_cells(a, iv)?;
    let exact = ExactField::from_field(a)?;
    let mean: Vec<C64> = to_c64(&exact.sum(s, e));
    let w = a.grid().cell_width_f64();
    let mean_norm = mean.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * w;
    let size = size_value(a, s, e, iv.len_f64());
    Ok(AtomCertificate::new(*iv, supported, mean_norm, size, tol))
}

/// One term `λ a` of a decomposition.
#[derive(Clone, Debug)]
pub struct AtomTerm {
    pub lambda: f64,
    /// The normalized atom `piece / λ`, rounded to `f64`.
    pub atom: MatrixField,
    pub cert: AtomCertificate,
    /// Level of the parent atom (`None` for the top term).
    pub level: Option<i32>,
    piece: ExactPiece,
}

#[derive(Clone, Debug)]
struct ExactPiece {
    start: usize,
    values: ExactField,
}

impl AtomTerm {
    /// `λ a` as an `f64` field.
    pub fn scaled(&self) -> MatrixField {
        self.atom.scale(self.lambda)
    }
}

/// Terms of a decomposition of `f` with `Σ λ_i a_i = f`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub grid: GridSpec,
    pub dim: usize,
    pub terms: Vec<AtomTerm>,
}

impl Decomposition {
    pub fn lambda_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.lambda.abs()).sum()
    }

    pub fn all_valid(&self) -> bool {
        self.terms.iter().all(|t| t.cert.valid)
    }

    /// True when the exact pieces add up to `f` exactly.
    pub fn reconstructs(&self, f: &MatrixField) -> Result<bool> {
        if f.grid() != self.grid || f.dim() != self.dim {
            return Err(Error::GridMismatch);
        }
        let target = ExactField::from_field(f)?;
        let mut acc = ExactField::zeros(f.len(), self.dim);
        let ch = acc.channels;
        for t in &self.terms {
            let p = &t.piece;
            for (q, v) in p.values.data.iter().enumerate() {
                acc.data[p.start * ch + q] += v;
            }
        }
        Ok(acc == target)
    }

    /// `Σ λ_i a_i` in floating point.
    pub fn reconstruct(&self) -> MatrixField {
        let mut out = MatrixField::zeros(self.grid, self.dim);
        for t in &self.terms {
            out = out.add(&t.scaled()).expect("terms share the grid");
        }
        out
    }
}

/// Smallest `D'` atom containing `W`.
pub fn top_support(grid: GridSpec) -> Result<RatInterval> {
    let win = grid.window();
    for n in (-dyadic::MAX_LEVEL..-grid.j()).rev() {
        let atom = dyadic::atom_at(FiltrationId::DPrime, n, win.hi)?;
        if atom.interval.contains_interval(&win) {
            return Ok(atom.interval);
        }
    }
    Err(Error::OutsideWindow(win.to_string()))
}

/// Dyadic atomic decomposition of a field with `∫_W f = 0` exactly.
pub fn decompose(f: &MatrixField) -> Result<Decomposition> {
    let grid = f.grid();
    let d = f.dim();
    let exact = ExactField::from_field(f)?;
    let total = exact.sum(0, f.len());
    if total.iter().any(|v| !v.is_zero()) {
        let norm = to_c64(&total).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        return Err(Error::NonzeroMean(norm * grid.cell_width_f64()));
    }
    let (n_lo, n_hi) = dyadic::level_range(grid);
    let levels: Vec<Vec<AtomCells>> =
        (n_lo..=n_hi).map(|n| dyadic::atoms_meeting_window(grid, FiltrationId::D, n)).collect::<Result<_>>()?;
    let means: Vec<Vec<Vec<BigRational>>> = levels
        .iter()
        .map(|atoms| {
            atoms
                .iter()
                .map(|a| {
                    let count = BigRational::from_integer(BigInt::from(a.end - a.start));
                    exact.sum(a.start, a.end).into_iter().map(|v| v / &count).collect()
                })
                .collect()
        })
        .collect();

    let mut terms = Vec::new();
    let ch = exact.channels;
    let mut push = |start: usize, end: usize, values: ExactField, support: RatInterval, level: Option<i32>| -> Result<()> {
        if values.data.iter().all(|v| v.is_zero()) {
            return Ok(());
        }
        terms.push(make_term(grid, d, start, end, values, support, level)?);
        Ok(())
    };

    // top term: E_{-J} f, mean zero over W
    let top = top_support(grid)?;
    let mut values = ExactField::zeros(f.len(), d);
    for (a, m) in levels[0].iter().zip(&means[0]) {
        for i in a.start..a.end {
            values.data[i * ch..(i + 1) * ch].clone_from_slice(m);
        }
    }
    push(0, f.len(), values, top, None)?;

    // d_n restricted to each parent atom
    for li in 1..levels.len() {
        let mut child = 0;
        for (parent, pm) in levels[li - 1].iter().zip(&means[li - 1]) {
            let mut values = ExactField::zeros(parent.end - parent.start, d);
            while child < levels[li].len() && levels[li][child].end <= parent.end {
                let c = &levels[li][child];
                for i in c.start..c.end {
                    let o = (i - parent.start) * ch;
                    for q in 0..ch {
                        values.data[o + q] = &means[li][child][q] - &pm[q];
                    }
                }
                child += 1;
            }
            push(parent.start, parent.end, values, parent.atom.interval, Some(n_lo + li as i32 - 1))?;
        }
    }

    // f - E_K f on each finest atom
    let last = levels.len() - 1;
    for (a, m) in levels[last].iter().zip(&means[last]) {
        let mut values = ExactField::zeros(a.end - a.start, d);
        for i in a.start..a.end {
            let o = (i - a.start) * ch;
            for q in 0..ch {
                values.data[o + q] = &exact.cell(i)[q] - &m[q];
            }
        }
        push(a.start, a.end, values, a.atom.interval, Some(n_hi))?;
    }
    Ok(Decomposition { grid, dim: d, terms })
}

fn make_term(
    grid: GridSpec,
    d: usize,
    start: usize,
    end: usize,
    values: ExactField,
    support: RatInterval,
    level: Option<i32>,
) -> Result<AtomTerm> {
    let mut piece = MatrixField::zeros(grid, d);
    let mut sum = vec![BigRational::zero(); values.channels];
    for k in 0..end - start {
        let cell = values.cell(k);
        piece.block_mut(start + k).copy_from_slice(&to_c64(cell));
        for (a, b) in sum.iter_mut().zip(cell) {
            *a += b;
        }
    }
    let lambda = size_value(&piece, start, end, support.len_f64());
    let atom = piece.scale(1.0 / lambda);
    // mean from the exact piece; support and size from the emitted atom
    let mean_norm = to_c64(&sum).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * grid.cell_width_f64() / lambda;
    let (s, e, supported) = support_cells(&atom, &support)?;
    let size = size_value(&atom, s, e, support.len_f64());
    let cert = AtomCertificate::new(support, supported, mean_norm, size, 0.0);
    Ok(AtomTerm { lambda, atom, cert, level, piece: ExactPiece { start, values } })
}

/// `‖a‖_{H^1_c}` at the default net of the grid.
pub fn atom_hardy_norm(a: &MatrixField) -> Result<f64> {
    let net = ConeGrid::for_grid(a.grid(), 1)?;
    squarefn::hardy_norm(a, 1.0, Side::Column, &net)
}
