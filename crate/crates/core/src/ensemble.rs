//! Seeded random fields: Gaussian step functions, dyadic-martingale BMO
//! samples and normalized atoms.
//!
//! Member `i` of an ensemble draws from its own ChaCha stream, so members can
//! be generated in any order and a repeated seed gives identical fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dyadic::{self, FiltrationId};
use crate::error::{Error, Result};
use crate::gridfn::{GridSpec, MatrixField, RatInterval};
use crate::matcore::{random, C64};

/// Mean-zero fields are rounded to multiples of this step, which keeps every
/// cell sum exact in `f64`.
pub const QUANTUM: f64 = 1.0 / 4_294_967_296.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    Gaussian,
    Martingale,
    Atoms,
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "martingale" => Ok(Self::Martingale),
            "atoms" => Ok(Self::Atoms),
            _ => Err(Error::Config(format!("unknown ensemble `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub grid: GridSpec,
    pub d: usize,
    pub size: usize,
    pub seed: u64,
    /// Make `∫_W f = 0` exactly (atoms are always mean zero).
    pub mean_zero: bool,
    /// Operator-norm bound on the martingale differences.
    pub diff_bound: f64,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, grid: GridSpec, d: usize, size: usize, seed: u64) -> Self {
        Self { kind, grid, d, size, seed, mean_zero: false, diff_bound: 1.0 }
    }

    pub fn mean_zero(mut self, on: bool) -> Self {
        self.mean_zero = on;
        self
    }

    pub fn diff_bound(mut self, bound: f64) -> Self {
        self.diff_bound = bound;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::Config("ensembleSize must be ≥ 1".into()));
        }
        if self.d == 0 {
            return Err(Error::Config("d must be ≥ 1".into()));
        }
        if !(self.diff_bound >= 0.0) || !self.diff_bound.is_finite() {
            return Err(Error::Config(format!("difference bound must be finite and non-negative, got {}", self.diff_bound)));
        }
        Ok(())
    }
}

/// RNG of member `index` of the ensemble seeded by `seed`.
pub fn member_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn generate_ensemble(spec: &EnsembleSpec) -> Result<Vec<MatrixField>> {
    spec.validate()?;
    (0..spec.size)
        .map(|i| {
            let mut rng = member_rng(spec.seed, i as u64);
            let f = match spec.kind {
                EnsembleKind::Gaussian => gaussian_field(spec.grid, spec.d, &mut rng),
                EnsembleKind::Martingale => martingale_field(spec.grid, spec.d, spec.diff_bound, &mut rng)?,
                EnsembleKind::Atoms => return Ok(random_atom(spec.grid, spec.d, &mut rng)?.0),
            };
            Ok(if spec.mean_zero { exact_mean_zero(&f) } else { f })
        })
        .collect()
}

/// iid Gaussian entries, `E|m_ij|^2 = 1`.
pub fn gaussian_field<R: Rng + ?Sized>(grid: GridSpec, d: usize, rng: &mut R) -> MatrixField {
    MatrixField::from_fn(grid, d, |_| random::gaussian(d, rng))
}

/// Cellwise `g* g` with Gaussian `g`.
pub fn psd_field<R: Rng + ?Sized>(grid: GridSpec, d: usize, rng: &mut R) -> MatrixField {
    MatrixField::from_fn(grid, d, |_| random::psd(d, rng).into_matrix())
}

/// `c + Σ_A h_A m_A` over the `D` atoms inside `W` at levels `-J..K-1`, with
/// Haar functions `h_A = χ_left - χ_right` and `‖m_A‖ <= bound`.
pub fn martingale_field<R: Rng + ?Sized>(grid: GridSpec, d: usize, bound: f64, rng: &mut R) -> Result<MatrixField> {
    let base = random::gaussian(d, rng);
    let mut f = MatrixField::constant(grid, &base);
    if bound == 0.0 {
        return Ok(f);
    }
    let (n_lo, n_hi) = dyadic::level_range(grid);
    for n in n_lo..n_hi {
        for a in dyadic::atoms_meeting_window(grid, FiltrationId::D, n)?.iter().filter(|a| a.inside) {
            let m = random::contraction(d, rng).scale(bound);
            let block = m.row_major();
            let mid = (a.start + a.end) / 2;
            for i in a.start..a.end {
                let sign = if i < mid { 1.0 } else { -1.0 };
                crate::flat::axpy(f.block_mut(i), sign, &block);
            }
        }
    }
    Ok(f)
}

/// A normalized atom on a random `D` atom inside `W`: Gaussian values on the
/// left half, their negatives mirrored on the right half, scaled so that
/// `τ(∫|a|^2)^{1/2} = |I|^{-1/2}`.
pub fn random_atom<R: Rng + ?Sized>(grid: GridSpec, d: usize, rng: &mut R) -> Result<(MatrixField, RatInterval)> {
    let (n_lo, n_hi) = dyadic::level_range(grid);
    let n = rng.random_range(n_lo..n_hi);
    let atoms: Vec<_> =
        dyadic::atoms_meeting_window(grid, FiltrationId::D, n)?.into_iter().filter(|a| a.inside).collect();
    let a = atoms[rng.random_range(0..atoms.len())];
    let half = (a.end - a.start) / 2;
    let mut f = MatrixField::zeros(grid, d);
    for k in 0..half {
        let g = random::gaussian(d, rng);
        f.set_cell(a.start + k, &g);
        f.set_cell(a.start + half + k, &g.scale(-1.0));
    }
    let sq = crate::gridfn::column_square(&f);
    let size = crate::matcore::psd_power(&sq, 0.5)?.trace() * a.atom.interval.len_f64().sqrt();
    Ok((f.scale(1.0 / size), a.atom.interval))
}

/// Subtracts the window mean, rounds to multiples of [`QUANTUM`] and spreads
/// the integer residual over the first cells, so that the cell sum is zero
/// exactly.
pub fn exact_mean_zero(f: &MatrixField) -> MatrixField {
    let c = f.centered();
    let n = c.len();
    let dd = c.dim() * c.dim();
    let mut units: Vec<[i64; 2]> = c.data().iter().map(|z| [(z.re / QUANTUM).round() as i64, (z.im / QUANTUM).round() as i64]).collect();
    for q in 0..dd {
        for part in 0..2 {
            let residual: i64 = (0..n).map(|i| units[i * dd + q][part]).sum();
            let step = -residual.signum();
            for k in 0..residual.unsigned_abs() as usize {
                units[(k % n) * dd + q][part] += step;
            }
        }
    }
    let data = units.iter().map(|u| C64::new(u[0] as f64 * QUANTUM, u[1] as f64 * QUANTUM)).collect();
    MatrixField::from_data(f.grid(), f.dim(), data).expect("same layout")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomdec;

    #[test]
    fn repeated_seed_is_bit_identical() {
        let grid = GridSpec::new(1, 3).unwrap();
        for kind in [EnsembleKind::Gaussian, EnsembleKind::Martingale, EnsembleKind::Atoms] {
            let spec = EnsembleSpec::new(kind, grid, 2, 3, 17).mean_zero(true);
            let a = generate_ensemble(&spec).unwrap();
            let b = generate_ensemble(&spec).unwrap();
            assert_eq!(a, b);
            assert_ne!(a[0], a[1]);
        }
    }

    #[test]
    fn mean_zero_is_exact() {
        let grid = GridSpec::new(1, 4).unwrap();
        for kind in [EnsembleKind::Gaussian, EnsembleKind::Martingale] {
            for f in generate_ensemble(&EnsembleSpec::new(kind, grid, 3, 4, 2).mean_zero(true)).unwrap() {
                assert!(f.is_mean_zero());
                assert!(atomdec::decompose(&f).is_ok());
            }
        }
    }

    #[test]
    fn zero_difference_bound_gives_constants() {
        let grid = GridSpec::new(1, 3).unwrap();
        let spec = EnsembleSpec::new(EnsembleKind::Martingale, grid, 2, 2, 5).diff_bound(0.0);
        for f in generate_ensemble(&spec).unwrap() {
            assert!((1..f.len()).all(|i| f.block(i) == f.block(0)));
        }
    }

    #[test]
    fn empty_ensemble_is_an_error() {
        let grid = GridSpec::new(1, 3).unwrap();
        let err = generate_ensemble(&EnsembleSpec::new(EnsembleKind::Gaussian, grid, 1, 0, 0)).unwrap_err();
        assert!(err.to_string().contains("ensembleSize must be ≥ 1"));
    }

    #[test]
    fn random_atoms_are_valid() {
        let grid = GridSpec::new(1, 4).unwrap();
        let mut rng = member_rng(3, 0);
        for _ in 0..20 {
            let (a, iv) = random_atom(grid, 2, &mut rng).unwrap();
            let cert = atomdec::validate_atom(&a, &iv, 0.0).unwrap();
            assert!(cert.valid, "{cert:?}");
        }
    }
}
