//! The dyadic filtration `D` and its shifted companion `D'`.
//!
//! Level-`n` atoms of `D` are `(k 2^-n, (k+1) 2^-n]`. Level-`n` atoms of `D'`
//! are shifted right by `2^-n / 3` at even `n` and by `2 * 2^-n / 3` at odd
//! `n`. Every interval sits inside an atom of one of the two systems that is
//! at most six times longer.

use std::fmt;

use num_integer::Integer;
use num_traits::ToPrimitive;
use serde::Serialize;

use crate::bmo::{BmoMode, BmoReport, Side};
use crate::error::{Error, Result};
use crate::flat;
use crate::gridfn::{GridSpec, MatrixField, MomentPrefix, Rat, RatInterval};
use crate::matcore::{self, MatrixValue};
use crate::maximal::{self, NcSupBound};

/// Largest `|n|` for which atoms are represented.
pub const MAX_LEVEL: i32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum FiltrationId {
    D,
    DPrime,
}

impl FiltrationId {
    /// Offset of the level-`n` atom boundaries, in units of `2^-n / 3`.
    pub fn offset(self, n: i32) -> i64 {
        match self {
            FiltrationId::D => 0,
            FiltrationId::DPrime if n.rem_euclid(2) == 0 => 1,
            FiltrationId::DPrime => 2,
        }
    }

    pub fn both() -> [FiltrationId; 2] {
        [FiltrationId::D, FiltrationId::DPrime]
    }
}

impl fmt::Display for FiltrationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FiltrationId::D => write!(f, "D"),
            FiltrationId::DPrime => write!(f, "D'"),
        }
    }
}

/// The atom with index `k` at level `n` of a filtration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AtomRef {
    pub filtration: FiltrationId,
    pub n: i32,
    pub k: i64,
    pub interval: RatInterval,
}

fn check_level(n: i32) -> Result<()> {
    if n.abs() > MAX_LEVEL {
        Err(Error::InvalidRange(n, MAX_LEVEL))
    } else {
        Ok(())
    }
}

/// `x / (3 * 2^n)` for any sign of `n`.
fn over_three_pow2(x: i64, n: i32) -> Result<Rat> {
    if n >= 0 {
        Ok(Rat::new(x, 3i64 << n))
    } else {
        let num = x.checked_mul(1i64 << (-n)).ok_or(Error::Overflow)?;
        Ok(Rat::new(num, 3))
    }
}

impl AtomRef {
    pub fn new(filtration: FiltrationId, n: i32, k: i64) -> Result<Self> {
        check_level(n)?;
        let off = filtration.offset(n);
        let lo_num = k.checked_mul(3).and_then(|v| v.checked_add(off)).ok_or(Error::Overflow)?;
        let lo = over_three_pow2(lo_num, n)?;
        let hi = over_three_pow2(lo_num + 3, n)?;
        Ok(Self { filtration, n, k, interval: RatInterval { lo, hi } })
    }

    pub fn len(&self) -> Rat {
        self.interval.len()
    }
}

impl fmt::Display for AtomRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[n={}, k={}] = {}", self.filtration, self.n, self.k, self.interval)
    }
}

/// The level-`n` atom containing `t` (half-open convention).
pub fn atom_at(filtration: FiltrationId, n: i32, t: Rat) -> Result<AtomRef> {
    check_level(n)?;
    // t in ((3k + off) / (3 * 2^n), (3k + off + 3) / (3 * 2^n)]
    let scaled = t * Rat::new(3, 1) * pow2(n)? - Rat::from_integer(filtration.offset(n));
    let x = scaled / Rat::from_integer(3);
    let k = x.ceil().to_integer() - 1;
    AtomRef::new(filtration, n, k)
}

fn pow2(n: i32) -> Result<Rat> {
    check_level(n)?;
    Ok(if n >= 0 { Rat::from_integer(1i64 << n) } else { Rat::new(1, 1i64 << (-n)) })
}

/// The level chosen for an interval of length `len`: `2^-N-1 / 3 <= len < 2^-N / 3`.
pub fn cover_level(len: Rat) -> Result<i32> {
    if len <= Rat::from_integer(0) {
        return Err(Error::NonPositiveWindow("0".into(), len.to_string()));
    }
    let three_len = len * Rat::from_integer(3);
    let approx = -three_len.to_f64().ok_or(Error::Overflow)?.log2();
    let mut n = approx.floor() as i32;
    for _ in 0..4 {
        let lo = pow2(-n - 1)?;
        let hi = pow2(-n)?;
        if three_len < lo {
            n += 1;
        } else if three_len >= hi {
            n -= 1;
        } else {
            return Ok(n);
        }
    }
    Err(Error::Overflow)
}

/// An atom of `D` or `D'` containing `iv` with length at most `6 |iv|`.
pub fn cover(iv: &RatInterval) -> Result<AtomRef> {
    let n = cover_level(iv.len())?;
    for filtration in FiltrationId::both() {
        let atom = atom_at(filtration, n, iv.hi)?;
        if atom.interval.contains_interval(iv) {
            return Ok(atom);
        }
    }
    Err(Error::OutsideWindow(format!("no level-{n} atom contains {iv}")))
}

/// Points `k 2^-n` and `(k + off) 2^-n` in `[lo, hi]`, as numerators over `3 * 2^n`.
pub fn level_endpoints(n: i32, lo: i64, hi: i64) -> Vec<i64> {
    let mut pts = Vec::new();
    let off_prime = FiltrationId::DPrime.offset(n);
    for k in Integer::div_floor(&lo, &3) - 1..=Integer::div_floor(&hi, &3) + 1 {
        for off in [0, off_prime] {
            let p = 3 * k + off;
            if p >= lo && p <= hi {
                pts.push(p);
            }
        }
    }
    pts.sort_unstable();
    pts
}

/// A filtration atom together with the grid cells it covers inside `W`.
#[derive(Clone, Copy, Debug)]
pub struct AtomCells {
    pub atom: AtomRef,
    /// Cell index range `start..end` of the atom's intersection with `W`.
    pub start: usize,
    pub end: usize,
    /// Atom length in grid units.
    pub len_units: i64,
    /// True when the atom lies inside `W`.
    pub inside: bool,
}

/// Level-`n` atoms meeting `W`, in increasing order.
pub fn atoms_meeting_window(grid: GridSpec, filtration: FiltrationId, n: i32) -> Result<Vec<AtomCells>> {
    check_level(n)?;
    if n > grid.k() {
        return Err(Error::LevelTooFine { level: n, resolution: grid.k() });
    }
    let shift = grid.k() - n;
    if shift > 62 - 2 {
        return Err(Error::Overflow);
    }
    let len_units = 3i64 << shift;
    let off_units = filtration.offset(n) << shift;
    let o = grid.origin_units();
    let end_w = -o;
    let mut k = Integer::div_floor(&(o - off_units), &len_units);
    let mut out = Vec::new();
    loop {
        let lo = k * len_units + off_units;
        if lo >= end_w {
            break;
        }
        let hi = lo + len_units;
        if hi > o {
            let (start, end) = grid.clip_units(lo, hi);
            out.push(AtomCells {
                atom: AtomRef::new(filtration, n, k)?,
                start,
                end,
                len_units,
                inside: lo >= o && hi <= end_w,
            });
        }
        k += 1;
    }
    Ok(out)
}

/// True when some level-`n` atom meets `W` without lying inside it.
pub fn atoms_cross_boundary(grid: GridSpec, filtration: FiltrationId, n: i32) -> Result<bool> {
    Ok(atoms_meeting_window(grid, filtration, n)?.iter().any(|a| !a.inside))
}

/// `E(f | F_n)` with `f` extended by zero outside `W`.
pub fn cond_exp(f: &MatrixField, filtration: FiltrationId, n: i32) -> Result<MatrixField> {
    let atoms = atoms_meeting_window(f.grid(), filtration, n)?;
    let d = f.dim();
    let mut out = MatrixField::zeros(f.grid(), d);
    for a in &atoms {
        let mut s = f.cell_sum(a.start, a.end);
        for z in s.iter_mut() {
            *z /= a.len_units as f64;
        }
        for i in a.start..a.end {
            out.block_mut(i).copy_from_slice(&s);
        }
    }
    Ok(out)
}

/// `d_n = E_n f - E_{n-1} f` for `n` in `n_min+1..=n_max`.
pub fn martingale_differences(
    f: &MatrixField,
    filtration: FiltrationId,
    n_min: i32,
    n_max: i32,
) -> Result<Vec<MatrixField>> {
    if n_min > n_max {
        return Err(Error::InvalidRange(n_min, n_max));
    }
    let mut prev = cond_exp(f, filtration, n_min)?;
    let mut out = Vec::with_capacity((n_max - n_min) as usize);
    for n in n_min + 1..=n_max {
        let cur = cond_exp(f, filtration, n)?;
        out.push(cur.sub(&prev)?);
        prev = cur;
    }
    Ok(out)
}

/// Levels whose atoms are grid-aligned and fit inside `W` for some atom.
pub fn level_range(grid: GridSpec) -> (i32, i32) {
    (-grid.j(), grid.k())
}

/// `φ^#_{F_n}` as a field: on each atom `A`, `(1/|A|) ∫_A |φ - φ_A|^2`.
/// Atoms not inside `W` are left at zero.
pub fn sharp_field(phi: &MatrixField, filtration: FiltrationId, n: i32) -> Result<MatrixField> {
    let atoms = atoms_meeting_window(phi.grid(), filtration, n)?;
    let d = phi.dim();
    let mut out = MatrixField::zeros(phi.grid(), d);
    for a in atoms.iter().filter(|a| a.inside) {
        let m = atom_sharp(phi, a);
        let block = m.row_major();
        for i in a.start..a.end {
            out.block_mut(i).copy_from_slice(&block);
        }
    }
    Ok(out)
}

/// `(1/|A|) ∫_A |φ - φ_A|^2` for an atom inside `W`.
fn atom_sharp(phi: &MatrixField, a: &AtomCells) -> MatrixValue {
    let d = phi.dim();
    let cells = (a.end - a.start) as f64;
    let mut sq = flat::zeros(d);
    let mut s = flat::zeros(d);
    for i in a.start..a.end {
        flat::adj_mul_acc(&mut sq, d, 1.0, phi.block(i), phi.block(i));
        flat::axpy(&mut s, 1.0, phi.block(i));
    }
    flat::adj_mul_acc(&mut sq, d, -1.0 / cells, &s, &s);
    matcore::psd_part(&flat::to_matrix(d, &sq).scale(1.0 / cells)).into_matrix()
}

/// `‖sup_n |φ^#_{F_n}|‖_{q/2}^{1/2}` over levels `-J..=K`, as a bound pair.
///
/// At `q = inf` the value is exact: the largest `‖φ^#_A‖^{1/2}` over atoms
/// inside `W`.
pub fn dyadic_bmo_q_norm(phi: &MatrixField, q: f64, filtration: FiltrationId, side: Side) -> Result<BmoReport> {
    if q.is_nan() || q <= 2.0 {
        return Err(Error::InvalidExponent(q));
    }
    let phi = match side {
        Side::Column => phi.clone(),
        Side::Row => phi.adjoint(),
    };
    let (n_lo, n_hi) = level_range(phi.grid());
    if q.is_infinite() {
        // same prefix-sum arithmetic as the all-interval sup, so that an atom
        // evaluates to the same number in both
        let pre = MomentPrefix::new(&phi);
        let mut buf = Vec::new();
        let mut best = 0.0f64;
        let mut arg = phi.grid().window();
        for n in n_lo..=n_hi {
            for a in atoms_meeting_window(phi.grid(), filtration, n)?.iter().filter(|a| a.inside) {
                let v = matcore::max_eig_unchecked(&pre.sharp(a.start, a.end, &mut buf)).max(0.0);
                if v > best {
                    best = v;
                    arg = a.atom.interval;
                }
            }
        }
        return Ok(BmoReport::exact(best.sqrt(), arg, BmoMode::DyadicPair));
    }
    let fields: Vec<MatrixField> =
        (n_lo..=n_hi).map(|n| sharp_field(&phi, filtration, n)).collect::<Result<_>>()?;
    let bound: NcSupBound = maximal::ncsup_bounds_fields(&fields, q / 2.0)?;
    Ok(BmoReport::bound(bound.lower.sqrt(), bound.upper.sqrt(), phi.grid().window(), BmoMode::DyadicPair))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(a: i64, b: i64) -> Rat {
        Rat::new(a, b)
    }

    #[test]
    fn atom_examples() {
        let a = atom_at(FiltrationId::D, 1, r(3, 10)).unwrap();
        assert_eq!((a.k, a.interval), (0, RatInterval { lo: r(0, 1), hi: r(1, 2) }));
        let b = atom_at(FiltrationId::DPrime, 4, r(1, 4)).unwrap();
        assert_eq!((b.k, b.interval), (3, RatInterval { lo: r(10, 48), hi: r(13, 48) }));
        // right endpoints belong to their atom
        let c = atom_at(FiltrationId::D, 1, r(1, 2)).unwrap();
        assert_eq!(c.k, 0);
        // odd levels of D' use the 2/3 shift, negative levels too
        let e = atom_at(FiltrationId::DPrime, -1, r(0, 1)).unwrap();
        assert_eq!(e.interval, RatInterval { lo: r(-2, 3), hi: r(4, 3) });
    }

    #[test]
    fn levels_nest() {
        for filtration in FiltrationId::both() {
            for num in -40..40 {
                let t = r(num, 7);
                for n in -5..8 {
                    let coarse = atom_at(filtration, n, t).unwrap();
                    let fine = atom_at(filtration, n + 1, t).unwrap();
                    assert!(coarse.interval.contains(t));
                    assert!(coarse.interval.contains_interval(&fine.interval), "{coarse} {fine}");
                }
            }
        }
    }

    #[test]
    fn cover_examples() {
        let iv = RatInterval::new(r(2, 5), r(1, 2)).unwrap();
        let a = cover(&iv).unwrap();
        assert_eq!((a.filtration, a.n, a.interval), (FiltrationId::D, 1, RatInterval { lo: r(0, 1), hi: r(1, 2) }));

        let iv = RatInterval::new(r(24, 100), r(26, 100)).unwrap();
        let a = cover(&iv).unwrap();
        assert_eq!(a.filtration, FiltrationId::DPrime);
        assert_eq!((a.n, a.interval), (4, RatInterval { lo: r(10, 48), hi: r(13, 48) }));

        let atom = AtomRef::new(FiltrationId::D, 3, 5).unwrap();
        let c = cover(&atom.interval).unwrap();
        assert!(c.interval.contains_interval(&atom.interval));
        assert!(c.len() <= atom.len() * Rat::from_integer(6));
    }

    #[test]
    fn separation_of_level_endpoints() {
        for n in -3..6 {
            let pts = level_endpoints(n, -200, 200);
            for w in pts.windows(2) {
                // |a - b| >= 2^-n / 3, i.e. one unit
                assert!(w[1] - w[0] >= 1);
            }
        }
    }

    fn random_field(grid: GridSpec, d: usize, seed: u64) -> MatrixField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MatrixField::from_fn(grid, d, |_| random::gaussian(d, &mut rng))
    }

    /// Cells covered by level-`n` atoms inside `W`.
    fn inside_mask(grid: GridSpec, filtration: FiltrationId, n: i32) -> Vec<bool> {
        let mut mask = vec![false; grid.cell_count()];
        for a in atoms_meeting_window(grid, filtration, n).unwrap().iter().filter(|a| a.inside) {
            mask[a.start..a.end].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    /// Random field supported in `(-2/3, 4/3]`, where every atom of either
    /// filtration at level `>= -1` meeting the support lies inside `W = (-2, 2]`.
    fn interior_field(grid: GridSpec, d: usize, seed: u64, psd: bool) -> MatrixField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MatrixField::from_fn(grid, d, |i| {
            let c = grid.cell_center(i);
            let v = if psd { random::psd(d, &mut rng).into_matrix() } else { random::gaussian(d, &mut rng) };
            if c > -2.0 / 3.0 && c < 4.0 / 3.0 {
                v
            } else {
                MatrixValue::zeros(d)
            }
        })
    }

    #[test]
    fn cond_exp_examples() {
        let grid = GridSpec::new(1, 3).unwrap();
        let m = MatrixValue::diag(&[2.0, 4.0]);
        let f = MatrixField::indicator(grid, &RatInterval::new(r(0, 1), r(1, 4)).unwrap(), &m).unwrap();
        let e = cond_exp(&f, FiltrationId::D, 1).unwrap();
        let half = RatInterval::new(r(0, 1), r(1, 2)).unwrap();
        let expect = MatrixField::indicator(grid, &half, &m.scale(0.5)).unwrap();
        assert_eq!(e, expect);

        let g = random_field(grid, 2, 1);
        for filtration in FiltrationId::both() {
            let e2 = cond_exp(&g, filtration, 2).unwrap();
            let again = cond_exp(&e2, filtration, 2).unwrap();
            let mask = inside_mask(grid, filtration, 2);
            for i in (0..g.len()).filter(|&i| mask[i]) {
                assert!((&again.cell(i) - &e2.cell(i)).max_abs() < 1e-14);
            }
        }
        assert!(matches!(cond_exp(&g, FiltrationId::D, 4), Err(Error::LevelTooFine { .. })));
    }

    #[test]
    fn tower_property_and_positivity() {
        let grid = GridSpec::new(1, 4).unwrap();
        let f = interior_field(grid, 2, 3, true);
        for filtration in FiltrationId::both() {
            for m in -1..=4 {
                for n in -1..=4 {
                    let em = cond_exp(&f, filtration, m).unwrap();
                    let lhs = cond_exp(&em, filtration, n).unwrap();
                    let rhs = cond_exp(&f, filtration, m.min(n)).unwrap();
                    assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-13);
                }
                let e = cond_exp(&f, filtration, m).unwrap();
                for i in 0..e.len() {
                    assert!(matcore::min_eig_unchecked(&e.cell(i)) > -1e-12);
                }
            }
        }
    }

    #[test]
    fn differences_telescope_and_are_orthogonal() {
        let grid = GridSpec::new(1, 4).unwrap();
        let f = interior_field(grid, 2, 5, false);
        let c = MatrixField::constant(grid, &MatrixValue::identity(2));
        for filtration in FiltrationId::both() {
            let mask = inside_mask(grid, filtration, 0);
            for dn in martingale_differences(&c, filtration, 0, 4).unwrap() {
                for i in (0..dn.len()).filter(|&i| mask[i]) {
                    assert!(dn.cell(i).max_abs() < 1e-14);
                }
            }
            let ds = martingale_differences(&f, filtration, -1, 4).unwrap();
            let mut acc = cond_exp(&f, filtration, -1).unwrap();
            for dn in &ds {
                acc = acc.add(dn).unwrap();
            }
            let top = cond_exp(&f, filtration, 4).unwrap();
            assert!(acc.sub(&top).unwrap().max_abs() < 1e-13);
            for a in 0..ds.len() {
                for b in 0..a {
                    let ip = crate::gridfn::scalar_pairing(&ds[a], &ds[b]).unwrap();
                    assert!(ip.norm() < 1e-12, "{ip}");
                }
            }
        }
        assert!(martingale_differences(&f, FiltrationId::D, 3, 1).is_err());
    }

    #[test]
    fn dyadic_bmo_examples() {
        let grid = GridSpec::new(1, 3).unwrap();
        let c = MatrixField::constant(grid, &MatrixValue::diag(&[1.0, 5.0]));
        for q in [4.0, f64::INFINITY] {
            let rep = dyadic_bmo_q_norm(&c, q, FiltrationId::D, Side::Column).unwrap();
            assert!(rep.upper < 1e-7, "{rep:?}");
        }
        // d = 1: scalar dyadic BMO by brute force over atoms
        let f = random_field(grid, 1, 9);
        for filtration in FiltrationId::both() {
            let mut best = 0.0f64;
            for n in -1..=3 {
                for a in atoms_meeting_window(grid, filtration, n).unwrap().iter().filter(|a| a.inside) {
                    let vals: Vec<_> = (a.start..a.end).map(|i| f.block(i)[0]).collect();
                    let mean = vals.iter().sum::<crate::matcore::C64>() / vals.len() as f64;
                    let var = vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / vals.len() as f64;
                    best = best.max(var);
                }
            }
            let rep = dyadic_bmo_q_norm(&f, f64::INFINITY, filtration, Side::Column).unwrap();
            assert!((rep.value() - best.sqrt()).abs() < 1e-12);
        }
        assert!(dyadic_bmo_q_norm(&f, 2.0, FiltrationId::D, Side::Column).is_err());
    }
}
