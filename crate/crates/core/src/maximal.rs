//! Window averages, noncommutative maximal norms and the dyadic dominations
//! that control them.

use nalgebra::{DMatrix, SVD};
use num_traits::ToPrimitive;
use serde::Serialize;

use crate::dyadic::{self, FiltrationId};
use crate::error::{Error, Result};
use crate::flat;
use crate::gridfn::{self, GridSpec, MatrixField, Prefix, PsdField, Rat};
use crate::halfplane;
use crate::matcore::{self, MatrixValue, PsdMatrix, C64};

/// Iteration cap of the dual ascent for `‖sup_n a_n‖_p`.
pub const DUAL_ITERS: usize = 200;

/// Averaging window `(t - h1, t + h2]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AvgWindow {
    pub h1: Rat,
    pub h2: Rat,
}

impl AvgWindow {
    pub fn new(h1: Rat, h2: Rat) -> Result<Self> {
        let zero = Rat::from_integer(0);
        if h1 <= zero || h2 <= zero {
            return Err(Error::NonPositiveWindow(h1.to_string(), h2.to_string()));
        }
        Ok(Self { h1, h2 })
    }

    pub fn len(&self) -> Rat {
        self.h1 + self.h2
    }

    /// Snap outward to the grid; the flag is true when snapping moved an end.
    pub fn snapped(&self, grid: GridSpec) -> (AvgWindow, bool) {
        let upo = Rat::from_integer(grid.units_per_one());
        let s1 = (self.h1 * upo).ceil() / upo;
        let s2 = (self.h2 * upo).ceil() / upo;
        (AvgWindow { h1: s1, h2: s2 }, s1 != self.h1 || s2 != self.h2)
    }
}

/// Two-sided bound on a noncommutative maximal norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NcSupBound {
    pub lower: f64,
    pub upper: f64,
    /// True only when the family commutes and the value is the pointwise max.
    pub exact: bool,
}

/// `f_h(t)` sampled at each cell's right endpoint `t`, where the window is
/// grid-aligned and the average exact (zero extension outside `W`).
pub fn window_average(f: &MatrixField, h: &AvgWindow) -> Result<MatrixField> {
    let grid = f.grid();
    let (h, _) = h.snapped(grid);
    let h1 = grid.to_units(h.h1)?;
    let h2 = grid.to_units(h.h2)?;
    let prefix = Prefix::new(f);
    let mut out = MatrixField::zeros(grid, f.dim());
    let o = grid.origin_units();
    let inv = 1.0 / (h1 + h2) as f64;
    for i in 0..f.len() {
        let t = o + i as i64 + 1;
        let (a, b) = grid.clip_units(t - h1, t + h2);
        let s = prefix.cell_sum(a, b);
        let block = out.block_mut(i);
        for (o, v) in block.iter_mut().zip(&s) {
            *o = v * inv;
        }
    }
    Ok(out)
}

/// Cellwise check of `f_h ⪯ 6 (E(f|D_N) + E(f|D'_N))`, with `N` from the
/// covering rule for `|I| = h1 + h2`. Returns `(holds, min eigen-slack)`.
pub fn domination_check(f: &MatrixField, h: &AvgWindow, tol: f64) -> Result<(bool, f64)> {
    let grid = f.grid();
    let (h, _) = h.snapped(grid);
    let n = dyadic::cover_level(h.len())?;
    let fh = window_average(f, &h)?;
    let e = dyadic::cond_exp(f, FiltrationId::D, n)?;
    let ep = dyadic::cond_exp(f, FiltrationId::DPrime, n)?;
    let mut slack = f64::INFINITY;
    for i in 0..f.len() {
        let bound = (&e.cell(i) + &ep.cell(i)).scale(6.0);
        slack = slack.min(matcore::min_eig_unchecked(&(&bound - &fh.cell(i))));
    }
    Ok((slack >= -tol, slack))
}

/// `F = 6 Σ_N (E(f|D_N) + E(f|D'_N))` over the distinct covering levels of
/// the windows; it dominates every listed `f_h`. Returns `(F, ‖F‖_p)`.
pub fn maximal_bound_field(f: &MatrixField, windows: &[AvgWindow], p: f64) -> Result<(MatrixField, f64)> {
    if windows.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let grid = f.grid();
    let mut levels: Vec<i32> =
        windows.iter().map(|w| dyadic::cover_level(w.snapped(grid).0.len())).collect::<Result<_>>()?;
    levels.sort_unstable();
    levels.dedup();
    let mut big = MatrixField::zeros(grid, f.dim());
    for n in levels {
        for filtration in FiltrationId::both() {
            big = big.add(&dyadic::cond_exp(f, filtration, n)?)?;
        }
    }
    let big = big.scale(6.0);
    let norm = gridfn::lp_mixed_norm(&PsdField::new(big.clone())?, p)?;
    Ok((big, norm))
}

/// Cellwise check at cell centers `x` of the Poisson majorization
/// `f(x+t, y) ⪯ (1/π) Σ_{k=0}^{kMax} (8/2^k) (1/(2^{k+1} y)) ∫_{|x+t-s| <= 2^k y} f(s) ds`.
/// Returns `(holds, min eigen-slack)`.
pub fn poisson_domination_check(f: &MatrixField, t: f64, y: f64, k_max: u32, tol: f64) -> Result<(bool, f64)> {
    if !(y > 0.0) {
        return Err(Error::NonPositiveHeight(y));
    }
    let grid = f.grid();
    let prefix = Prefix::new(f);
    let d = f.dim();
    let mut slack = f64::INFINITY;
    for i in 0..f.len() {
        let x = grid.cell_center(i) + t;
        let lhs = halfplane::extend(f, x, y)?;
        let mut acc = flat::zeros(d);
        for k in 0..=k_max {
            let r = (1u64 << k) as f64 * y;
            let weight = 8.0 / (1u64 << k) as f64 / (2.0 * r) / std::f64::consts::PI;
            flat::axpy(&mut acc, weight, &prefix.integral(x - r, x + r));
        }
        let rhs = flat::to_matrix(d, &acc);
        slack = slack.min(matcore::min_eig_unchecked(&(&rhs - &lhs)));
    }
    Ok((slack >= -tol, slack))
}

/// Smallest `kMax` whose ball `|x + t - s| <= 2^kMax y` covers `W` for every
/// `x` in `W`, so the truncated majorization drops nothing.
pub fn covering_k_max(grid: GridSpec, t: f64, y: f64) -> u32 {
    let reach = 2.0 * grid.half_width() + t.abs();
    let mut k = 0u32;
    while ((1u64 << k) as f64) * y < reach {
        k += 1;
    }
    k
}

/// Per-`h` sup of `|f_h - f|` at cell centers farther than `h` from every jump,
/// for a field with diagonal values.
#[derive(Clone, Debug, Serialize)]
pub struct DifferentiationReport {
    pub h: Vec<f64>,
    pub error: Vec<f64>,
    /// Errors are non-increasing along the schedule (within `1e-12`).
    pub monotone: bool,
}

pub fn differentiation_demo(f: &MatrixField, schedule: &[f64]) -> Result<DifferentiationReport> {
    let d = f.dim();
    for i in 0..f.len() {
        let b = f.block(i);
        for r in 0..d {
            for c in 0..d {
                if r != c && b[r * d + c].norm() != 0.0 {
                    return Err(Error::NonCommuting);
                }
            }
        }
    }
    let grid = f.grid();
    let jumps: Vec<f64> = (1..f.len())
        .filter(|&i| f.block(i) != f.block(i - 1))
        .map(|i| grid.cell_bounds(i).0)
        .collect();
    let prefix = Prefix::new(f);
    let (w_lo, w_hi) = (-grid.half_width(), grid.half_width());
    let mut errors = Vec::with_capacity(schedule.len());
    for &h in schedule {
        if !(h > 0.0) {
            return Err(Error::NonPositiveWindow(format!("{h}"), format!("{h}")));
        }
        let mut worst = 0.0f64;
        for i in 0..f.len() {
            let t = grid.cell_center(i);
            let near_jump = jumps.iter().any(|&j| (t - j).abs() <= h);
            if near_jump || t - h < w_lo || t + h > w_hi {
                continue;
            }
            let avg = prefix.integral(t - h, t + h);
            for q in 0..d * d {
                worst = worst.max((avg[q] / (2.0 * h) - f.block(i)[q]).norm());
            }
        }
        errors.push(worst);
    }
    let monotone = errors.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(DifferentiationReport { h: schedule.to_vec(), error: errors, monotone })
}

/// Min eigen-slack of `∫_A |f| ⪯ (∫_A |f|^p)^{1/p}` for the union `A` of the
/// listed cells, which must have total length one.
pub fn power_mean_slack(f: &MatrixField, cells: &[usize], p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    let grid = f.grid();
    let w = grid.cell_width_f64();
    let total = Rat::from_integer(cells.len() as i64) * grid.cell_width();
    if total != Rat::from_integer(1) {
        return Err(Error::Config(format!("set has length {}, expected 1", total.to_f64().unwrap_or(f64::NAN))));
    }
    let d = f.dim();
    let mut lhs = MatrixValue::zeros(d);
    let mut inner = MatrixValue::zeros(d);
    for &i in cells {
        let a = matcore::abs_psd(&f.cell(i));
        lhs += &a.as_matrix().scale(w);
        inner += &matcore::psd_power(&a, p)?.as_matrix().scale(w);
    }
    let rhs = matcore::psd_power_tol(&inner, 1.0 / p, matcore::TOL_PSD)?;
    matcore::loewner_slack(&lhs, rhs.as_matrix())
}

fn commute(a: &[PsdMatrix]) -> bool {
    for i in 0..a.len() {
        for j in 0..i {
            let x = a[i].as_matrix();
            let y = a[j].as_matrix();
            let c = &(x * y) - &(y * x);
            let scale = x.frobenius() * y.frobenius();
            if c.frobenius() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return false;
            }
        }
    }
    true
}

/// Pointwise maximum of a commuting psd family, via one simultaneous
/// eigenbasis (the eigenvectors of a generic linear combination).
fn commuting_sup(a: &[PsdMatrix]) -> Vec<f64> {
    let d = a[0].dim();
    let mut combo = MatrixValue::zeros(d);
    for (n, x) in a.iter().enumerate() {
        let c = 1.0 + (n as f64 * 0.618_033_988_749_894_9).fract() * std::f64::consts::SQRT_2;
        combo += &x.as_matrix().scale(c);
    }
    let (_, vecs) = matcore::hermitian_eigh(&combo.hermitian_part()).expect("Hermitian by construction");
    let mut best = vec![0.0f64; d];
    for x in a {
        let m = vecs.adjoint() * x.as_matrix().as_dmatrix() * &vecs;
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.max(m[(i, i)].re);
        }
    }
    best
}

/// Bounds on `‖sup_n a_n‖_p` for a finite psd family (standard trace).
///
/// `upper` is the smaller of `‖Σ a_n‖_p` and `max_n ‖a_n‖_∞ d^{1/p}`, both
/// majorants of the family. `lower` is the better of `max_n ‖a_n‖_p` and the
/// value of a feasible dual `b_n = C* Q_n C` found by alternating ascent.
pub fn ncsup_bounds(a: &[PsdMatrix], p: f64) -> Result<NcSupBound> {
    if p.is_nan() || p <= 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    if a.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let d = a[0].dim();
    if a.iter().any(|x| x.dim() != d) {
        return Err(Error::DimMismatch { expected: d, got: a.iter().map(|x| x.dim()).find(|&x| x != d).unwrap() });
    }
    let top = a.iter().map(|x| x.max_eig()).fold(0.0, f64::max);
    if p.is_infinite() {
        return Ok(NcSupBound { lower: top, upper: top, exact: true });
    }
    if commute(a) {
        let v: f64 = commuting_sup(a).iter().map(|x| x.max(0.0).powf(p)).sum::<f64>().powf(1.0 / p);
        return Ok(NcSupBound { lower: v, upper: v, exact: true });
    }
    let mut sum = MatrixValue::zeros(d);
    for x in a {
        sum += x.as_matrix();
    }
    let upper = matcore::psd_trace_power(&sum, p).powf(1.0 / p).min(top * (d as f64).powf(1.0 / p));
    let trivial = a.iter().map(|x| matcore::psd_trace_power(x.as_matrix(), p).powf(1.0 / p)).fold(0.0, f64::max);
    let dual = dual_ascent(a, &sum, p);
    let lower = trivial.max(dual).min(upper);
    Ok(NcSupBound { lower, upper, exact: false })
}

/// `‖sup_n a_n‖_p` for psd fields on a common grid: cells decouple, so the
/// cellwise bounds combine as `(Σ_t w ℓ_t^p)^{1/p}`.
pub fn ncsup_bounds_fields(fields: &[MatrixField], p: f64) -> Result<NcSupBound> {
    if fields.is_empty() {
        return Err(Error::EmptyFamily);
    }
    if p.is_nan() || p <= 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    let grid = fields[0].grid();
    if fields.iter().any(|f| f.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    let w = grid.cell_width_f64();
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let mut exact = true;
    for i in 0..grid.cell_count() {
        let family: Vec<PsdMatrix> =
            fields.iter().map(|f| PsdMatrix::new(f.cell(i))).collect::<Result<_>>()?;
        let b = ncsup_bounds(&family, p)?;
        exact &= b.exact;
        if p.is_infinite() {
            lo = lo.max(b.lower);
            hi = hi.max(b.upper);
        } else {
            lo += w * b.lower.powf(p);
            hi += w * b.upper.powf(p);
        }
    }
    if p.is_finite() {
        lo = lo.powf(1.0 / p);
        hi = hi.powf(1.0 / p);
    }
    Ok(NcSupBound { lower: lo.min(hi), upper: hi, exact })
}

/// `argmax Re tr(G* C)` over `‖C‖_s <= 1`.
fn schatten_ball_argmax(g: &DMatrix<C64>, s: f64) -> Option<DMatrix<C64>> {
    let svd = SVD::new(g.clone(), true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let s_dual = s / (s - 1.0);
    let powered: Vec<f64> = svd.singular_values.iter().map(|&x| x.max(0.0).powf(s_dual - 1.0)).collect();
    let norm = powered.iter().map(|x| x.powf(s)).sum::<f64>().powf(1.0 / s);
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    let mut scaled = u.clone();
    for (j, &sv) in powered.iter().enumerate() {
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= C64::new(sv / norm, 0.0);
        }
    }
    Some(scaled * vt)
}

/// Best projective assignment of basis vectors to family members, given
/// `M_n = C a_n C*`. Returns `(value, basis, owner of each basis vector)`.
fn assign(ms: &[DMatrix<C64>], basis: &DMatrix<C64>) -> (f64, Vec<usize>) {
    let d = basis.nrows();
    let mut owner = vec![0usize; d];
    let mut value = 0.0;
    for i in 0..d {
        let e = basis.column(i);
        let mut best = f64::NEG_INFINITY;
        for (n, m) in ms.iter().enumerate() {
            let v = (e.adjoint() * m * e)[(0, 0)].re;
            if v > best {
                best = v;
                owner[i] = n;
            }
        }
        value += best;
    }
    (value, owner)
}

/// Feasible dual value for the maximal norm: `b_n = C* Q_n C` with
/// `Σ Q_n = 1` projective and `‖C* C‖_q = 1`. Alternates between the best
/// projective assignment over candidate bases and a linearized ascent step in
/// `C`; both steps are monotone.
fn dual_ascent(a: &[PsdMatrix], sum: &MatrixValue, p: f64) -> f64 {
    let d = sum.dim();
    let q = p / (p - 1.0);
    let s = 2.0 * q;
    let init = match matcore::psd_power_tol(sum, (p - 1.0) / 2.0, 1e-8) {
        Ok(c) => c.into_matrix().into_dmatrix(),
        Err(_) => return 0.0,
    };
    let nrm = MatrixValue::from_dmatrix(init.clone()).map(|m| matcore::schatten_norm(&m, s).unwrap_or(0.0));
    let mut c = match nrm {
        Ok(n) if n > 0.0 => init / C64::new(n, 0.0),
        _ => return 0.0,
    };
    let am: Vec<&DMatrix<C64>> = a.iter().map(|x| x.as_matrix().as_dmatrix()).collect();
    let mut basis: DMatrix<C64> = DMatrix::identity(d, d);
    let mut best = 0.0f64;
    for _ in 0..DUAL_ITERS {
        let ms: Vec<DMatrix<C64>> = am.iter().map(|x| &c * *x * c.adjoint()).collect();
        let (mut value, mut owner) = assign(&ms, &basis);
        let mut candidates: Vec<DMatrix<C64>> = Vec::with_capacity(ms.len() + 1);
        let mut total = DMatrix::zeros(d, d);
        for m in &ms {
            total += m;
            candidates.push(m.clone());
        }
        candidates.push(total);
        for m in candidates {
            let mv = MatrixValue::from_dmatrix(m).expect("square");
            if let Ok((_, vecs)) = matcore::hermitian_eigh(&mv.hermitian_part()) {
                let (v, o) = assign(&ms, &vecs);
                if v > value {
                    value = v;
                    owner = o;
                    basis = vecs;
                }
            }
        }
        let improved = value > best * (1.0 + 1e-12) + 1e-300;
        best = best.max(value);
        // gradient of Σ tr(Q_n C a_n C*) in C is 2 Σ Q_n C a_n
        let mut g = DMatrix::zeros(d, d);
        for (n, x) in am.iter().enumerate() {
            let mut qn = DMatrix::zeros(d, d);
            for (i, &o) in owner.iter().enumerate() {
                if o == n {
                    let e = basis.column(i);
                    qn += e * e.adjoint();
                }
            }
            g += qn * &c * *x;
        }
        match schatten_ball_argmax(&g, s) {
            Some(next) => c = next,
            None => break,
        }
        if !improved {
            break;
        }
    }
    // evaluate the final iterate exactly as a feasible dual point
    let ms: Vec<DMatrix<C64>> = am.iter().map(|x| &c * *x * c.adjoint()).collect();
    let (value, _) = assign(&ms, &basis);
    let cc = MatrixValue::from_dmatrix(c.adjoint() * &c).expect("square");
    let scale = matcore::psd_trace_power(&cc, q).powf(1.0 / q);
    if scale > 0.0 {
        best.max(value / scale)
    } else {
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridfn::RatInterval;
    use crate::matcore::random;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn r(a: i64, b: i64) -> Rat {
        Rat::new(a, b)
    }

    fn psd_field(grid: GridSpec, d: usize, seed: u64) -> MatrixField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MatrixField::from_fn(grid, d, |_| random::psd(d, &mut rng).into_matrix())
    }

    #[test]
    fn window_average_examples() {
        let grid = GridSpec::new(1, 3).unwrap();
        let c = MatrixField::constant(grid, &MatrixValue::diag(&[3.0]));
        let h = AvgWindow::new(r(1, 4), r(1, 8)).unwrap();
        let avg = window_average(&c, &h).unwrap();
        // interior cells keep the constant
        for i in 10..grid.cell_count() - 10 {
            assert!((avg.cell(i).get(0, 0).re - 3.0).abs() < 1e-14);
        }
        let f = MatrixField::indicator(grid, &RatInterval::new(r(0, 1), r(1, 1)).unwrap(), &MatrixValue::identity(1))
            .unwrap();
        let avg = window_average(&f, &AvgWindow::new(r(1, 1), r(1, 1)).unwrap()).unwrap();
        let at_zero = grid.cell_of(0.0).unwrap();
        assert!((avg.cell(at_zero).get(0, 0).re - 0.5).abs() < 1e-15);
        assert!(AvgWindow::new(r(0, 1), r(1, 1)).is_err());
    }

    #[test]
    fn domination_examples() {
        let grid = GridSpec::new(1, 4).unwrap();
        let (ok, slack) =
            domination_check(&MatrixField::zeros(grid, 2), &AvgWindow::new(r(1, 48), r(1, 48)).unwrap(), 0.0).unwrap();
        assert!(ok && slack == 0.0);
        // single-cell indicator, window of one cell width
        let mut f = MatrixField::zeros(grid, 1);
        f.set_cell(70, &MatrixValue::identity(1));
        let w = AvgWindow::new(grid.cell_width() / 2, grid.cell_width() / 2).unwrap();
        let (ok, slack) = domination_check(&f, &w.snapped(grid).0, 0.0).unwrap();
        assert!(ok, "{slack}");
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for seed in 0..10 {
            let f = psd_field(grid, 3, seed);
            let h1 = rng.random_range(1..40);
            let h2 = rng.random_range(1..40);
            let w = AvgWindow::new(r(h1, 48), r(h2, 48)).unwrap();
            let (ok, slack) = domination_check(&f, &w, 1e-9).unwrap();
            assert!(ok, "{slack}");
        }
    }

    #[test]
    fn bound_field_majorizes() {
        let grid = GridSpec::new(1, 4).unwrap();
        let f = psd_field(grid, 2, 4);
        let windows =
            vec![AvgWindow::new(r(1, 48), r(2, 48)).unwrap(), AvgWindow::new(r(7, 48), r(3, 16)).unwrap()];
        let (big, norm) = maximal_bound_field(&f, &windows, 2.0).unwrap();
        for w in &windows {
            let fh = window_average(&f, w).unwrap();
            for i in 0..f.len() {
                assert!(matcore::min_eig_unchecked(&(&big.cell(i) - &fh.cell(i))) > -1e-12);
            }
        }
        let levels = 2.0;
        let fnorm = gridfn::lp_mixed_norm(&PsdField::new(f.clone()).unwrap(), 2.0).unwrap();
        assert!(norm <= 12.0 * levels * fnorm);
        let (z, zn) = maximal_bound_field(&MatrixField::zeros(grid, 2), &windows, 2.0).unwrap();
        assert_eq!((z.max_abs(), zn), (0.0, 0.0));
        assert!(matches!(maximal_bound_field(&f, &[], 2.0), Err(Error::EmptyFamily)));
    }

    #[test]
    fn poisson_majorization() {
        let grid = GridSpec::new(1, 3).unwrap();
        let (ok, _) = poisson_domination_check(&MatrixField::zeros(grid, 1), 0.1, 0.5, 4, 0.0).unwrap();
        assert!(ok);
        let mut single = MatrixField::zeros(grid, 1);
        single.set_cell(30, &MatrixValue::identity(1));
        for (t, y) in [(0.0, 0.05), (0.2, 0.3), (-0.9, 1.0)] {
            let k = covering_k_max(grid, t, y);
            let (ok, slack) = poisson_domination_check(&single, t, y, k, 0.0).unwrap();
            assert!(ok, "{slack}");
        }
        let f = psd_field(grid, 3, 2);
        let k = covering_k_max(grid, 0.1, 0.25);
        assert!(poisson_domination_check(&f, 0.1, 0.25, k, 1e-9).unwrap().0);
        assert!(poisson_domination_check(&f, 0.1, 0.0, k, 1e-9).is_err());
    }

    #[test]
    fn ncsup_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random::psd(3, &mut rng);
        let b = ncsup_bounds(std::slice::from_ref(&a), 2.0).unwrap();
        let n = matcore::schatten_norm(a.as_matrix(), 2.0).unwrap();
        assert!((b.lower - n).abs() < 1e-10 && (b.upper - n).abs() < 1e-10);

        let e1 = PsdMatrix::new(MatrixValue::diag(&[1.0, 0.0])).unwrap();
        let e2 = PsdMatrix::new(MatrixValue::diag(&[0.0, 1.0])).unwrap();
        let b = ncsup_bounds(&[e1.clone(), e2.clone()], 1.0 + 1e-9).unwrap();
        assert!(b.exact && (b.upper - 2.0).abs() < 1e-6);
        assert!(ncsup_bounds(&[e1, e2], 1.0).is_err());

        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = rng.random_range(2..=4);
            let fam: Vec<PsdMatrix> = (0..rng.random_range(2..5)).map(|_| random::psd(d, &mut rng)).collect();
            let p = [1.5, 2.0, 3.0][seed as usize % 3];
            let b = ncsup_bounds(&fam, p).unwrap();
            assert!(!b.exact);
            assert!(b.lower <= b.upper + 1e-12, "{b:?}");
            let trivial = fam.iter().map(|x| matcore::schatten_norm(x.as_matrix(), p).unwrap()).fold(0.0, f64::max);
            assert!(b.lower >= trivial - 1e-12);
            let dual = dual_ascent(&fam, &fam.iter().fold(MatrixValue::zeros(d), |s, x| s + x.as_matrix().clone()), p);
            assert!(dual <= b.upper * (1.0 + 1e-9), "weak duality {dual} > {}", b.upper);
        }
    }

    #[test]
    fn commuting_fields_are_exact() {
        let grid = GridSpec::new(1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fields: Vec<MatrixField> = (0..3)
            .map(|_| {
                MatrixField::from_fn(grid, 2, |_| {
                    MatrixValue::diag(&[rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
                })
            })
            .collect();
        let b = ncsup_bounds_fields(&fields, 2.0).unwrap();
        assert!(b.exact);
        let w = grid.cell_width_f64();
        let mut direct = 0.0;
        for i in 0..grid.cell_count() {
            for j in 0..2 {
                let m = fields.iter().map(|f| f.cell(i).get(j, j).re).fold(0.0, f64::max);
                direct += w * m * m;
            }
        }
        assert!((b.lower - direct.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn differentiation_examples() {
        let grid = GridSpec::new(1, 4).unwrap();
        let c = MatrixField::constant(grid, &MatrixValue::diag(&[1.0, 2.0]));
        let rep = differentiation_demo(&c, &[0.5, 0.1, 0.01]).unwrap();
        assert!(rep.error.iter().all(|&e| e < 1e-13));
        let step = MatrixField::from_fn(grid, 1, |i| MatrixValue::diag(&[(i / 17) as f64]));
        let rep = differentiation_demo(&step, &[0.004, 0.002]).unwrap();
        assert!(rep.error.iter().all(|&e| e < 1e-12));
        // a resampled ramp: error is O(h) and decreasing
        let ramp = MatrixField::from_fn(grid, 1, |i| MatrixValue::diag(&[grid.cell_center(i)]));
        let rep = differentiation_demo(&ramp, &[0.5, 0.25, 0.125, 0.0625]).unwrap();
        assert!(rep.monotone);
        for (h, e) in rep.h.iter().zip(&rep.error) {
            assert!(*e <= h + grid.cell_width_f64());
        }
        let nc = MatrixField::constant(grid, &MatrixValue::unit(2, 0, 1));
        assert!(matches!(differentiation_demo(&nc, &[0.1]), Err(Error::NonCommuting)));
    }

    #[test]
    fn power_mean_inequality() {
        let grid = GridSpec::new(1, 3).unwrap();
        let f = {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            MatrixField::from_fn(grid, 3, |_| random::gaussian(3, &mut rng))
        };
        let cells: Vec<usize> = (0..grid.cell_count()).step_by(2).take(24).collect();
        for p in [1.0, 1.5, 2.0, 3.0, 5.0] {
            let s = power_mean_slack(&f, &cells, p).unwrap();
            assert!(s >= -1e-9, "p={p}: {s}");
        }
        assert!(power_mean_slack(&f, &cells[..3], 2.0).is_err());
    }
}
