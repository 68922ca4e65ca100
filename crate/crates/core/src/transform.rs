//! The embedding `Φ(f)(x, y, t) = ∇f(x + t, y) χ_Γ(x, y)`, the projection
//! `Ψ(h)(s) = ∫∬_Γ h(x, y, t) · Q_y(x + t - s) dx dy dt` with
//! `Q_y = ∇P_y`, the reproducing identity `ΨΦ = id` on mean-zero fields, the
//! duality-ratio harness and Fourier multipliers on the window torus.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::Serialize;

pub use crate::cone::{ConeField, ConeLayout};

use crate::bmo::{self, BmoMode, Side};
use crate::error::{Error, Result};
use crate::gridfn::{self, GridSpec, MatrixField};
use crate::halfplane;
use crate::matcore::{self, C64};
use crate::net::ConeGrid;
use crate::squarefn;

/// Default net for the transforms: the cone net with one more level at the
/// bottom (`y_min = 2^{-K-5}`).
///
/// Point values of `ΨΦ(f)` at cell centers see the truncation through the
/// kernel `k_Y = 2Y^3 / (π(x^2+Y^2)^2)`, `Y = 2 y_min`, at distance `w/2` from
/// the nearest jump; at `2^{-K-4}` that tail is about 5% per unit jump.
pub fn transform_net(grid: GridSpec) -> Result<ConeGrid> {
    ConeGrid::for_grid(grid, 1)?.with_y_min(2f64.powi(-grid.k() - 5))
}

/// Layout used by `Φ`, `Ψ` and the Hardy norms: t-samples at the cell centers
/// of `(-2^{J+1}, 2^{J+1}]`.
pub fn hardy_layout(grid: GridSpec, net: &ConeGrid) -> Result<Arc<ConeLayout>> {
    Ok(Arc::new(ConeLayout::new(grid, net, 0.0, grid.cell_count() / 2)?))
}

pub fn phi_embed(f: &MatrixField, net: &ConeGrid) -> Result<ConeField> {
    Ok(phi_embed_on(f, hardy_layout(f.grid(), net)?))
}

pub fn phi_embed_on(f: &MatrixField, layout: Arc<ConeLayout>) -> ConeField {
    let mut h = ConeField::zeros(layout.clone(), f.dim());
    layout.visit_samples(f, false, |ri, ci, kt, a, b| {
        let (x, y) = h.get_mut(ri, kt, ci);
        x.copy_from_slice(a);
        y.copy_from_slice(b);
    });
    h
}

/// Output convention of `Ψ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiMode {
    /// Point values at the cell centers.
    CellCenter,
    /// Exact cell averages; this is the adjoint of `Φ` for the grid pairing.
    CellAverage,
}

pub fn psi_project(h: &ConeField) -> MatrixField {
    psi_project_mode(h, PsiMode::CellCenter)
}

pub fn psi_project_mode(h: &ConeField, mode: PsiMode) -> MatrixField {
    let layout = h.layout();
    let grid = layout.grid();
    let d = h.dim();
    let dd = d * d;
    let n = grid.cell_count();
    let w = grid.cell_width_f64();
    let t_first = layout.t_at(-(layout.ext_t() as isize));
    let mut out = vec![C64::new(0.0, 0.0); n * dd];
    for (ri, row) in layout.rows().iter().enumerate() {
        // group the samples by u = t + x, which is all the kernel sees
        let kts = layout.row_t_count(row);
        let k_lo = row.u_index(0, row.cells[0].r);
        let k_hi = row.u_index(kts - 1, row.cells[row.cells.len() - 1].r);
        let len = (k_hi - k_lo + 1) as usize;
        let mut acc = vec![C64::new(0.0, 0.0); len * 2 * dd];
        let data = h.row_data(ri);
        let cells = row.cells.len();
        let dt = w / row.sub as f64;
        for kt in 0..kts {
            for (ci, c) in row.cells.iter().enumerate() {
                let u = (row.u_index(kt, c.r) - k_lo) as usize;
                let src = &data[(kt * cells + ci) * 2 * dd..(kt * cells + ci + 1) * 2 * dd];
                let dst = &mut acc[u * 2 * dd..(u + 1) * 2 * dd];
                let s = dt * c.area;
                dst.iter_mut().zip(src).for_each(|(a, b)| *a += b * s);
            }
        }
        let du = w / row.sub as f64;
        let y = row.y;
        for (u_idx, block) in acc.chunks(2 * dd).enumerate() {
            if block.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                continue;
            }
            let u = t_first + (k_lo + u_idx as i64) as f64 * du;
            let (h1, h2) = block.split_at(dd);
            for j in 0..n {
                let (q1, q2) = match mode {
                    PsiMode::CellCenter => {
                        let z = u - grid.cell_center(j);
                        let r2 = z * z + y * y;
                        (2.0 * y * (-z) / (PI * r2 * r2), (z * z - y * y) / (PI * r2 * r2))
                    }
                    PsiMode::CellAverage => {
                        let (a, b) = grid.cell_bounds(j);
                        let (za, zb) = (u - a, u - b);
                        let (ra, rb) = (za * za + y * y, zb * zb + y * y);
                        ((y / ra - y / rb) / (PI * w), (zb / rb - za / ra) / (PI * w))
                    }
                };
                let o = &mut out[j * dd..(j + 1) * dd];
                for q in 0..dd {
                    o[q] += h1[q] * q1 + h2[q] * q2;
                }
            }
        }
    }
    MatrixField::from_data(grid, d, out).expect("block layout matches the grid")
}

/// `‖ΨΦ(f) - f‖_2 / ‖f‖_2` on a given net.
pub fn psiphi_error_on(f: &MatrixField, net: &ConeGrid) -> Result<f64> {
    let norm = f.l2_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let back = psi_project(&phi_embed(f, net)?);
    Ok(back.sub(f)?.l2_norm() / norm)
}

/// Relative reconstruction error at the default transform net.
pub fn psiphi_identity_error(f: &MatrixField) -> Result<f64> {
    if f.l2_norm() == 0.0 {
        return Ok(0.0);
    }
    let mean = f.integral().frobenius();
    if mean > 1e-9 * f.l2_norm() * (2.0 * f.grid().half_width()).sqrt() {
        return Err(Error::NonzeroMean(mean));
    }
    psiphi_error_on(f, &transform_net(f.grid())?)
}

/// Ratio `‖Ψ(h)‖_{BMO_c} / ‖h‖_{L^∞(L^2_c)}` for one cone field.
pub fn psi_bmo_ratio(h: &ConeField, mode: BmoMode) -> Result<f64> {
    let denom = h.norm(f64::INFINITY)?;
    if denom == 0.0 {
        return Ok(0.0);
    }
    let psi = psi_project_mode(h, PsiMode::CellAverage);
    Ok(bmo::bmo_norm(&psi, Side::Column, mode)?.value() / denom)
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityConfig {
    pub dims: Vec<usize>,
    pub j: i32,
    pub k: i32,
    pub pairs: usize,
    pub seed: u64,
    /// Exponents `p < 2` for the `H^p_c` / `BMO^q_c` analogue (`1/p + 1/q = 1`).
    pub p_values: Vec<f64>,
}

impl Default for DualityConfig {
    fn default() -> Self {
        Self { dims: vec![1, 2, 4], j: 1, k: 3, pairs: 8, seed: 0, p_values: vec![1.5] }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityRow {
    pub d: usize,
    pub p: f64,
    /// Largest ratio with the certified lower estimate of the BMO-type norm in
    /// the denominator (so an upper estimate of the ratio).
    pub max_ratio: f64,
    pub mean_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub rows: Vec<DualityRow>,
    /// Set when the `p = 1` maximum grows by more than half from the smallest
    /// to the largest dimension.
    pub growth_flag: bool,
}

/// `|tr ∫ φ* f|` over `‖φ‖_{BMO_c} ‖f‖_{H^1_c}` (and the `p < 2` analogue)
/// on seeded Gaussian pairs with mean-zero `f`.
pub fn duality_constant_harness(cfg: &DualityConfig) -> Result<DualityReport> {
    if cfg.pairs == 0 || cfg.dims.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let grid = GridSpec::new(cfg.j, cfg.k)?;
    let net = ConeGrid::for_grid(grid, 1)?;
    let mut rows = Vec::new();
    for &d in &cfg.dims {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((d as u64) << 32));
        let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); 1 + cfg.p_values.len()];
        for _ in 0..cfg.pairs {
            let phi = MatrixField::from_fn(grid, d, |_| matcore::random::gaussian(d, &mut rng));
            let f = MatrixField::from_fn(grid, d, |_| matcore::random::gaussian(d, &mut rng)).centered();
            let pair = gridfn::scalar_pairing(&phi, &f)?.norm();
            let bmo1 = bmo::bmo_norm(&phi, Side::Column, BmoMode::AllGridIntervals)?.value();
            let h1 = squarefn::hardy_norm(&f, 1.0, Side::Column, &net)?;
            ratios[0].push(duality_ratio(pair, bmo1, h1)?);
            for (slot, &p) in cfg.p_values.iter().enumerate() {
                let q = p / (p - 1.0);
                let bq = bmo::bmo_q_norm(&phi, q, Side::Column)?;
                let hp = squarefn::hardy_norm(&f, p, Side::Column, &net)?;
                ratios[slot + 1].push(duality_ratio(pair, bq.lower, hp)?);
            }
        }
        for (slot, rs) in ratios.iter().enumerate() {
            let p = if slot == 0 { 1.0 } else { cfg.p_values[slot - 1] };
            let max_ratio = rs.iter().cloned().fold(0.0, f64::max);
            let mean_ratio = rs.iter().sum::<f64>() / rs.len() as f64;
            rows.push(DualityRow { d, p, max_ratio, mean_ratio });
        }
    }
    let ones: Vec<&DualityRow> = rows.iter().filter(|r| r.p == 1.0).collect();
    let growth_flag = match (ones.first(), ones.last()) {
        (Some(a), Some(b)) if ones.len() > 1 => b.max_ratio > 1.5 * a.max_ratio,
        _ => false,
    };
    Ok(DualityReport { rows, growth_flag })
}

/// `pair / (bmo * hardy)`, zero when the pairing vanishes.
pub fn duality_ratio(pair: f64, bmo_norm: f64, hardy: f64) -> Result<f64> {
    if pair == 0.0 {
        return Ok(0.0);
    }
    if !(bmo_norm > 0.0) || !(hardy > 0.0) {
        return Err(Error::InvalidParameter("degenerate pair in the duality ratio".into()));
    }
    Ok(pair / (bmo_norm * hardy))
}

/// Fourier symbol on the discrete frequencies `0..n` of the window torus.
#[derive(Clone, Debug, PartialEq)]
pub enum Symbol {
    /// `-i sign(ξ)` with `ξ = k` for `k < n/2` and `k - n` otherwise.
    Hilbert,
    Values(Vec<C64>),
}

impl Symbol {
    /// Parses `index re im` lines (`#` comments allowed); indices may be
    /// negative and are taken modulo the length.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let mut vals = vec![None; n];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: &str| Error::Parse { line: lineno + 1, msg: msg.to_string() };
            if parts.len() != 3 {
                return Err(bad("expected `index re im`"));
            }
            let k: i64 = parts[0].parse().map_err(|_| bad("bad frequency index"))?;
            let re: f64 = parts[1].parse().map_err(|_| bad("bad real part"))?;
            let im: f64 = parts[2].parse().map_err(|_| bad("bad imaginary part"))?;
            let slot = k.rem_euclid(n as i64) as usize;
            if vals[slot].replace(C64::new(re, im)).is_some() {
                return Err(bad("duplicate frequency"));
            }
        }
        let got = vals.iter().filter(|v| v.is_some()).count();
        if got != n {
            return Err(Error::LengthMismatch { expected: n, got });
        }
        Ok(Symbol::Values(vals.into_iter().map(|v| v.unwrap()).collect()))
    }

    pub fn values(&self, n: usize) -> Result<Vec<C64>> {
        match self {
            Symbol::Hilbert => Ok((0..n)
                .map(|k| {
                    let xi = if 2 * k < n { k as i64 } else { k as i64 - n as i64 };
                    C64::new(0.0, -(xi.signum() as f64))
                })
                .collect()),
            Symbol::Values(v) if v.len() == n => Ok(v.clone()),
            Symbol::Values(v) => Err(Error::LengthMismatch { expected: n, got: v.len() }),
        }
    }
}

/// Entrywise DFT over the cells, multiplication by the symbol, inverse DFT.
pub fn multiplier_apply(f: &MatrixField, m: &Symbol) -> Result<MatrixField> {
    let n = f.len();
    let d = f.dim();
    let dd = d * d;
    let sym = m.values(n)?;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut out = vec![C64::new(0.0, 0.0); n * dd];
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for q in 0..dd {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = f.block(i)[q];
        }
        fwd.process(&mut buf);
        buf.iter_mut().zip(&sym).for_each(|(b, s)| *b *= s);
        inv.process(&mut buf);
        for (i, b) in buf.iter().enumerate() {
            out[i * dd + q] = b / n as f64;
        }
    }
    MatrixField::from_data(f.grid(), d, out)
}

/// Empirical `‖M φ‖_{BMO_c} / ‖φ‖_{BMO_c}`.
pub fn multiplier_bmo_ratio(phi: &MatrixField, m: &Symbol, mode: BmoMode) -> Result<f64> {
    let base = bmo::bmo_norm(phi, Side::Column, mode)?.value();
    if base == 0.0 {
        return Ok(0.0);
    }
    Ok(bmo::bmo_norm(&multiplier_apply(phi, m)?, Side::Column, mode)?.value() / base)
}

/// Poisson-extension gradient of `f` at the sample points of `h`, as a cone
/// field; the adjoint partner of [`PsiMode::CellAverage`].
pub fn phi_like(h: &ConeField, f: &MatrixField) -> Result<ConeField> {
    if h.layout().grid() != f.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(phi_embed_on(f, h.layout().clone()))
}

/// Direct gradient at one point, for oracles.
pub fn gradient_at(f: &MatrixField, x: f64, y: f64) -> Result<halfplane::GradPair> {
    halfplane::gradient(f, x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::MatrixValue;

    fn haar(grid: GridSpec) -> MatrixField {
        let one = MatrixValue::identity(1);
        MatrixField::from_fn(grid, 1, |i| {
            let t = grid.cell_center(i);
            if t > -1.0 && t <= 0.0 {
                one.clone()
            } else if t > 0.0 && t <= 1.0 {
                one.scale(-1.0)
            } else {
                MatrixValue::zeros(1)
            }
        })
    }

    fn random_mean_zero(grid: GridSpec, d: usize, seed: u64) -> MatrixField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MatrixField::from_fn(grid, d, |_| matcore::random::gaussian(d, &mut rng)).centered()
    }

    #[test]
    fn zero_in_zero_out() {
        let grid = GridSpec::new(1, 2).unwrap();
        let net = ConeGrid::for_grid(grid, 0).unwrap();
        let h = phi_embed(&MatrixField::zeros(grid, 2), &net).unwrap();
        assert_eq!(h.norm(2.0).unwrap(), 0.0);
        assert_eq!(psi_project(&h).max_abs(), 0.0);
        assert_eq!(psiphi_identity_error(&MatrixField::zeros(grid, 1)).unwrap(), 0.0);
    }

    #[test]
    fn phi_is_linear() {
        let grid = GridSpec::new(1, 2).unwrap();
        let net = ConeGrid::for_grid(grid, 0).unwrap();
        let f = random_mean_zero(grid, 2, 1);
        let g = random_mean_zero(grid, 2, 2);
        let lhs = phi_embed(&f.scale(2.0).add(&g).unwrap(), &net).unwrap();
        let rhs = phi_embed(&f, &net).unwrap().scale(2.0).add(&phi_embed(&g, &net).unwrap()).unwrap();
        let diff = lhs.add(&rhs.scale(-1.0)).unwrap().norm(2.0).unwrap();
        assert!(diff < 1e-10 * rhs.norm(2.0).unwrap());
    }

    #[test]
    fn phi_norm_is_the_hardy_norm() {
        let grid = GridSpec::new(1, 3).unwrap();
        let net = ConeGrid::for_grid(grid, 1).unwrap();
        let f = random_mean_zero(grid, 2, 4);
        let h = phi_embed(&f, &net).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let a = h.norm(p).unwrap();
            let b = squarefn::hardy_norm(&f, p, Side::Column, &net).unwrap();
            assert!((a - b).abs() <= 1e-12 * b, "p={p}: {a} vs {b}");
        }
    }

    #[test]
    fn cell_average_psi_is_the_adjoint_of_phi() {
        let grid = GridSpec::new(1, 2).unwrap();
        let net = ConeGrid::for_grid(grid, 0).unwrap();
        let layout = hardy_layout(grid, &net).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..3 {
            let h = ConeField::random(layout.clone(), 2, &mut rng);
            let g = MatrixField::from_fn(grid, 2, |_| matcore::random::gaussian(2, &mut rng));
            let lhs = gridfn::scalar_pairing(&psi_project_mode(&h, PsiMode::CellAverage), &g).unwrap();
            let rhs = h.inner(&phi_like(&h, &g).unwrap()).unwrap();
            assert!((lhs - rhs).norm() < 1e-9 * rhs.norm().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn psiphi_reproduces_haar() {
        let grid = GridSpec::new(1, 3).unwrap();
        let f = haar(grid);
        let net = transform_net(grid).unwrap();
        let e0 = psiphi_error_on(&f, &net).unwrap();
        let e1 = psiphi_error_on(&f, &net.refined()).unwrap();
        assert!(e0 <= 0.05, "{e0}");
        assert!(e1 < e0, "{e1} >= {e0}");
    }

    #[test]
    fn psiphi_reproduces_random_field() {
        let grid = GridSpec::new(1, 3).unwrap();
        let f = random_mean_zero(grid, 3, 11);
        let e = psiphi_identity_error(&f).unwrap();
        assert!(e <= 0.05, "{e}");
        assert!(psiphi_identity_error(&f.add_constant(&MatrixValue::identity(3))).is_err());
    }

    #[test]
    fn multiplier_identity_and_hilbert_square() {
        let grid = GridSpec::new(1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = MatrixField::from_fn(grid, 2, |_| matcore::random::gaussian(2, &mut rng));
        let n = f.len();
        let one = Symbol::Values(vec![C64::new(1.0, 0.0); n]);
        assert!(multiplier_apply(&f, &one).unwrap().sub(&f).unwrap().max_abs() < 1e-10);
        let hh = multiplier_apply(&multiplier_apply(&f, &Symbol::Hilbert).unwrap(), &Symbol::Hilbert).unwrap();
        let mean = f.integral().scale(1.0 / (2.0 * grid.half_width()));
        let expect = f.add_constant(&mean.scale(-1.0)).scale(-1.0);
        assert!(hh.sub(&expect).unwrap().max_abs() < 1e-8);
        assert!(multiplier_apply(&f, &Symbol::Values(vec![C64::new(1.0, 0.0); 3])).is_err());
    }

    #[test]
    fn hilbert_matches_direct_convolution() {
        let grid = GridSpec::new(0, 2).unwrap();
        let n = grid.cell_count();
        let f = MatrixField::from_fn(grid, 1, |i| MatrixValue::identity(1).scale(if (i / 3) % 2 == 0 { 1.0 } else { -1.0 }));
        let got = multiplier_apply(&f, &Symbol::Hilbert).unwrap();
        // kernel h_m = (1/n) Σ_k m_k e^{2πikm/n}, summed directly
        let sym = Symbol::Hilbert.values(n).unwrap();
        let kernel: Vec<C64> = (0..n)
            .map(|m| {
                (0..n).map(|k| sym[k] * C64::from_polar(1.0, 2.0 * PI * (k * m) as f64 / n as f64)).sum::<C64>()
                    / n as f64
            })
            .collect();
        for i in 0..n {
            let direct: C64 = (0..n).map(|j| kernel[(i + n - j) % n] * f.block(j)[0]).sum();
            assert!((direct - got.block(i)[0]).norm() < 1e-10);
        }
    }

    #[test]
    fn symbol_file_round_trip() {
        let text = "# identity on 4 points\n0 1 0\n1 1 0\n-2 1 0\n-1 1 0\n";
        let s = Symbol::parse(text, 4).unwrap();
        assert_eq!(s.values(4).unwrap(), vec![C64::new(1.0, 0.0); 4]);
        assert!(matches!(Symbol::parse("0 1 0\n", 4), Err(Error::LengthMismatch { .. })));
        assert!(matches!(Symbol::parse("0 1\n", 1), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn duality_ratio_basics() {
        assert_eq!(duality_ratio(0.0, 0.0, 1.0).unwrap(), 0.0);
        let grid = GridSpec::new(1, 2).unwrap();
        let net = ConeGrid::for_grid(grid, 0).unwrap();
        let f = random_mean_zero(grid, 2, 3);
        let phi = MatrixField::constant(grid, &MatrixValue::identity(2));
        let pair = gridfn::scalar_pairing(&phi, &f).unwrap().norm();
        assert!(pair < 1e-12);
        // homogeneity
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let phi = MatrixField::from_fn(grid, 2, |_| matcore::random::gaussian(2, &mut rng));
        let r = |phi: &MatrixField, f: &MatrixField| {
            let pair = gridfn::scalar_pairing(phi, f).unwrap().norm();
            let b = bmo::bmo_norm(phi, Side::Column, BmoMode::AllGridIntervals).unwrap().value();
            duality_ratio(pair, b, squarefn::hardy_norm(f, 1.0, Side::Column, &net).unwrap()).unwrap()
        };
        let (a, b) = (r(&phi, &f), r(&phi.scale(3.0), &f.scale(0.25)));
        assert!((a - b).abs() < 1e-9 * a);
    }
}
