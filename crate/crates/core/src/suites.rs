//! Verification suites behind `ncfa verify` and the acceptance tests.
//!
//! Every suite reads an [`ExperimentConfig`], draws its members from
//! [`member_rng`] streams, and returns the reports it produced together with
//! the hard checks that decide the exit code.

use rand::Rng;
use serde::Serialize;

use crate::atomdec;
use crate::bmo::{self, BmoMode, Side, DYADIC_PAIR_CONSTANT};
use crate::cone::{mixed_norm_of_squares, ConeField};
use crate::config::ExperimentConfig;
use crate::dyadic::{self, FiltrationId};
use crate::ensemble::{exact_mean_zero, gaussian_field, martingale_field, member_rng, psd_field, random_atom};
use crate::error::{Error, Result};
use crate::gridfn::{self, GridSpec, MatrixField, Rat, RatInterval};
use crate::halfplane;
use crate::matcore::{self, random, MatrixValue};
use crate::maximal::{self, AvgWindow};
use crate::net::ConeGrid;
use crate::report::NormReport;
use crate::squarefn;
use crate::transform::{self, DualityConfig, Symbol};

/// Suite names accepted by [`run_suite`], in the order `all` runs them.
pub const SUITES: [&str; 12] = [
    "green",
    "cover",
    "domination",
    "lemma25",
    "carleson",
    "bmo-intersection",
    "duality",
    "atoms",
    "psiphi",
    "sg-equivalence",
    "hansen",
    "multiplier",
];

/// Largest `K` used by the cone-transform suites (`psiphi`, `sg-equivalence`,
/// `duality`), whose cost grows like `4^K`.
pub const TRANSFORM_K_CAP: i32 = 4;

/// Largest `max/min` ratio across dimensions accepted as "stable".
pub const STABILITY_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct SuiteOutcome {
    pub reports: Vec<NormReport>,
    pub checks: Vec<Check>,
}

impl SuiteOutcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn assert(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(Check { name: name.to_string(), pass, detail });
    }

    fn push(&mut self, r: NormReport) {
        self.reports.push(r);
    }

    fn extend(&mut self, other: SuiteOutcome) {
        self.reports.extend(other.reports);
        self.checks.extend(other.checks);
    }
}

/// Runs the configured suite (or every suite for `all`).
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    cfg.validate()?;
    if cfg.suite == "all" {
        let mut out = SuiteOutcome::default();
        for name in SUITES {
            out.extend(run_named(name, cfg)?);
        }
        return Ok(out);
    }
    run_named(&cfg.suite, cfg)
}

fn run_named(name: &str, cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    match name {
        "green" => green(cfg),
        "cover" => cover(cfg),
        "domination" => domination(cfg),
        "lemma25" => lemma25(cfg),
        "carleson" => carleson(cfg),
        "bmo-intersection" => bmo_intersection(cfg),
        "duality" => duality(cfg),
        "atoms" => atoms(cfg),
        "psiphi" => psiphi(cfg),
        "sg-equivalence" => sg_equivalence(cfg),
        "hansen" => hansen(cfg),
        "multiplier" => multiplier(cfg),
        other => Err(Error::UnknownSuite(other.to_string())),
    }
}

fn capped(cfg: &ExperimentConfig, cap: i32) -> Result<GridSpec> {
    GridSpec::new(cfg.j, cfg.k.min(cap))
}

/// `max/min` of positive per-dimension values; infinite when a value is zero
/// or not finite.
pub fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(0.0, f64::max);
    if !(lo > 0.0) || !hi.is_finite() {
        return f64::INFINITY;
    }
    hi / lo
}

fn stability_check(out: &mut SuiteOutcome, name: &str, per_dim: &[(usize, f64)]) {
    let vals: Vec<f64> = per_dim.iter().map(|p| p.1).collect();
    let s = spread(&vals);
    let listing: Vec<String> = per_dim.iter().map(|(d, v)| format!("d={d}: {v:.4}")).collect();
    out.assert(name, s <= STABILITY_FACTOR, format!("{} (max/min {s:.3})", listing.join(", ")));
}

/// Green identity `2 ∬ |∇f|^2 y = ∫ |f|^2` on mean-zero members.
pub fn green(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let grid = cfg.grid()?;
    let net = ConeGrid::for_grid(grid, cfg.cone_refine)?;
    let tol = cfg.tol("green", 0.02);
    let mut out = SuiteOutcome::default();
    let mut worst = 0.0f64;
    let mut tail = 0.0f64;
    for i in 0..cfg.ensemble {
        let d = cfg.member_dim(i);
        let mut rng = member_rng(cfg.seed, i as u64);
        let f = exact_mean_zero(&gaussian_field(grid, d, &mut rng));
        let g = halfplane::green_energy(&f, &net)?;
        let rel = (g.energy - g.l2sq).abs() / g.l2sq;
        worst = worst.max(rel);
        tail = tail.max(g.tail_estimate / g.l2sq);
    }
    out.push(
        NormReport::quadrature("green_max_relative_error", worst, tail)
            .with_seed(cfg.seed)
            .with_grid(grid)
            .with_net(net.describe())
            .with_note(format!("{} members", cfg.ensemble)),
    );
    out.assert("green", worst <= tol, format!("max |energy - l2sq| / l2sq = {worst:.3e}, tol {tol}"));
    Ok(out)
}

/// Exhaustive covering check over every grid-aligned subinterval of `W`.
pub fn cover(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let grid = cfg.grid()?;
    let upo = grid.units_per_one();
    let o = grid.origin_units();
    let n = grid.cell_count() as i64;
    let (mut checked, mut failures, mut primed) = (0u64, 0u64, 0u64);
    let mut worst = Rat::from_integer(0);
    for a in 0..n {
        for b in a + 1..=n {
            let iv = RatInterval::new(Rat::new(o + a, upo), Rat::new(o + b, upo))?;
            let atom = dyadic::cover(&iv)?;
            let ratio = atom.len() / iv.len();
            checked += 1;
            if !atom.interval.contains_interval(&iv) || ratio > Rat::from_integer(6) {
                failures += 1;
            }
            if atom.filtration == FiltrationId::DPrime {
                primed += 1;
            }
            worst = worst.max(ratio);
        }
    }
    // endpoints of D_n and D'_n stay at least 1/(3·2^n) apart
    let mut separated = true;
    for lvl in -cfg.j..=cfg.k {
        let span = 3i64 << (cfg.j + lvl);
        let pts = dyadic::level_endpoints(lvl, -span, span);
        separated &= pts.windows(2).all(|w| w[1] - w[0] >= 1);
    }
    let mut out = SuiteOutcome::default();
    let worst_f = *worst.numer() as f64 / *worst.denom() as f64;
    for (name, v) in [
        ("cover_intervals", checked as f64),
        ("cover_failures", failures as f64),
        ("cover_dprime_share", primed as f64 / checked as f64),
        ("cover_max_length_ratio", worst_f),
    ] {
        out.push(NormReport::exact(name, v).with_grid(grid));
    }
    out.assert(
        "cover",
        failures == 0 && separated,
        format!("{checked} intervals, {failures} failures, max |A|/|I| = {worst}, endpoint separation {separated}"),
    );
    Ok(out)
}

/// Log-uniform grid-aligned window `(t - h1, t + h2]` with `h1, h2` between
/// one cell and the window length.
pub fn random_window<R: Rng + ?Sized>(grid: GridSpec, rng: &mut R) -> Result<AvgWindow> {
    let upo = grid.units_per_one();
    let max = grid.cell_count() as f64;
    let mut draw = || (max.powf(rng.random_range(0.0..1.0))).floor().max(1.0) as i64;
    AvgWindow::new(Rat::new(draw(), upo), Rat::new(draw(), upo))
}

/// `f_h ⪯ 6 (E(f|D_N) + E(f|D'_N))` for psd members and random windows.
pub fn domination(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let grid = cfg.grid()?;
    let tol = cfg.tol("domination", 1e-9);
    let windows_per = 12;
    let mut worst = f64::INFINITY;
    let mut majorized = true;
    let mut max_norm = 0.0f64;
    for i in 0..cfg.ensemble {
        let d = cfg.member_dim(i);
        let mut rng = member_rng(cfg.seed, i as u64);
        let f = psd_field(grid, d, &mut rng);
        let windows: Vec<AvgWindow> = (0..windows_per).map(|_| random_window(grid, &mut rng)).collect::<Result<_>>()?;
        for h in &windows {
            let (_, slack) = maximal::domination_check(&f, h, tol)?;
            worst = worst.min(slack);
        }
        // the summed field bounds every f_h at once
        let (big, norm) = maximal::maximal_bound_field(&f, &windows, 2.0)?;
        max_norm = max_norm.max(norm / f.l2_norm().max(f64::MIN_POSITIVE));
        for h in &windows {
            let fh = maximal::window_average(&f, h)?;
            for c in 0..f.len() {
                majorized &= matcore::min_eig_unchecked(&(&big.cell(c) - &fh.cell(c))) >= -tol;
            }
        }
    }
    let mut out = SuiteOutcome::default();
    out.push(NormReport::exact("domination_min_slack", worst).with_seed(cfg.seed).with_grid(grid));
    out.push(
        NormReport::exact("maximal_bound_l2_over_l2", max_norm)
            .with_seed(cfg.seed)
            .with_grid(grid)
            .with_note("max over members of ‖F‖_2 / ‖f‖_2"),
    );
    out.assert(
        "domination",
        worst >= -tol && majorized,
        format!("{} members x {windows_per} windows, min eigen-slack {worst:.3e}, summed bound majorizes: {majorized}", cfg.ensemble),
    );
    Ok(out)
}

/// Heights `2^-3, ..., 2` of the `g`/area comparison.
pub const LEMMA25_HEIGHTS: [f64; 5] = [0.125, 0.25, 0.5, 1.0, 2.0];

/// `G^2(f)(x, y) ⪯ 8 S^2(f)(x, y/2)` at every cell center and height.
pub fn lemma25(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let grid = cfg.grid()?;
    let net = ConeGrid::for_grid(grid, cfg.cone_refine)?;
    let eps = cfg.tol("lemma25", 1e-3);
    let mut worst = f64::INFINITY;
    let mut failed = 0usize;
    for i in 0..cfg.ensemble {
        let d = cfg.member_dim(i);
        let mut rng = member_rng(cfg.seed, i as u64);
        let f = gaussian_field(grid, d, &mut rng);
        let rep = squarefn::lemma25_check(&f, Side::Column, &LEMMA25_HEIGHTS, &net, eps)?;
        worst = rep.worst_slack.iter().cloned().fold(worst, f64::min);
        failed += usize::from(!rep.pass);
    }
    let mut out = SuiteOutcome::default();
    out.push(
        NormReport::quadrature("lemma25_min_relative_slack", worst, eps)
            .with_seed(cfg.seed)
            .with_grid(grid)
            .with_net(net.describe()),
    );
    out.assert("lemma25", failed == 0, format!("{failed} of {} members fail, min slack / tr G^2 = {worst:.3e}, eps {eps}", cfg.ensemble));
    Ok(out)
}

/// `N(λ_φ) / ‖φ‖_BMO^2` and its inverse on martingale BMO samples, per
/// dimension, plus the quadratic homogeneity of `N`.
pub fn carleson(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let grid = cfg.grid()?;
    let net = ConeGrid::for_grid(grid, cfg.cone_refine)?;
    let tol = cfg.tol("carleson", 0.03);
    let mut out = SuiteOutcome::default();
    let (mut up, mut down) = (Vec::new(), Vec::new());
    for d in cfg.harness_dims() {
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for i in 0..cfg.ensemble {
            let mut rng = member_rng(cfg.seed ^ ((d as u64) << 40), i as u64);
            let phi = martingale_field(grid, d, 1.0, &mut rng)?;
            let b = bmo::bmo_norm(&phi, Side::Column, BmoMode::AllGridIntervals)?.value();
            let n = bmo::carleson_sup(&phi, &net, BmoMode::AllGridIntervals)?.value();
            if b > 0.0 && n > 0.0 {
                hi = hi.max(n / (b * b));
                lo = lo.max(b * b / n);
            }
        }
        for (name, v) in [("carleson_over_bmo_sq", hi), ("bmo_sq_over_carleson", lo)] {
            out.push(
                NormReport::quadrature(format!("{name}_d{d}"), v, tol)
                    .with_seed(cfg.seed)
                    .with_grid(grid)
                    .with_net(net.describe())
                    .with_note("empirical constant, max over members"),
            );
        }
        up.push((d, hi));
        down.push((d, lo));
    }
    stability_check(&mut out, "carleson_stable", &up);
    stability_check(&mut out, "carleson_inverse_stable", &down);

    let mut rng = member_rng(cfg.seed, u64::MAX);
    let phi = gaussian_field(grid, cfg.d, &mut rng);
    let a = bmo::carleson_sup(&phi, &net, BmoMode::AllGridIntervals)?.value();
    let b = bmo::carleson_sup(&phi.scale(-3.0), &net, BmoMode::AllGridIntervals)?.value();
    let rel = (b - 9.0 * a).abs() / (9.0 * a);
    out.assert("carleson_homogeneous", rel <= 1e-10, format!("N(-3φ) / 9N(φ) - 1 = {rel:.2e}"));
    Ok(out)
}

fn bmo_member(cfg: &ExperimentConfig, grid: GridSpec, i: usize) -> Result<MatrixField> {
    let d = cfg.member_dim(i);
    let mut rng = member_rng(cfg.seed, i as u64);
    if i.is_multiple_of(2) {
        martingale_field(grid, d, 1.0, &mut rng)
    } else {
        Ok(gaussian_field(grid, d, &mut rng))
    }
}

/// Members used for the `BMO^q` comparison (the noncommutative maximal bounds
/// are the slow part of this suite).
pub const BMO_Q_MEMBERS: usize = 4;

/// `q = ∞`: `max(D, D') ≤ full ≤ 4√3 max(D, D')`. `q = 4`: the window-family
/// value against the dyadic values, per dimension.
pub fn bmo_intersection(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let mut out = bmo_dyadic_comparison(cfg)?;
    out.extend(bmo_q_comparison(cfg)?);
    Ok(out)
}

/// The `q = ∞` half of [`bmo_intersection`].
pub fn bmo_dyadic_comparison(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let grid = cfg.grid()?;
    let mut out = SuiteOutcome::default();
    let (mut trivial_fail, mut reverse_fail) = (0usize, 0usize);
    let mut worst_ratio = 0.0f64;
    for i in 0..cfg.ensemble {
        let phi = bmo_member(cfg, grid, i)?;
        let full = bmo::bmo_norm(&phi, Side::Column, BmoMode::AllGridIntervals)?.value();
        let dy = bmo::bmo_norm(&phi, Side::Column, BmoMode::DyadicPair)?;
        trivial_fail += usize::from(dy.lower > full);
        reverse_fail += usize::from(full > DYADIC_PAIR_CONSTANT * dy.lower);
        if dy.lower > 0.0 {
            worst_ratio = worst_ratio.max(full / dy.lower);
        }
    }
    out.push(
        NormReport::exact("bmo_full_over_dyadic_max", worst_ratio)
            .with_seed(cfg.seed)
            .with_grid(grid)
            .with_note(format!("reverse constant {DYADIC_PAIR_CONSTANT:.4}")),
    );
    out.assert("bmo_trivial", trivial_fail == 0, format!("{trivial_fail} of {} members with dyadic > full", cfg.ensemble));
    out.assert(
        "bmo_reverse",
        reverse_fail == 0,
        format!("{reverse_fail} of {} members with full > 4√3 dyadic, max full/dyadic {worst_ratio:.4}", cfg.ensemble),
    );
    Ok(out)
}

/// The `q = 4` half of [`bmo_intersection`]: window-family upper bound over
/// the dyadic lower bound, per dimension.
pub fn bmo_q_comparison(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let grid = cfg.grid()?;
    let mut out = SuiteOutcome::default();
    let q = 4.0;
    let mut per_dim = Vec::new();
    for d in cfg.harness_dims() {
        let mut worst = 0.0f64;
        for i in 0..cfg.ensemble.min(BMO_Q_MEMBERS) {
            let mut rng = member_rng(cfg.seed ^ ((d as u64) << 40), i as u64);
            let phi = martingale_field(grid, d, 1.0, &mut rng)?;
            let win = bmo::bmo_q_norm(&phi, q, Side::Column)?;
            let mut dy_lo = 0.0f64;
            for filtration in FiltrationId::both() {
                dy_lo = dy_lo.max(dyadic::dyadic_bmo_q_norm(&phi, q, filtration, Side::Column)?.lower);
            }
            if dy_lo > 0.0 {
                worst = worst.max(win.upper / dy_lo);
            }
        }
        out.push(
            NormReport::exact(format!("bmo_q4_window_over_dyadic_d{d}"), worst)
                .with_seed(cfg.seed)
                .with_grid(grid)
                .with_note("upper window bound over lower dyadic bound, max over members"),
        );
        per_dim.push((d, worst));
    }
    stability_check(&mut out, "bmo_q_stable", &per_dim);
    Ok(out)
}

/// Duality ratios `|tr ∫ φ* f| / (‖φ‖ ‖f‖)` for `H^1_c`/`BMO_c` and
/// `H^p_c`/`BMO^q_c`, and `‖Ψ(h)‖_BMO / ‖h‖_∞` on random cone fields.
pub fn duality(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let grid = capped(cfg, TRANSFORM_K_CAP.min(3))?;
    let dims = cfg.harness_dims();
    let pairs = cfg.ensemble.min(8);
    let rep = transform::duality_constant_harness(&DualityConfig {
        dims: dims.clone(),
        j: grid.j(),
        k: grid.k(),
        pairs,
        seed: cfg.seed,
        p_values: vec![1.5],
    })?;
    let mut out = SuiteOutcome::default();
    let net = ConeGrid::for_grid(grid, 1)?;
    let mut p_values: Vec<f64> = rep.rows.iter().map(|r| r.p).collect();
    p_values.sort_by(f64::total_cmp);
    p_values.dedup();
    for &p in &p_values {
        let per_dim: Vec<(usize, f64)> = rep.rows.iter().filter(|r| r.p == p).map(|r| (r.d, r.max_ratio)).collect();
        for r in rep.rows.iter().filter(|r| r.p == p) {
            out.push(
                NormReport::quadrature(format!("duality_ratio_p{p}_d{}", r.d), r.max_ratio, 0.0)
                    .with_seed(cfg.seed)
                    .with_grid(grid)
                    .with_net(net.describe())
                    .with_note(format!("mean {:.4} over {pairs} pairs", r.mean_ratio)),
            );
        }
        stability_check(&mut out, &format!("duality_stable_p{p}"), &per_dim);
    }
    out.push(NormReport::exact("duality_growth_flag", f64::from(u8::from(rep.growth_flag))).with_seed(cfg.seed));

    let layout = transform::hardy_layout(grid, &net)?;
    let mut per_dim = Vec::new();
    for &d in &dims {
        let mut worst = 0.0f64;
        for i in 0..pairs {
            let mut rng = member_rng(cfg.seed ^ ((d as u64) << 40), i as u64);
            let h = ConeField::random(layout.clone(), d, &mut rng);
            worst = worst.max(transform::psi_bmo_ratio(&h, BmoMode::AllGridIntervals)?);
        }
        out.push(
            NormReport::quadrature(format!("psi_bmo_ratio_d{d}"), worst, 0.0)
                .with_seed(cfg.seed)
                .with_grid(grid)
                .with_net(net.describe()),
        );
        per_dim.push((d, worst));
    }
    stability_check(&mut out, "psi_bmo_stable", &per_dim);
    Ok(out)
}

/// Members whose Hardy norm is computed for `Σ|λ| / ‖f‖_{H^1_c}`.
pub const ATOM_HARDY_MEMBERS: usize = 20;

/// Exact reconstruction, certificate validity, the pairing bound against
/// `BMO_c`, and `H^1_c` norms of single atoms.
pub fn atoms(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let grid = cfg.grid()?;
    let net = ConeGrid::for_grid(grid, 1)?;
    let mut out = SuiteOutcome::default();
    let (mut exact_fail, mut invalid, mut terms) = (0usize, 0usize, 0usize);
    let mut pairing_fail = 0usize;
    let (mut lambda_ratio, mut atom_h1, mut trunc) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..cfg.ensemble {
        let d = cfg.member_dim(i);
        let mut rng = member_rng(cfg.seed, i as u64);
        let raw = if i % 2 == 0 { gaussian_field(grid, d, &mut rng) } else { martingale_field(grid, d, 1.0, &mut rng)? };
        let f = exact_mean_zero(&raw);
        let dec = atomdec::decompose(&f)?;
        exact_fail += usize::from(!dec.reconstructs(&f)?);
        invalid += dec.terms.iter().filter(|t| !t.cert.valid).count();
        terms += dec.terms.len();
        if i < ATOM_HARDY_MEMBERS {
            let h1 = squarefn::hardy_norm(&f, 1.0, Side::Column, &net)?;
            lambda_ratio = lambda_ratio.max(dec.lambda_sum() / h1);
            trunc = trunc.max(squarefn::truncation_fraction(&f, &net));
            let phi = gaussian_field(grid, d, &mut rng);
            let b = bmo::bmo_norm(&phi, Side::Column, BmoMode::AllGridIntervals)?.value();
            let pair = gridfn::scalar_pairing(&phi, &f)?.norm();
            pairing_fail += usize::from(pair > b * dec.lambda_sum() * (1.0 + 1e-9));
            let (a, _) = random_atom(grid, d, &mut rng)?;
            atom_h1 = atom_h1.max(atomdec::atom_hardy_norm(&a)?);
        }
    }
    for (name, v, note) in [
        ("atoms_terms", terms as f64, "total over members"),
        ("atoms_reconstruction_failures", exact_fail as f64, "exact rational sums"),
        ("atoms_invalid_certificates", invalid as f64, ""),
    ] {
        out.push(NormReport::exact(name, v).with_seed(cfg.seed).with_grid(grid).with_note(note));
    }
    out.push(
        NormReport::quadrature("atoms_lambda_sum_over_h1", lambda_ratio, trunc)
            .with_seed(cfg.seed)
            .with_grid(grid)
            .with_net(net.describe())
            .with_note("empirical constant, max over members"),
    );
    out.push(
        NormReport::quadrature("atom_h1_norm_max", atom_h1, 0.0)
            .with_seed(cfg.seed)
            .with_grid(grid)
            .with_net(net.describe()),
    );
    out.assert(
        "atoms",
        exact_fail == 0 && invalid == 0,
        format!("{} members, {terms} terms, {exact_fail} inexact reconstructions, {invalid} invalid certificates", cfg.ensemble),
    );
    out.assert("atoms_pairing", pairing_fail == 0, format!("{pairing_fail} members with |tr ∫ φ* f| > ‖φ‖_BMO Σ|λ|"));
    out.assert("atoms_finite", lambda_ratio.is_finite() && atom_h1.is_finite(), format!("Σ|λ| / ‖f‖_H1 ≤ {lambda_ratio:.4}, max ‖a‖_H1 {atom_h1:.4}"));
    Ok(out)
}

/// `‖ΨΦ f - f‖_2 / ‖f‖_2` at the default transform net and one refinement.
pub fn psiphi(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let grid = capped(cfg, TRANSFORM_K_CAP)?;
    let tol = cfg.tol("psiphi", 0.05);
    let net = transform::transform_net(grid)?;
    let fine = net.refined();
    let (mut worst0, mut worst1) = (0.0f64, 0.0f64);
    let mut not_decreasing = 0usize;
    for i in 0..cfg.ensemble {
        let d = cfg.member_dim(i);
        let mut rng = member_rng(cfg.seed, i as u64);
        let f = exact_mean_zero(&gaussian_field(grid, d, &mut rng));
        let e0 = transform::psiphi_error_on(&f, &net)?;
        let e1 = transform::psiphi_error_on(&f, &fine)?;
        worst0 = worst0.max(e0);
        worst1 = worst1.max(e1);
        not_decreasing += usize::from(!(e1 < e0));
    }
    let mut out = SuiteOutcome::default();
    out.push(NormReport::exact("psiphi_error_default", worst0).with_seed(cfg.seed).with_grid(grid).with_net(net.describe()));
    out.push(NormReport::exact("psiphi_error_refined", worst1).with_seed(cfg.seed).with_grid(grid).with_net(fine.describe()));
    out.assert(
        "psiphi",
        worst0 <= tol && not_decreasing == 0,
        format!("max error {worst0:.4} (tol {tol}), refined {worst1:.4}, {not_decreasing} members not decreasing"),
    );
    Ok(out)
}

/// Exponents of the `S`/`G` comparison.
pub const SG_EXPONENTS: [f64; 4] = [1.0, 1.5, 2.0, 3.0];

/// `‖S_c f‖_p / ‖G_c f‖_p` over the cells of `W`, per exponent and dimension.
pub fn sg_equivalence(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let grid = capped(cfg, TRANSFORM_K_CAP)?;
    let net = ConeGrid::for_grid(grid, cfg.cone_refine)?;
    let w = grid.cell_width_f64();
    let members = cfg.ensemble.min(16);
    let mut out = SuiteOutcome::default();
    let mut per_p: Vec<Vec<(usize, f64)>> = vec![Vec::new(); SG_EXPONENTS.len()];
    for d in cfg.harness_dims() {
        let mut worst = [0.0f64; SG_EXPONENTS.len()];
        for i in 0..members {
            let mut rng = member_rng(cfg.seed ^ ((d as u64) << 40), i as u64);
            let f = exact_mean_zero(&gaussian_field(grid, d, &mut rng));
            let s = squarefn::area_integral(&f, Side::Column, 0.0, &net)?;
            let g = squarefn::g_integral(&f, Side::Column, 0.0, net.y_max())?;
            for (slot, &p) in SG_EXPONENTS.iter().enumerate() {
                let sn = mixed_norm_of_squares(d, w, s.field().data(), p)?;
                let gn = mixed_norm_of_squares(d, w, g.field().data(), p)?;
                // both directions of the equivalence: keep the larger ratio
                worst[slot] = worst[slot].max((sn / gn).max(gn / sn));
            }
        }
        for (slot, &p) in SG_EXPONENTS.iter().enumerate() {
            out.push(
                NormReport::quadrature(format!("sg_ratio_p{p}_d{d}"), worst[slot], 0.0)
                    .with_seed(cfg.seed)
                    .with_grid(grid)
                    .with_net(net.describe())
                    .with_note("max over members of max(S/G, G/S)"),
            );
            per_p[slot].push((d, worst[slot]));
        }
    }
    for (slot, &p) in SG_EXPONENTS.iter().enumerate() {
        stability_check(&mut out, &format!("sg_stable_p{p}"), &per_p[slot]);
    }
    Ok(out)
}

/// Randomized Loewner checks of `|Σ μ_i f_i|^2 ⪯ (Σ μ_i) Σ μ_i |f_i|^2`,
/// Hansen's inequality, and `|a + b|^2 ⪯ (1 + t)|a|^2 + (1 + 1/t)|b|^2`.
pub fn hansen(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let tol = cfg.tol("hansen", 1e-9);
    let checks = cfg.ensemble.max(1000);
    let mut rng = member_rng(cfg.seed, 0);
    let (mut convex_fail, mut hansen_fail, mut split_fail) = (0usize, 0usize, 0usize);
    let (mut convex_min, mut hansen_min, mut split_min) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for _ in 0..checks {
        let d = rng.random_range(1..=6);
        let len = rng.random_range(1..=32);
        let mut sum = MatrixValue::zeros(d);
        let mut sq = MatrixValue::zeros(d);
        let mut total = 0.0;
        for _ in 0..len {
            let mu: f64 = rng.random_range(0.0..1.0);
            let f = random::gaussian(d, &mut rng);
            sum = &sum + &f.scale(mu);
            sq = &sq + &f.abs_sq().scale(mu);
            total += mu;
        }
        let rhs = sq.scale(total);
        let s = relative_slack(&sum.abs_sq(), &rhs)?;
        convex_min = convex_min.min(s);
        convex_fail += usize::from(s < -tol);

        let a = random::psd(d, &mut rng);
        let b = random::contraction(d, &mut rng);
        let p = rng.random_range(1.0..4.0);
        let (lhs, rhs) = matcore::hansen_transform_bound(&a, &b, p)?;
        let s = relative_slack(lhs.as_matrix(), rhs.as_matrix())?;
        hansen_min = hansen_min.min(s);
        hansen_fail += usize::from(s < -tol);

        let x = random::gaussian(d, &mut rng);
        let y = random::gaussian(d, &mut rng);
        for t in [0.25, 1.0, 4.0] {
            let rhs = &x.abs_sq().scale(1.0 + t) + &y.abs_sq().scale(1.0 + 1.0 / t);
            let s = relative_slack(&(&x + &y).abs_sq(), &rhs)?;
            split_min = split_min.min(s);
            split_fail += usize::from(s < -tol);
        }
    }
    let mut out = SuiteOutcome::default();
    for (name, v) in [("convexity_min_slack", convex_min), ("hansen_min_slack", hansen_min), ("split_min_slack", split_min)] {
        out.push(NormReport::exact(name, v).with_seed(cfg.seed).with_note(format!("{checks} checks, relative to ‖rhs‖")));
    }
    out.assert("convexity", convex_fail == 0, format!("{convex_fail} of {checks} failures, min slack {convex_min:.3e}"));
    out.assert("hansen", hansen_fail == 0, format!("{hansen_fail} of {checks} failures, min slack {hansen_min:.3e}"));
    out.assert("split", split_fail == 0, format!("{split_fail} of {} failures, min slack {split_min:.3e}", 3 * checks));
    Ok(out)
}

/// Smallest eigenvalue of `b - a` relative to `max(1, ‖b‖)`.
pub fn relative_slack(a: &MatrixValue, b: &MatrixValue) -> Result<f64> {
    let a = a.hermitian_part();
    let b = b.hermitian_part();
    Ok(matcore::loewner_slack(&a, &b)? / b.op_norm().max(1.0))
}

/// Identity and Hilbert multipliers, and the empirical BMO bound of `H`.
pub fn multiplier(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let grid = cfg.grid()?;
    let n = grid.cell_count();
    let one = Symbol::Values(vec![matcore::C64::new(1.0, 0.0); n]);
    let (mut id_err, mut hh_err) = (0.0f64, 0.0f64);
    let mut per_dim: Vec<(usize, f64)> = Vec::new();
    let members = cfg.ensemble.min(24);
    for i in 0..members {
        let d = cfg.member_dim(i);
        let mut rng = member_rng(cfg.seed, i as u64);
        let f = gaussian_field(grid, d, &mut rng);
        let norm = f.l2_norm();
        id_err = id_err.max(transform::multiplier_apply(&f, &one)?.sub(&f)?.l2_norm() / norm);
        let hh = transform::multiplier_apply(&transform::multiplier_apply(&f, &Symbol::Hilbert)?, &Symbol::Hilbert)?;
        hh_err = hh_err.max(hh.add(&f.centered())?.l2_norm() / norm);
        let c = transform::multiplier_bmo_ratio(&f, &Symbol::Hilbert, BmoMode::AllGridIntervals)?;
        match per_dim.iter_mut().find(|p| p.0 == d) {
            Some(p) => p.1 = p.1.max(c),
            None => per_dim.push((d, c)),
        }
    }
    let mut out = SuiteOutcome::default();
    out.push(NormReport::exact("multiplier_identity_error", id_err).with_seed(cfg.seed).with_grid(grid));
    out.push(NormReport::exact("hilbert_square_error", hh_err).with_seed(cfg.seed).with_grid(grid));
    for &(d, c) in &per_dim {
        out.push(
            NormReport::exact(format!("hilbert_bmo_ratio_d{d}"), c)
                .with_seed(cfg.seed)
                .with_grid(grid)
                .with_note("empirical ‖Hφ‖_BMO / ‖φ‖_BMO, max over members"),
        );
    }
    out.assert("multiplier_identity", id_err <= 1e-10, format!("relative error {id_err:.2e}"));
    out.assert("hilbert_square", hh_err <= 1e-8, format!("‖H²f + (f - mean)‖ / ‖f‖ = {hh_err:.2e}"));
    out.assert(
        "hilbert_bmo_finite",
        per_dim.iter().all(|p| p.1.is_finite() && p.1 > 0.0),
        per_dim.iter().map(|(d, c)| format!("d={d}: {c:.4}")).collect::<Vec<_>>().join(", "),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(suite: &str) -> ExperimentConfig {
        ExperimentConfig { suite: suite.into(), d: 1, j: 0, k: 3, ensemble: 3, dims: Some(vec![1, 2]), ..Default::default() }
    }

    #[test]
    fn unknown_suite_is_an_error() {
        let cfg = ExperimentConfig { suite: "nope".into(), ..Default::default() };
        assert!(matches!(run_suite(&cfg), Err(Error::UnknownSuite(_))));
    }

    #[test]
    fn spread_of_values() {
        assert_eq!(spread(&[1.0, 2.0, 4.0]), 4.0);
        assert!(spread(&[0.0, 1.0]).is_infinite());
    }

    #[test]
    fn small_suites_pass() {
        for name in ["green", "cover", "domination", "hansen", "multiplier", "atoms"] {
            let out = run_suite(&small(name)).unwrap();
            assert!(out.pass(), "{name}: {:?}", out.checks);
            assert!(!out.reports.is_empty());
        }
    }
}
