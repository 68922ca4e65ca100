//! Property tests for the invariants: Loewner inequalities, covariance and
//! homogeneity of the square and BMO functionals, the tower property, the
//! covering rule, and exact atomic reconstruction.

use proptest::prelude::*;
use rand::Rng;

use ncfa::atomdec;
use ncfa::bmo::{self, BmoMode, Side};
use ncfa::dyadic::{self, FiltrationId};
use ncfa::ensemble::{exact_mean_zero, gaussian_field, member_rng, psd_field};
use ncfa::gridfn::{GridSpec, MatrixField, Rat, RatInterval};
use ncfa::matcore::{self, random, MatrixValue};
use ncfa::maximal::{self, AvgWindow};
use ncfa::net::ConeGrid;
use ncfa::report::{write_csv, NormReport};
use ncfa::squarefn;
use ncfa::suites::relative_slack;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cases(200))]

    #[test]
    fn operator_convexity(seed in any::<u64>(), d in 1usize..=6, len in 1usize..=32) {
        let mut rng = member_rng(seed, 0);
        let mut sum = MatrixValue::zeros(d);
        let mut sq = MatrixValue::zeros(d);
        let mut total = 0.0;
        for _ in 0..len {
            let mu: f64 = rng.random_range(0.0..2.0);
            let f = random::gaussian(d, &mut rng);
            sum = &sum + &f.scale(mu);
            sq = &sq + &f.abs_sq().scale(mu);
            total += mu;
        }
        prop_assert!(relative_slack(&sum.abs_sq(), &sq.scale(total)).unwrap() >= -1e-9);
    }

    #[test]
    fn hansen_inequality(seed in any::<u64>(), d in 1usize..=6, p in 1.0f64..6.0) {
        let mut rng = member_rng(seed, 1);
        let a = random::psd(d, &mut rng);
        let b = random::contraction(d, &mut rng);
        let (lhs, rhs) = matcore::hansen_transform_bound(&a, &b, p).unwrap();
        prop_assert!(relative_slack(lhs.as_matrix(), rhs.as_matrix()).unwrap() >= -1e-9);
    }

    #[test]
    fn split_square_inequality(seed in any::<u64>(), d in 1usize..=6, t in 0.01f64..100.0) {
        let mut rng = member_rng(seed, 2);
        let x = random::gaussian(d, &mut rng);
        let y = random::gaussian(d, &mut rng);
        let rhs = &x.abs_sq().scale(1.0 + t) + &y.abs_sq().scale(1.0 + 1.0 / t);
        prop_assert!(relative_slack(&(&x + &y).abs_sq(), &rhs).unwrap() >= -1e-9);
    }

    #[test]
    fn cover_contains_within_six(a in 0i64..384, len in 1i64..384) {
        let grid = GridSpec::new(1, 6).unwrap();
        let upo = grid.units_per_one();
        let o = grid.origin_units();
        let b = (a + len).min(grid.cell_count() as i64);
        prop_assume!(b > a);
        let iv = RatInterval::new(Rat::new(o + a, upo), Rat::new(o + b, upo)).unwrap();
        let atom = dyadic::cover(&iv).unwrap();
        prop_assert!(atom.interval.contains_interval(&iv));
        prop_assert!(atom.len() <= iv.len() * Rat::from_integer(6));
    }
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn area_integral_is_unitarily_covariant(seed in any::<u64>(), d in 1usize..=3) {
        let grid = GridSpec::new(0, 3).unwrap();
        let mut rng = member_rng(seed, 3);
        let f = gaussian_field(grid, d, &mut rng);
        let u = random::unitary(d, &mut rng);
        let net = ConeGrid::for_grid(grid, 1).unwrap();
        let s = squarefn::area_integral(&f, Side::Column, 0.0, &net).unwrap();
        let su = squarefn::area_integral(&f.right_mul(&u), Side::Column, 0.0, &net).unwrap();
        for i in 0..f.len() {
            let expect = &(&u.adjoint() * s.value(i).as_matrix()) * &u;
            let got = su.value(i).into_matrix();
            prop_assert!((&got - &expect).frobenius() <= 1e-10 * (1.0 + expect.frobenius()));
        }
    }

    #[test]
    fn bmo_is_homogeneous_and_ignores_constants(seed in any::<u64>(), d in 1usize..=3, c in -4.0f64..4.0) {
        let grid = GridSpec::new(0, 3).unwrap();
        let mut rng = member_rng(seed, 4);
        let phi = gaussian_field(grid, d, &mut rng);
        let shift = random::gaussian(d, &mut rng);
        let base = bmo::bmo_norm(&phi, Side::Column, BmoMode::AllGridIntervals).unwrap().value();
        let scaled = bmo::bmo_norm(&phi.scale(c), Side::Column, BmoMode::AllGridIntervals).unwrap().value();
        let shifted = bmo::bmo_norm(&phi.add_constant(&shift), Side::Column, BmoMode::AllGridIntervals).unwrap().value();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-10 * (1.0 + base));
        prop_assert!((shifted - base).abs() <= 1e-9 * (1.0 + base));
        let dy = bmo::bmo_norm(&phi, Side::Column, BmoMode::DyadicPair).unwrap();
        prop_assert!(dy.lower <= base);
        prop_assert!(base <= dy.upper);
    }

    #[test]
    fn tower_property(seed in any::<u64>(), d in 1usize..=3, m in -1i32..=4, n in -1i32..=4) {
        // D atoms at levels >= -J tile W, so no boundary atoms enter
        let grid = GridSpec::new(1, 4).unwrap();
        let mut rng = member_rng(seed, 5);
        let f = gaussian_field(grid, d, &mut rng);
        let em = dyadic::cond_exp(&f, FiltrationId::D, m).unwrap();
        let lhs = dyadic::cond_exp(&em, FiltrationId::D, n).unwrap();
        let rhs = dyadic::cond_exp(&f, FiltrationId::D, m.min(n)).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn windows_are_dominated(seed in any::<u64>(), d in 1usize..=3, h1 in 1i64..200, h2 in 1i64..200) {
        let grid = GridSpec::new(1, 5).unwrap();
        let mut rng = member_rng(seed, 6);
        let f = psd_field(grid, d, &mut rng);
        let upo = grid.units_per_one();
        let h = AvgWindow::new(Rat::new(h1, upo), Rat::new(h2, upo)).unwrap();
        let (holds, _) = maximal::domination_check(&f, &h, 1e-9).unwrap();
        prop_assert!(holds);
    }

    #[test]
    fn decomposition_reconstructs_exactly(seed in any::<u64>(), d in 1usize..=3) {
        let grid = GridSpec::new(1, 3).unwrap();
        let mut rng = member_rng(seed, 7);
        let f = exact_mean_zero(&gaussian_field(grid, d, &mut rng));
        let dec = atomdec::decompose(&f).unwrap();
        prop_assert!(dec.reconstructs(&f).unwrap());
        prop_assert!(dec.all_valid());
        prop_assert!(dec.reconstruct().sub(&f).unwrap().max_abs() <= 1e-12);
    }
}

#[test]
fn csv_rows_match_reports_and_carry_provenance() {
    let reports = vec![
        NormReport::exact("a", 1.0),
        NormReport::quadrature("b", 2.0, 1e-3).with_net("net"),
        NormReport::bound("c", 1.0, 3.0).unwrap(),
    ];
    let mut buf = Vec::new();
    write_csv(&mut buf, &reports).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), reports.len() + 1);
    for line in &lines[1..] {
        assert!(!line.split(',').nth(3).unwrap().is_empty());
    }
}

#[test]
fn constant_fields_have_zero_bmo() {
    let grid = GridSpec::new(1, 3).unwrap();
    let c = MatrixField::constant(grid, &MatrixValue::diag(&[1.0, -2.0]));
    for mode in [BmoMode::AllGridIntervals, BmoMode::DyadicPair, BmoMode::WindowFamily] {
        // prefix-sum moments cancel to ~1e-16, and the norm is its square root
        let r = bmo::bmo_norm(&c, Side::Column, mode).unwrap();
        assert!(r.upper <= 1e-6, "{mode:?}: {r:?}");
    }
}
