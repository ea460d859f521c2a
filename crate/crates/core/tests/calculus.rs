use mms_core::directional::{d_pm_exact, d_pm_sweep, linearity_check, random_field};
use mms_core::laplacian::{
    chain_rule_laplacian_check, change_of_measure_check, gamma, graph_laplacian, inner_m, laplacian_interval, leibniz_laplacian_check,
    locality_and_stability_checks, membership_check, Calculus, ScalarMap,
};
use mms_core::normed::{default_eps_grid, laplacian_interval_normed, NormSpec, QuadratureGrid, SmoothField};
use mms_core::rng::seeded;
use mms_core::sobolev::{dirichlet_form, local_slope, upper_gradient_check, SlopeVariant};
use mms_core::space::{build_centered_grid, build_grid, FiniteMms};
use proptest::prelude::*;

fn grids() -> Vec<FiniteMms> {
    vec![
        build_grid(&[11, 11], 0.1, None, None).unwrap(),
        build_grid(&[11, 11], 0.1, None, Some(NormSpec::max_norm(2))).unwrap(),
        build_grid(&[11, 11], 0.1, None, Some(NormSpec::lp(1.0, 2).unwrap())).unwrap(),
        build_grid(&[40], 0.05, None, None).unwrap(),
    ]
}

fn fields(seed: u64, which: usize, count: usize) -> (FiniteMms, Vec<Vec<f64>>) {
    let s = grids().swap_remove(which);
    let mut rng = seeded(seed);
    let fs = (0..count).map(|_| random_field(&s, &mut rng, 3, 5.0)).collect();
    (s, fs)
}

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pairings_are_ordered_bounded_and_antisymmetric(seed in any::<u64>(), which in 0usize..4) {
        let (s, fs) = fields(seed, which, 2);
        let (f, g) = (&fs[0], &fs[1]);
        let d = d_pm_exact(&s, f, g).unwrap();
        let sf = local_slope(&s, f, SlopeVariant::Full);
        let sg = local_slope(&s, g, SlopeVariant::Full);
        let flipped_f = d_pm_exact(&s, &neg(f), g).unwrap();
        let flipped_g = d_pm_exact(&s, f, &neg(g)).unwrap();
        for x in 0..s.n() {
            prop_assert!(d.dminus[x] <= d.dplus[x] + 1e-12);
            prop_assert!(d.dplus[x].abs().max(d.dminus[x].abs()) <= sf[x] * sg[x] * (1.0 + 1e-12) + 1e-15);
            prop_assert!((flipped_f.dplus[x] + d.dminus[x]).abs() <= 1e-12);
            prop_assert!((flipped_g.dplus[x] + d.dminus[x]).abs() <= 1e-12);
        }
    }

    #[test]
    fn pairings_vanish_where_g_is_flat(seed in any::<u64>(), which in 0usize..4) {
        let (s, fs) = fields(seed, which, 1);
        let d = d_pm_exact(&s, &fs[0], &vec![0.7; s.n()]).unwrap();
        prop_assert!(d.dplus.iter().chain(&d.dminus).all(|v| *v == 0.0));
    }

    #[test]
    fn pairings_are_local(seed in any::<u64>(), which in 0usize..3, x in 0usize..121) {
        let (s, fs) = fields(seed, which, 3);
        let ball: Vec<bool> = (0..s.n()).map(|y| y == x || s.dist(x, y) <= s.h()).collect();
        let f2: Vec<f64> = (0..s.n()).map(|y| if ball[y] { fs[0][y] } else { fs[2][y] }).collect();
        let a = d_pm_exact(&s, &fs[0], &fs[1]).unwrap();
        let b = d_pm_exact(&s, &f2, &fs[1]).unwrap();
        prop_assert_eq!(a.dplus[x], b.dplus[x]);
        prop_assert_eq!(a.dminus[x], b.dminus[x]);
    }

    #[test]
    fn integrated_plus_pairing_is_convex(seed in any::<u64>(), which in 0usize..4) {
        let (s, fs) = fields(seed, which, 3);
        let total = |f: &[f64]| -> f64 { d_pm_exact(&s, f, &fs[2]).unwrap().dplus.iter().zip(s.weights()).map(|(a, b)| a * b).sum() };
        let mid: Vec<f64> = fs[0].iter().zip(&fs[1]).map(|(a, b)| 0.5 * (a + b)).collect();
        prop_assert!(total(&mid) <= 0.5 * (total(&fs[0]) + total(&fs[1])) + 1e-12);
    }

    #[test]
    fn sweep_matches_active_sets(seed in any::<u64>(), which in 0usize..4) {
        let (s, fs) = fields(seed, which, 2);
        let exact = d_pm_exact(&s, &fs[0], &fs[1]).unwrap();
        let sweep = d_pm_sweep(&s, &fs[0], &fs[1], 2.0, &default_eps_grid()).unwrap();
        for x in 0..s.n() {
            prop_assert!((exact.dplus[x] - sweep.dplus[x]).abs() <= 1e-8 * (1.0 + exact.dplus[x].abs()));
            prop_assert!((exact.dminus[x] - sweep.dminus[x]).abs() <= 1e-8 * (1.0 + exact.dminus[x].abs()));
        }
    }

    #[test]
    fn slope_rules(seed in any::<u64>(), which in 0usize..4, a in -2.0f64..2.0, b in -2.0f64..2.0, k in -3.0f64..3.0) {
        let (s, fs) = fields(seed, which, 2);
        let (f, g) = (&fs[0], &fs[1]);
        let slope = |v: &[f64]| local_slope(&s, v, SlopeVariant::Full);
        let (sf, sg) = (slope(f), slope(g));
        let comb: Vec<f64> = f.iter().zip(g).map(|(x, y)| a * x + b * y).collect();
        let prod: Vec<f64> = f.iter().zip(g).map(|(x, y)| x * y).collect();
        let affine: Vec<f64> = f.iter().map(|x| k * x + 1.0).collect();
        let kink: Vec<f64> = f.iter().map(|x| if *x > 0.1 { k * (x - 0.1) } else { 0.5 * k * (x - 0.1) }).collect();
        let (sc, sp, sa, sk) = (slope(&comb), slope(&prod), slope(&affine), slope(&kink));
        let graph = s.neighborhood();
        for x in 0..s.n() {
            prop_assert!(sc[x] <= a.abs() * sf[x] + b.abs() * sg[x] + 1e-12);
            let near = |v: &[f64]| graph.neighbors(x).map(|(y, _)| v[y].abs()).fold(v[x].abs(), f64::max);
            prop_assert!(sp[x] <= near(f) * sg[x] + near(g) * sf[x] + 1e-12);
            prop_assert!((sa[x] - k.abs() * sf[x]).abs() <= 1e-12 * (1.0 + sa[x]));
            prop_assert!(sk[x] <= k.abs() * sf[x] + 1e-12);
        }
    }

    #[test]
    fn full_slope_is_an_upper_gradient(seed in any::<u64>(), len in 2usize..30) {
        let (s, fs) = fields(seed, 3, 1);
        let path: Vec<usize> = (0..len).collect();
        let grad = local_slope(&s, &fs[0], SlopeVariant::Full);
        prop_assert!(upper_gradient_check(&s, &fs[0], &grad, &path).unwrap().holds);
    }

    #[test]
    fn linear_laplacian_identities(seed in any::<u64>()) {
        let (s, fs) = fields(seed, 0, 2);
        let lap = graph_laplacian(&s).unwrap();
        let (f, g) = (&fs[0], &fs[1]);
        let lhs = inner_m(s.weights(), f, &lap.apply(g));
        let rhs = inner_m(s.weights(), g, &lap.apply(f));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        prop_assert!((lhs + dirichlet_form(&s, f, g).unwrap()).abs() <= 1e-12 * (1.0 + lhs.abs()));
        prop_assert!(lap.apply(&vec![3.0; s.n()]).iter().all(|v| v.abs() <= 1e-12));
        let (res, asym) = leibniz_laplacian_check(&s, f, g).unwrap();
        prop_assert!(res <= 1e-10 && asym == 0.0);
        let affine = chain_rule_laplacian_check(&s, g, ScalarMap::Affine { slope: -1.5, offset: 0.2 }, None).unwrap();
        prop_assert!(affine.max_residual <= 1e-10);
        let iv = laplacian_interval(&s, g, &vec![0.0; s.n()], Calculus::Hilbert(&lap)).unwrap();
        prop_assert_eq!((iv.lower, iv.upper), (0.0, 0.0));
    }

    #[test]
    fn slope_intervals_are_ordered(seed in any::<u64>(), which in 0usize..3) {
        let (s, fs) = fields(seed, which, 1);
        let window = SmoothField::Bump { center: vec![0.5, 0.5], radius: 0.3, amplitude: 1.0 };
        let f: Vec<f64> = (0..s.n()).map(|i| window.value(s.coord(i))).collect();
        let iv = laplacian_interval(&s, &fs[0], &f, Calculus::Slope).unwrap();
        prop_assert!(iv.lower <= iv.upper + 1e-12);
    }
}

#[test]
fn max_norm_width_bias_is_first_order() {
    let err = |spacing: f64| {
        let norm = NormSpec::max_norm(2);
        let m = (2.0 / spacing).round() as usize + 1;
        let s = build_grid(&[m, m], spacing, Some(&[-1.0, -1.0]), Some(norm.clone())).unwrap();
        let bump = SmoothField::Bump { center: vec![0.05, -0.03], radius: 0.8, amplitude: 1.0 };
        let g = SmoothField::Affine { coeffs: vec![1.0, 0.0], offset: 0.0 };
        let fv: Vec<f64> = (0..s.n()).map(|i| bump.value(s.coord(i))).collect();
        let gv: Vec<f64> = (0..s.n()).map(|i| g.value(s.coord(i))).collect();
        let width = laplacian_interval(&s, &gv, &fv, Calculus::Slope).unwrap().width();
        let q = QuadratureGrid { lower: vec![-1.0, -1.0], spacing: 0.004, cells: vec![500, 500] };
        let (lo, hi) = laplacian_interval_normed(&norm, &g, &bump, &q).unwrap();
        (width - (hi - lo)) / (hi - lo)
    };
    let (a, b) = (err(0.04), err(0.02));
    assert!(a > 0.0 && b > 0.0);
    let ratio = a / b;
    assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
}

#[test]
fn dirichlet_form_is_calibrated() {
    // f = sin(πx)sin(πy) on [0,1]²: ∫|∇f|² = π²/2.
    let s = build_grid(&[81, 81], 1.0 / 80.0, None, None).unwrap();
    let f: Vec<f64> = (0..s.n())
        .map(|i| {
            let c = s.coord(i);
            (std::f64::consts::PI * c[0]).sin() * (std::f64::consts::PI * c[1]).sin()
        })
        .collect();
    let e = dirichlet_form(&s, &f, &f).unwrap();
    let want = std::f64::consts::PI.powi(2) / 2.0;
    assert!((e - want).abs() / want < 1e-3, "{e} vs {want}");
}

#[test]
fn hilbert_grid_pairings_are_linear() {
    let (s, fs) = fields(7, 0, 3);
    let r = linearity_check(&s, &fs[0], &fs[1], &fs[2], 0.7, -1.3).unwrap();
    assert!(r.admissible > s.n() / 2);
    assert!(r.max_residual <= 1e-9);
    let (p, fs) = fields(7, 1, 3);
    let r = linearity_check(&p, &fs[0], &fs[1], &fs[2], 0.7, 1.3).unwrap();
    assert!(r.min_convexity_slack >= -1e-12);
}

#[test]
fn distance_and_half_square_bounds_are_consistent() {
    // L d = L√(2φ) with φ = d²/2 on the annulus, through the chain rule.
    let s = build_centered_grid(2, 1.0, 0.02, None).unwrap();
    let x0 = s.nearest_point(&[0.0, 0.0]).unwrap();
    let phi: Vec<f64> = s.dist_row(x0).iter().map(|d| 0.5 * d * d).collect();
    let mask: Vec<bool> = s.dist_row(x0).iter().map(|d| (0.3..=0.8).contains(d)).collect();
    let r = chain_rule_laplacian_check(&s, &phi, ScalarMap::SqrtTwice, Some(&mask)).unwrap();
    assert!(r.points > 1000);
    assert!(r.max_relative < 1e-2, "{}", r.max_relative);
}

#[test]
fn carre_du_champ_is_symmetric_and_matches_membership() {
    let (s, fs) = fields(11, 0, 2);
    let a = gamma(&s, &fs[0], &fs[1]).unwrap();
    let b = gamma(&s, &fs[1], &fs[0]).unwrap();
    assert_eq!(a, b);
    let lap = graph_laplacian(&s).unwrap();
    let g = &fs[0];
    let mu: Vec<f64> = lap.apply(g).iter().zip(s.weights()).map(|(l, w)| l * w).collect();
    let basis: Vec<Vec<f64>> = [0.35, 0.5, 0.65]
        .iter()
        .map(|&c| {
            let b = SmoothField::Bump { center: vec![c, 0.5], radius: 0.15, amplitude: 1.0 };
            (0..s.n()).map(|i| b.value(s.coord(i))).collect()
        })
        .collect();
    let r = membership_check(&s, g, &mu, &basis, Calculus::Hilbert(&lap)).unwrap();
    assert!(r.holds && r.homogeneity_holds, "{r:?}");
    let off: Vec<f64> = mu.iter().map(|v| v + 0.05).collect();
    assert!(!membership_check(&s, g, &off, &basis, Calculus::Hilbert(&lap)).unwrap().holds);
}

#[test]
fn reweighting_matches_drift_formula() {
    let (s, fs) = fields(13, 0, 3);
    let v: Vec<f64> = fs[1].iter().map(|x| 0.3 * x).collect();
    let r = change_of_measure_check(&s, &fs[0], &v, &fs[2]).unwrap();
    // The geometric-mean edge weights make the formula exact up to O(spacing²).
    assert!(r.max_density_residual < 0.5, "{}", r.max_density_residual);
}

#[test]
fn locality_under_restriction_and_stability() {
    let (s, fs) = fields(17, 1, 2);
    let g = &fs[0];
    let left: Vec<usize> = (0..s.n()).filter(|&i| s.coord(i)[0] <= 0.55).collect();
    let right: Vec<usize> = (0..s.n()).filter(|&i| s.coord(i)[0] >= 0.45).collect();
    let seq: Vec<Vec<f64>> = [1.0, 10.0, 100.0, 1000.0].iter().map(|n| g.iter().zip(&fs[1]).map(|(a, b)| a + b / n).collect()).collect();
    let window = SmoothField::Bump { center: vec![0.5, 0.5], radius: 0.3, amplitude: 1.0 };
    let f: Vec<f64> = (0..s.n()).map(|i| window.value(s.coord(i))).collect();
    let r = locality_and_stability_checks(&s, g, &[left, right], &seq, &[f]).unwrap();
    assert_eq!(r.max_overlap_discrepancy, 0.0);
    assert!(r.endpoint_drift.last().unwrap() < &r.endpoint_drift[0]);
}
