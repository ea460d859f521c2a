mod common;

use common::{exhaustive_transport, random_masses, random_plane_space};
use mms_core::rng::seeded;
use mms_core::space::build_grid;
use mms_core::transport::{c_transform, kantorovich_potential, wq_distance, KantorovichPotential, ProbabilityVector};
use proptest::prelude::*;
use rand::Rng;

fn measure<R: Rng>(rng: &mut R, n: usize) -> ProbabilityVector {
    ProbabilityVector::new(random_masses(rng, n)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wq_is_symmetric_and_satisfies_the_triangle_inequality(seed in any::<u64>(), n in 2usize..9, q in prop_oneof![Just(1.5), Just(2.0), Just(3.0)]) {
        let mut rng = seeded(seed);
        let s = random_plane_space(&mut rng, n);
        let (a, b, c) = (measure(&mut rng, n), measure(&mut rng, n), measure(&mut rng, n));
        let ab = wq_distance(&s, &a, &b, q).unwrap().value;
        let ba = wq_distance(&s, &b, &a, q).unwrap().value;
        let bc = wq_distance(&s, &b, &c, q).unwrap().value;
        let ac = wq_distance(&s, &a, &c, q).unwrap().value;
        prop_assert!((ab - ba).abs() <= 1e-10);
        prop_assert!(ac <= ab + bc + 1e-10);
        prop_assert!(wq_distance(&s, &a, &a, q).unwrap().value <= 1e-7);
    }

    #[test]
    fn plans_have_the_right_marginals(seed in any::<u64>(), n in 2usize..12) {
        let mut rng = seeded(seed);
        let s = random_plane_space(&mut rng, n);
        let (a, b) = (measure(&mut rng, n), measure(&mut rng, n));
        let t = wq_distance(&s, &a, &b, 2.0).unwrap();
        for (got, want) in t.coupling.row_sums().iter().zip(a.mass()) {
            prop_assert!((got - want).abs() <= 1e-12);
        }
        for (got, want) in t.coupling.col_sums().iter().zip(b.mass()) {
            prop_assert!((got - want).abs() <= 1e-12);
        }
        prop_assert!(t.coupling.entries.len() < a.support().len() + b.support().len());
    }

    #[test]
    fn c_transform_reverses_order_and_is_idempotent_after_three(seed in any::<u64>(), n in 2usize..10) {
        let mut rng = seeded(seed);
        let s = random_plane_space(&mut rng, n);
        let phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bump: Vec<f64> = phi.iter().map(|p| p + rng.gen_range(0.0..0.5)).collect();
        let (pc, bc) = (c_transform(&s, &phi).unwrap(), c_transform(&s, &bump).unwrap());
        prop_assert!(pc.iter().zip(&bc).all(|(a, b)| b <= a));
        let pcc = c_transform(&s, &pc).unwrap();
        prop_assert!(pcc.iter().zip(&phi).all(|(a, b)| *a >= b - 1e-12));
        let pccc = c_transform(&s, &pcc).unwrap();
        prop_assert!(pccc.iter().zip(&pc).all(|(a, b)| (a - b).abs() <= 1e-12));
        prop_assert!(KantorovichPotential::c_concave(&s, pcc).is_ok());
    }

    #[test]
    fn restricted_plans_stay_optimal(seed in any::<u64>(), n in 3usize..6, keep in proptest::collection::vec(any::<bool>(), 12)) {
        let mut rng = seeded(seed);
        let s = random_plane_space(&mut rng, n);
        let (a, b) = (measure(&mut rng, n), measure(&mut rng, n));
        let plan = wq_distance(&s, &a, &b, 2.0).unwrap().coupling;
        let part: Vec<_> = plan.entries.iter().enumerate().filter(|(k, _)| keep[k % keep.len()]).map(|(_, e)| *e).collect();
        prop_assume!(!part.is_empty());
        let mut src = vec![0.0; n];
        let mut dst = vec![0.0; n];
        for &(i, j, m) in &part {
            src[i] += m;
            dst[j] += m;
        }
        let si: Vec<usize> = (0..n).filter(|&i| src[i] > 0.0).collect();
        let sj: Vec<usize> = (0..n).filter(|&j| dst[j] > 0.0).collect();
        let cost: Vec<f64> = si.iter().flat_map(|&i| sj.iter().map(move |&j| (i, j))).map(|(i, j)| s.dist(i, j).powi(2)).collect();
        let mass: f64 = src.iter().sum();
        let sa: Vec<f64> = si.iter().map(|&i| src[i] / mass).collect();
        let sb: Vec<f64> = sj.iter().map(|&j| dst[j] / mass).collect();
        let own: f64 = part.iter().map(|&(i, j, m)| m / mass * s.dist(i, j).powi(2)).sum();
        prop_assert!((own - exhaustive_transport(&sa, &sb, &cost)).abs() <= 1e-10);
    }

    #[test]
    fn potentials_are_tight_on_the_plan(seed in any::<u64>(), n in 2usize..10) {
        let mut rng = seeded(seed);
        let s = random_plane_space(&mut rng, n);
        let (a, b) = (measure(&mut rng, n), measure(&mut rng, n));
        let sol = kantorovich_potential(&s, &a, &b).unwrap();
        let p = &sol.potential;
        for x in 0..n {
            for y in 0..n {
                prop_assert!(p.phi[x] + p.phic[y] <= 0.5 * s.dist(x, y).powi(2) + 1e-12);
            }
        }
        for &(x, y, _) in &sol.transport.coupling.entries {
            prop_assert!(p.superdifferential(&s, x).contains(&y));
        }
    }
}

#[test]
fn diracs_are_at_their_distance() {
    let g = build_grid(&[6, 4], 0.25, None, None).unwrap();
    for (i, j) in [(0, 23), (5, 18), (7, 7)] {
        let (a, b) = (ProbabilityVector::dirac(24, i).unwrap(), ProbabilityVector::dirac(24, j).unwrap());
        for q in [1.5, 2.0, 4.0] {
            assert!((wq_distance(&g, &a, &b, q).unwrap().value - g.dist(i, j)).abs() <= 1e-12);
        }
    }
}

#[test]
fn shifting_a_measure_on_a_line_costs_the_shift() {
    let g = build_grid(&[30], 0.1, None, None).unwrap();
    let mut rng = seeded(3);
    let base: Vec<f64> = (0..20).map(|_| rng.gen_range(0.1..1.0)).collect();
    let mut a = base.clone();
    a.resize(30, 0.0);
    let mut b = vec![0.0; 7];
    b.extend(&base);
    b.resize(30, 0.0);
    let (a, b) = (ProbabilityVector::normalized(a).unwrap(), ProbabilityVector::normalized(b).unwrap());
    assert!((wq_distance(&g, &a, &b, 2.0).unwrap().value - 0.7).abs() <= 1e-10);
}
