mod common;

use proptest::prelude::*;

use chiplet_dse::cost::{compute_basis, median, weighted_sum, Evaluator, Profile};
use chiplet_dse::ppac::evaluate;

#[test]
fn normalized_medians_sit_at_one() {
    let c = common::consts();
    let space = common::full_space(&c);
    for name in ["WL-1", "WL-6"] {
        let wl = common::workload(name);
        let basis = compute_basis(&wl, &space, &c, 2001, 3).unwrap();
        let sample = space.sample_uniform(2001, 3).unwrap();
        let normed: Vec<[f64; 4]> = sample.iter().map(|cfg| basis.normalize(&evaluate(&wl, cfg, &c).unwrap())).collect();
        for i in 0..4 {
            let med = median(&mut normed.iter().map(|v| v[i]).collect::<Vec<_>>());
            assert!((0.99..=1.01).contains(&med), "{name} metric {i}: {med}");
        }
    }
}

#[test]
fn zero_weights_cost_nothing() {
    let f = common::fixture("WL-3", "Balance", 500);
    let zero = Profile::new("zero", [0.0; 4]).unwrap();
    let ev = Evaluator::new(f.ev.workload.clone(), f.ev.consts.clone(), f.ev.basis.clone(), zero);
    for cfg in f.full.sample_uniform(200, 9).unwrap() {
        assert_eq!(ev.cost(&cfg).unwrap(), 0.0);
    }
    assert!(ev.profile.check_optimizable().is_err());
}

#[test]
fn scaling_weights_keeps_the_argmin() {
    let f = common::fixture("WL-4", "Automotive", 500);
    for seed in 0..10 {
        let sample = f.full.sample_uniform(100, seed).unwrap();
        let (best, _) = f.ev.argmin_over(sample.iter().cloned()).unwrap();
        for c in [0.001, 0.5, 3.0, 1000.0] {
            let ev = Evaluator::new(f.ev.workload.clone(), f.ev.consts.clone(), f.ev.basis.clone(), f.ev.profile.scaled(c).unwrap());
            assert_eq!(ev.argmin_over(sample.iter().cloned()).unwrap().0, best, "scale {c}, seed {seed}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn weighted_sum_is_linear_per_term(
        v in prop::array::uniform4(0.0f64..50.0),
        w in prop::array::uniform4(0.0f64..5.0),
        i in 0usize..4,
        d in 0.0f64..5.0,
    ) {
        let p = Profile::new("p", w).unwrap();
        let mut w2 = w;
        w2[i] += d;
        let p2 = Profile::new("p2", w2).unwrap();
        let got = weighted_sum(&v, &p2) - weighted_sum(&v, &p);
        let want = d * v[i];
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + weighted_sum(&v, &p2).abs()), "{} vs {}", got, want);

        let unit = |j: usize| {
            let mut u = [0.0; 4];
            u[j] = w[j];
            weighted_sum(&v, &Profile::new("u", u).unwrap())
        };
        let parts: f64 = (0..4).map(unit).sum();
        prop_assert!((parts - weighted_sum(&v, &p)).abs() <= 1e-12 * (1.0 + parts.abs()));
    }
}
