mod common;

use pivotal_core::diagnostics::check_all;
use pivotal_core::estimation::{ht_estimate, xi_decompose};
use pivotal_core::sampler::draw;
use pivotal_core::{decompose, enumerate, rng, EnumerateOptions, PopulationSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_population() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize)> {
    (any::<u64>(), 0usize..3).prop_map(|(seed, shape)| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let pi = common::rational_pi(&mut r, 8);
        let y = common::y_values(&mut r, &pi, common::SHAPES[shape]);
        (pi, y, shape)
    })
}

fn unequal_population(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    (2usize..=max_n, any::<u64>()).prop_map(|(big_n, seed)| {
        use rand::Rng;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        // arbitrary positive sizes, rescaled so that the total is an integer
        let raw: Vec<f64> = (0..big_n).map(|_| r.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let n = (s.floor()).max(1.0);
        let mut pi: Vec<f64> = raw.iter().map(|x| x * n / s).collect();
        if pi.iter().any(|&p| p >= 1.0) {
            pi = vec![n / big_n as f64; big_n];
        }
        pi
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_first_order_is_exact((pi, _y, _s) in small_population()) {
        let d = decompose(&PopulationSpec::from_probabilities(pi.clone()).unwrap());
        let e = enumerate(&d, EnumerateOptions::default()).unwrap();
        for (k, p) in pi.iter().enumerate() {
            prop_assert!((e.first_order()[k] - p).abs() < 1e-12);
        }
    }

    #[test]
    fn all_bounds_hold((pi, y, _s) in small_population()) {
        let d = decompose(&PopulationSpec::from_probabilities(pi).unwrap());
        let e = enumerate(&d, EnumerateOptions::default()).unwrap();
        for c in check_all(&d, &y, &e).unwrap() {
            prop_assert!(c.holds, "{:?}", c);
        }
    }

    #[test]
    fn draws_lie_in_oracle_support((pi, _y, _s) in small_population(), seed in any::<u64>()) {
        let d = decompose(&PopulationSpec::from_probabilities(pi).unwrap());
        let e = enumerate(&d, EnumerateOptions { cap: 8, keep_traces: false }).unwrap();
        for r in 0..20 {
            let s = draw(&d, &mut rng::stream(seed, rng::domain::SAMPLE, r));
            prop_assert!(e.probability_of(&s.selected) > 0.0);
        }
    }

    #[test]
    fn fixed_size_and_telescoping_on_large_populations(pi in unequal_population(300), seed in any::<u64>()) {
        let pop = PopulationSpec::from_probabilities(pi.clone()).unwrap();
        let d = decompose(&pop);
        let y: Vec<f64> = pi.iter().enumerate().map(|(k, p)| p * (1.0 + (k % 7) as f64) - 0.5).collect();
        let total: f64 = y.iter().sum();
        let s = draw(&d, &mut rng::stream(seed, rng::domain::SAMPLE, 0));
        prop_assert_eq!(s.selected.len(), pop.sample_size());
        prop_assert!(s.selected.windows(2).all(|w| w[0] < w[1]));
        let x = xi_decompose(&s.trace, &d, &y).unwrap();
        let ht = ht_estimate(&s.selected, &y, &pi).unwrap();
        let scale = 1.0f64.max(ht.abs()).max(total.abs());
        prop_assert!((x.sum() - (ht - total)).abs() <= 1e-9 * scale);
        prop_assert!(x.max_form_discrepancy() <= 1e-9 * scale);
    }

    #[test]
    fn decomposition_weights_sum_to_one(pi in unequal_population(200)) {
        let d = decompose(&PopulationSpec::from_probabilities(pi).unwrap());
        for s in d.strata() {
            let w: f64 = d.members(s.index).unwrap().iter().map(|m| m.1).sum();
            prop_assert!((w - 1.0).abs() < 1e-9);
        }
    }
}
