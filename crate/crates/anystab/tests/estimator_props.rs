use proptest::prelude::*;

use anystab::harness::engine::run_trials_with;
use anystab::harness::reset::{exact_second_moment, lower_series};
use anystab::stats::{clopper_pearson, window_means, Welford};
use anystab::Rate;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn clopper_pearson_brackets_the_frequency(n in 1u64..5000, frac in 0.0f64..=1.0, conf in 0.5f64..0.999) {
        let k = (frac * n as f64).round() as u64;
        let (lo, hi) = clopper_pearson(k, n, conf);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0, "{k}/{n}: [{lo}, {hi}]");
        // wider at higher confidence
        let (lo2, hi2) = clopper_pearson(k, n, (conf + 1.0) / 2.0);
        prop_assert!(lo2 <= lo + 1e-12 && hi2 >= hi - 1e-12);
    }

    #[test]
    fn welford_merge_matches_one_pass(xs in prop::collection::vec(-1e3f64..1e3, 2..200), cut in 0usize..200) {
        let cut = cut % xs.len();
        let mut all = Welford::new();
        xs.iter().for_each(|x| all.push(*x));
        let (mut a, mut b) = (Welford::new(), Welford::new());
        xs[..cut].iter().for_each(|x| a.push(*x));
        xs[cut..].iter().for_each(|x| b.push(*x));
        a.merge(&b);
        prop_assert_eq!(a.count(), all.count());
        prop_assert!((a.mean() - all.mean()).abs() <= 1e-9 * (1.0 + all.mean().abs()));
        prop_assert!((a.variance() - all.variance()).abs() <= 1e-8 * (1.0 + all.variance()));
    }

    #[test]
    fn window_means_preserve_the_tail_average(xs in prop::collection::vec(-10f64..10.0, 1..300), w in 1usize..20) {
        let m = window_means(&xs, w);
        let width = (xs.len() / w).max(1);
        let used = width * m.len();
        let tail_mean: f64 = xs[xs.len() - used..].iter().sum::<f64>() / used as f64;
        let avg: f64 = m.iter().sum::<f64>() / m.len() as f64;
        prop_assert!((avg - tail_mean).abs() < 1e-9);
    }

    #[test]
    fn rate_arrival_inverts_floor_mul(num in 1u64..20, den in 1u64..20, k in 0u64..10_000) {
        let r = Rate::new(num, den).unwrap();
        let t = r.arrival(k);
        prop_assert!(r.floor_mul(t) >= k);
        prop_assert!(t == 0 || r.floor_mul(t - 1) < k);
        prop_assert!(r.age(t, k) >= 0.0);
    }

    #[test]
    fn reset_moment_dominates_its_series(lambda in 1.0f64..2.0, delta in 0.0f64..0.95, var in 0.01f64..2.0, t in 1u64..50) {
        let exact = exact_second_moment(lambda, delta, var, t);
        let lower = lower_series(lambda, delta, var, t);
        prop_assert!(exact >= lower * (1.0 - 1e-12));
        prop_assert!(exact_second_moment(lambda, delta, var, t + 1) >= exact * (1.0 - 1e-12));
    }

    #[test]
    fn trial_results_do_not_depend_on_workers(trials in 1u64..200, workers in 1usize..9) {
        let f = |k: u64| Ok(k.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let one = run_trials_with(trials, 1, f).unwrap();
        let many = run_trials_with(trials, workers, f).unwrap();
        prop_assert_eq!(one, many);
    }
}
