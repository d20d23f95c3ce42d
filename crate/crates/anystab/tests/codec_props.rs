use num_traits::{Signed, Zero};
use proptest::prelude::*;

use anystab::codec::{CantorParams, ExactCantor};
use anystab::Rate;

fn signs(mask: u64, n: usize) -> Vec<i8> {
    (0..n).map(|k| if mask >> k & 1 == 1 { 1 } else { -1 }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn float_extraction_inverts_the_encoding(
        lambda in 2.2f64..8.0,
        omega in 0.1f64..4.0,
        den in 1u64..=3,
        mask in any::<u64>(),
        frac in 0.0f64..1.0,
    ) {
        let rate = Rate::new(1, den).unwrap();
        prop_assume!(rate.as_f64() < lambda.log2());
        let p = CantorParams::new(lambda, omega, rate).unwrap();
        let t = (frac * p.float_horizon().min(40) as f64) as u64;
        let n = rate.floor_mul(t) as usize + 1;
        let bits = signs(mask, n);
        prop_assert_eq!(p.extract(p.encoded_state(&bits, t), t), bits);
    }

    #[test]
    fn disturbances_respect_their_bound(
        lambda in 1.1f64..6.0,
        num in 1u64..=3,
        den in 1u64..=4,
        mask in any::<u64>(),
        t in 0u64..20,
    ) {
        let rate = Rate::new(num, den).unwrap();
        prop_assume!(rate.as_f64() < lambda.log2());
        let p = CantorParams::new(lambda, 1.0, rate).unwrap();
        let bits = signs(mask, 64);
        prop_assume!(rate.floor_mul(t + 1) < 64);
        prop_assert!(p.disturbance(&bits, t).abs() <= 0.5 * (1.0 + 1e-12));
    }

    #[test]
    fn exact_encodings_separate_by_the_gap_bound(
        lambda in 3u64..=6,
        omega in 1u64..=4,
        t in 0u64..=9,
        mask_a in any::<u64>(),
        mask_b in any::<u64>(),
    ) {
        let c = ExactCantor::new((lambda, 1), (omega, 1), Rate::new(1, 1).unwrap()).unwrap();
        let n = t as usize + 1;
        let (a, b) = (signs(mask_a, n), signs(mask_b, n));
        let xa = c.state(&a, t);
        prop_assert_eq!(c.extract(&xa, t), a.clone());
        if let Some(i) = (0..n).find(|&k| a[k] != b[k]) {
            let gap = (xa - c.state(&b, t)).abs();
            prop_assert!(!gap.is_zero());
            prop_assert!(gap >= c.gap_bound(t, i as u64));
        }
    }
}

#[test]
fn state_update_matches_the_disturbance_recursion() {
    // X̌_{t+1} = λ X̌_t + W_t for the bit-carrying part
    let p = CantorParams::new(3.0, 1.0, Rate::new(1, 1).unwrap()).unwrap();
    let bits = signs(0b1011_0110_1100_1010, 16);
    for t in 0..14u64 {
        let lhs = p.encoded_state(&bits, t + 1);
        let rhs = 3.0 * p.encoded_state(&bits, t) + p.disturbance(&bits, t);
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }
}
