//! Property checks over randomly drawn parameters.

use mcnet::analysis::single_link_error;
use mcnet::channel::{p_ob, p_self, poisson_cdf};
use mcnet::model::{split_budget, BitSchedule, DuplexMode};
use mcnet::optimizer::{na_crossing, xi_crossing, LinkOptimizationInput};
use proptest::prelude::*;

const D: f64 = 4.365e-10;

proptest! {
    #[test]
    fn budget_split_is_exact_and_even(total in 1u64..10_000_000, relays in 0usize..12) {
        let parts = split_budget(total, relays);
        prop_assert_eq!(parts.len(), relays + 1);
        prop_assert_eq!(parts.iter().sum::<u64>(), total);
        let (lo, hi) = (parts.iter().min().unwrap(), parts.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn schedule_detects_each_bit_once(len in 1usize..40, relays in 0usize..6, half in any::<bool>()) {
        let mode = if half { DuplexMode::Half } else { DuplexMode::Full };
        let s = BitSchedule::new(mode, len, relays).unwrap();
        prop_assert_eq!(s.intervals, if half { 2 * len + relays - 1 } else { len + relays });
        for node in 1..=relays + 1 {
            let detected: Vec<usize> = (1..=s.intervals).filter_map(|t| s.detected_bit(node, t)).collect();
            prop_assert_eq!(detected, (1..=len).collect::<Vec<_>>());
        }
        // a relay forwards in the interval after it detects
        for node in 1..=relays {
            for bit in 1..=len {
                prop_assert_eq!(s.transmit_interval(node, bit), s.detect_interval(node, bit) + 1);
            }
        }
        if half {
            // no half-duplex node transmits and detects in the same interval
            for node in 1..=relays {
                let tx = s.transmit_mask(node);
                let rx = s.detect_mask(node);
                prop_assert!(tx.iter().zip(&rx).all(|(a, b)| !(*a && *b)));
            }
        }
    }

    #[test]
    fn poisson_cdf_is_a_cdf(xi in 1u32..400, mean in 0.0f64..500.0) {
        let p = poisson_cdf(xi, mean);
        prop_assert!((0.0..=1.0).contains(&p));
        // up to rounding of the accumulated sum near 1
        prop_assert!(poisson_cdf(xi + 1, mean) >= p - 1e-12);
        prop_assert!(poisson_cdf(xi, mean * 1.1 + 0.01) <= p + 1e-12);
    }

    #[test]
    fn observation_probabilities_are_ordered(
        d1 in 50e-9f64..2e-6, extra in 1e-9f64..1e-6, t in 1e-6f64..1e-3, r in 10e-9f64..100e-9,
    ) {
        let v = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
        let near = p_ob(d1, t, v, D);
        let far = p_ob(d1 + extra, t, v, D);
        prop_assert!((0.0..=1.0).contains(&near));
        prop_assert!(far <= near);
        let own = p_self(t, r, D);
        prop_assert!((0.0..=1.0).contains(&own));
        prop_assert!(p_self(t * 2.0, r, D) <= own);
    }

    #[test]
    fn single_link_error_is_a_probability(m0 in 0.0f64..200.0, signal in 0.0f64..200.0, xi in 1.0f64..300.0, p1 in 0.01f64..0.99) {
        let e = single_link_error(m0, m0 + signal, xi, p1);
        prop_assert!((0.0..=1.0).contains(&e));
    }

    #[test]
    fn crossings_invert_each_other(
        signal_sum in 1e-4f64..0.1, m0 in 0.1f64..50.0, signal in 0.5f64..200.0, p1 in 0.05f64..0.95, xi in 1.0f64..200.0,
    ) {
        let input = LinkOptimizationInput { signal_sum, m0, m1: m0 + signal, p1 };
        let na = na_crossing(&input, xi).unwrap();
        let back = xi_crossing(&input, na).unwrap();
        prop_assert!((back - xi).abs() <= 1e-9 * xi.max(1.0), "{} vs {}", back, xi);
    }
}
