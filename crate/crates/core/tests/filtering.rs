mod common;

use common::*;
use proptest::prelude::*;
use stvg::icr::{high_pass_filter, kept_frames, FilterConfig};
use stvg::Fusion;

/// Scores on a coarse grid so ties and exact-threshold values come up.
fn scores(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![(1u32..10).prop_map(|k| k as f64 / 10.0), 0.001f64..0.999], n)
}

fn frames_and_scores() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=16).prop_flat_map(|n| (scores(n), scores(n)))
}

fn cfg(theta_t: f64, theta_s: f64) -> FilterConfig {
    FilterConfig { theta_t, theta_s, ..Default::default() }
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.contains(x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn two_level_matches_set_oracle((s_t, s_s) in frames_and_scores(), tt in 0.0f64..1.0, ts in 0.0f64..1.0) {
        let got = kept_frames(&s_t, &s_s, &cfg(tt, ts));
        prop_assert_eq!(got.clone(), oracle_two_level(&s_t, &s_s, tt, ts));
        prop_assert!(!got.is_empty());
        prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn raising_theta_never_enlarges((s_t, s_s) in frames_and_scores(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = (a.min(b), a.max(b));
        if s_t.iter().any(|&s| s > hi) {
            prop_assert!(is_subset(&high_pass_filter(&s_t, hi), &high_pass_filter(&s_t, lo)));
        }
        // spatial threshold with the temporal level fixed
        let l1 = high_pass_filter(&s_t, 0.7);
        if l1.iter().any(|&i| s_s[i] > hi) {
            prop_assert!(is_subset(&kept_frames(&s_t, &s_s, &cfg(0.7, hi)), &kept_frames(&s_t, &s_s, &cfg(0.7, lo))));
        }
        // temporal threshold with no fallback at either level
        let l1_hi = high_pass_filter(&s_t, hi);
        if s_t.iter().any(|&s| s > hi) && l1_hi.iter().any(|&i| s_s[i] > 0.8) {
            prop_assert!(is_subset(&kept_frames(&s_t, &s_s, &cfg(hi, 0.8)), &kept_frames(&s_t, &s_s, &cfg(lo, 0.8))));
        }
    }

    #[test]
    fn zero_thresholds_keep_everything((s_t, s_s) in frames_and_scores()) {
        let all: Vec<usize> = (0..s_t.len()).collect();
        prop_assert_eq!(kept_frames(&s_t, &s_s, &cfg(0.0, 0.0)), all.clone());
        let sum = FilterConfig { fusion: Fusion::Sum, theta_sum: 0.0, ..Default::default() };
        prop_assert_eq!(kept_frames(&s_t, &s_s, &sum), all.clone());
        let product = FilterConfig { fusion: Fusion::Product, theta_product: 0.0, ..Default::default() };
        prop_assert_eq!(kept_frames(&s_t, &s_s, &product), all);
    }

    #[test]
    fn one_level_variants_are_plain_thresholds((s_t, s_s) in frames_and_scores(), th in 0.0f64..2.0) {
        let sum = FilterConfig { fusion: Fusion::Sum, theta_sum: th, ..Default::default() };
        let joint: Vec<f64> = s_t.iter().zip(&s_s).map(|(a, b)| a + b).collect();
        prop_assert_eq!(kept_frames(&s_t, &s_s, &sum), high_pass_filter(&joint, th));
        let p = th / 2.0;
        let product = FilterConfig { fusion: Fusion::Product, theta_product: p, ..Default::default() };
        let joint: Vec<f64> = s_t.iter().zip(&s_s).map(|(a, b)| a * b).collect();
        prop_assert_eq!(kept_frames(&s_t, &s_s, &product), high_pass_filter(&joint, p));
    }
}

#[test]
fn fallback_keeps_first_best() {
    assert_eq!(high_pass_filter(&[0.3, 0.6, 0.6, 0.1], 0.7), vec![1]);
    // level 1 keeps {1, 2}; neither passes level 2, the better of the two wins
    assert_eq!(kept_frames(&[0.1, 0.9, 0.8], &[0.9, 0.2, 0.5], &cfg(0.7, 0.8)), vec![2]);
    assert_eq!(oracle_two_level(&[0.1, 0.9, 0.8], &[0.9, 0.2, 0.5], 0.7, 0.8), vec![2]);
}
