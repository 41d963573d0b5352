mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use stvg::icg::roi_align;
use stvg::BBox;

fn random_map(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_oversampled_oracle(seed in any::<u64>(), h in 1usize..7, w in 1usize..7, d in 1usize..3,
                                  pool in 1usize..4, ratio in 1usize..3) {
        let mut r = rng(seed);
        let map = random_map(&mut r, h * w * d);
        let b = random_box(&mut r);
        let got = roi_align(&map, h, w, d, &b, pool, ratio);
        let want = oracle_roi_align(&map, h, w, d, &b, pool, ratio);
        for (g, o) in got.iter().zip(&want) {
            prop_assert!((g - o).abs() < 1e-3, "{g} vs {o}");
        }
    }

    #[test]
    fn linear_in_the_map(seed in any::<u64>(), a in -3.0f64..3.0, c in -3.0f64..3.0) {
        let mut r = rng(seed);
        let (h, w, d) = (5, 6, 2);
        let m1 = random_map(&mut r, h * w * d);
        let m2 = random_map(&mut r, h * w * d);
        let b = random_box(&mut r);
        let mix: Vec<f64> = m1.iter().zip(&m2).map(|(x, y)| a * x + c * y).collect();
        let lhs = roi_align(&mix, h, w, d, &b, 3, 2);
        let r1 = roi_align(&m1, h, w, d, &b, 3, 2);
        let r2 = roi_align(&m2, h, w, d, &b, 3, 2);
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (a * r1[i] + c * r2[i])).abs() < 1e-6);
        }
    }

    #[test]
    fn preserves_constants_inside(seed in any::<u64>(), v in -5.0f64..5.0) {
        let mut r = rng(seed);
        let (h, w) = (6, 6);
        // every sample lands at least half a cell from the border
        let bw = r.gen_range(0.05..0.8) * (w as f64 - 1.0) / w as f64;
        let bh = r.gen_range(0.05..0.8) * (h as f64 - 1.0) / h as f64;
        let lo_x = 0.5 / w as f64 + bw / 2.0;
        let lo_y = 0.5 / h as f64 + bh / 2.0;
        let b = BBox::new(r.gen_range(lo_x..1.0 - lo_x), r.gen_range(lo_y..1.0 - lo_y), bw, bh);
        let out = roi_align(&vec![v; h * w], h, w, 1, &b, 2, 2);
        prop_assert!(out.iter().all(|o| (o - v).abs() < 1e-6));
    }
}

#[test]
fn center_of_two_by_two() {
    let out = roi_align(&[1.0, 2.0, 3.0, 4.0], 2, 2, 1, &BBox::new(0.5, 0.5, 1.0, 1.0), 1, 1);
    assert!((out[0] - 2.5).abs() < 1e-12);
    let o = oracle_roi_align(&[1.0, 2.0, 3.0, 4.0], 2, 2, 1, &BBox::new(0.5, 0.5, 1.0, 1.0), 1, 1);
    assert!((o[0] - 2.5).abs() < 1e-12);
}

#[test]
fn border_samples_read_zero_padding() {
    // a full-image box with one sample per bin on a 1x1 map: samples sit at
    // the cell center, so nothing leaks
    let out = roi_align(&[1.0], 1, 1, 1, &BBox::new(0.5, 0.5, 1.0, 1.0), 1, 1);
    assert!((out[0] - 1.0).abs() < 1e-12);
    // with 2x2 samples each one is a quarter cell from the center and loses
    // a quarter of its weight on each axis
    let out = roi_align(&[1.0], 1, 1, 1, &BBox::new(0.5, 0.5, 1.0, 1.0), 1, 2);
    assert!((out[0] - 0.5625).abs() < 1e-12);
}
