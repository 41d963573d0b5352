mod common;

use common::*;
use proptest::prelude::*;
use stvg::metrics::tube_viou;
use stvg::{evaluate, segment_tiou, BBox, GroundingAnnotation, Segment, TubePrediction};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evaluate_matches_frame_enumeration(seed in any::<u64>(), n_clips in 1usize..12, max_frames in 1usize..=64) {
        let mut r = rng(seed);
        let (preds, gts) = random_suite(&mut r, n_clips, max_frames);
        let rep = evaluate(&preds, &gts).unwrap();
        let mut tious = Vec::new();
        let mut vious = Vec::new();
        for (p, g) in preds.iter().zip(&gts) {
            tious.push(oracle_tiou(&p.segment, &g.segment));
            vious.push(oracle_viou(p, g));
        }
        let n = n_clips as f64;
        prop_assert!((rep.m_tiou - tious.iter().sum::<f64>() / n).abs() < 1e-9);
        prop_assert!((rep.m_viou - vious.iter().sum::<f64>() / n).abs() < 1e-9);
        for r in [0.3, 0.5] {
            let frac = vious.iter().filter(|&&v| v > r).count() as f64 / n;
            prop_assert_eq!(rep.viou_at(r), Some(frac));
        }
        for (c, (t, v)) in rep.per_clip.iter().zip(tious.iter().zip(&vious)) {
            prop_assert!((c.tiou - t).abs() < 1e-9 && (c.viou - v).abs() < 1e-9);
        }
    }

    #[test]
    fn viou_bounded_by_tiou(seed in any::<u64>(), n in 1usize..40) {
        let mut r = rng(seed);
        let (preds, gts) = random_suite(&mut r, 1, n);
        let t = segment_tiou(&preds[0].segment, &gts[0].segment);
        let v = tube_viou(&preds[0], &gts[0]).unwrap();
        prop_assert!(v <= t + 1e-12);
        let mut exact = preds[0].clone();
        for f in gts[0].segment.frames() {
            exact.boxes[f] = *gts[0].box_at(f).unwrap();
        }
        prop_assert!((tube_viou(&exact, &gts[0]).unwrap() - t).abs() < 1e-12);
    }

    #[test]
    fn tiou_symmetric_and_bounded(a in 0usize..30, b in 0usize..30, c in 0usize..30, d in 0usize..30) {
        let s = Segment { start: a.min(b), end: a.max(b) };
        let t = Segment { start: c.min(d), end: c.max(d) };
        let x = segment_tiou(&s, &t);
        prop_assert_eq!(x, segment_tiou(&t, &s));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((x - oracle_tiou(&s, &t)).abs() < 1e-12);
    }
}

#[test]
fn ground_truth_as_prediction_scores_one() {
    let mut r = rng(5);
    let (_, gts) = random_suite(&mut r, 20, 30);
    let preds: Vec<TubePrediction> = gts
        .iter()
        .map(|g| {
            let mut boxes = vec![BBox::new(0.5, 0.5, 0.1, 0.1); g.segment.end + 1];
            for f in g.segment.frames() {
                boxes[f] = *g.box_at(f).unwrap();
            }
            TubePrediction { clip_id: g.clip_id.clone(), segment: g.segment, boxes }
        })
        .collect();
    let rep = evaluate(&preds, &gts).unwrap();
    assert!((rep.m_tiou - 1.0).abs() < 1e-12 && (rep.m_viou - 1.0).abs() < 1e-12);
    assert_eq!((rep.viou_at(0.3), rep.viou_at(0.5)), (Some(1.0), Some(1.0)));
}

#[test]
fn report_is_independent_of_input_order() {
    let mut r = rng(9);
    let (mut preds, gts) = random_suite(&mut r, 15, 20);
    let a = evaluate(&preds, &gts).unwrap();
    preds.reverse();
    let b = evaluate(&preds, &gts).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let ids: Vec<&str> = a.per_clip.iter().map(|c| c.clip_id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}

#[test]
fn mismatched_clip_is_an_error() {
    let b = BBox::new(0.5, 0.5, 0.2, 0.2);
    let gt = GroundingAnnotation::new("a", Segment { start: 0, end: 2 }, vec![b; 3]).unwrap();
    let p = TubePrediction { clip_id: "b".into(), segment: Segment { start: 0, end: 2 }, boxes: vec![b; 3] };
    assert!(tube_viou(&p, &gt).is_err());
    let short = TubePrediction { clip_id: "a".into(), segment: Segment { start: 0, end: 1 }, boxes: vec![b; 2] };
    assert!(tube_viou(&short, &gt).is_err());
}
