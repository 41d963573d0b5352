mod common;

use stvg::metrics::tube_viou;
use stvg::synth::{build_dataset, clip_seed, decode_tokens, generate_clip, generate_indexed, Motion};
use stvg::{Dataset, SynthConfig};

#[test]
fn same_seed_same_clip() {
    let cfg = SynthConfig::default();
    let a = generate_clip(&cfg, "x", clip_seed(1, 3)).unwrap();
    let b = generate_clip(&cfg, "x", clip_seed(1, 3)).unwrap();
    assert_eq!(a.clip.data(), b.clip.data());
    assert_eq!(a.query, b.query);
    assert_eq!(a.annotation, b.annotation);
    let c = generate_clip(&cfg, "x", clip_seed(1, 4)).unwrap();
    assert_ne!(a.clip.data(), c.clip.data());
}

#[test]
fn clips_satisfy_their_invariants() {
    let cfg = SynthConfig::default();
    for i in 0..100 {
        let c = generate_clip(&cfg, "x", clip_seed(7, i)).unwrap();
        let a = &c.annotation;
        a.validate().unwrap();
        assert!(a.segment.end < cfg.n_frames && a.segment.len() >= cfg.min_segment);
        assert!(a.boxes.iter().all(|b| b.is_valid()));
        // target plus distractors, all present during the segment
        assert_eq!(c.objects.len(), cfg.n_distractors + 1);
        for f in a.segment.frames() {
            assert!(c.objects.iter().all(|o| o.visible.contains(f)));
        }
        // the query names the target
        let t = c.objects[c.target].attributes;
        let text = decode_tokens(c.query.tokens());
        for w in [t.color.word(), t.shape.word()] {
            assert!(text.contains(w), "{text:?} misses {w}");
        }
        let motion_named = match t.motion {
            Motion::Still => text.contains("still") || text.contains("not moving"),
            m => text.contains(m.word()),
        };
        assert!(motion_named, "{text:?} misses the motion of {t}");
        // no other object shares the named attributes
        for (k, o) in c.objects.iter().enumerate() {
            if k != c.target {
                assert_ne!(o.attributes, t);
            }
        }
        let oracle = c.oracle_prediction();
        assert!((tube_viou(&oracle, a).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn motion_classes_are_balanced() {
    let cfg = SynthConfig::default();
    let mut counts = [0usize; 5];
    for i in 0..1000 {
        let c = generate_indexed(&cfg, 0, i).unwrap();
        let m = c.objects[c.target].attributes.motion;
        counts[Motion::ALL.iter().position(|&x| x == m).unwrap()] += 1;
    }
    for c in counts {
        assert!((180..=220).contains(&c), "{counts:?}");
    }
}

#[test]
fn dataset_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { seed: 3, ..Default::default() };
    let m = build_dataset(&cfg, 500, dir.path()).unwrap();
    assert_eq!(m.clip_ids.len(), 500);
    let ds = Dataset::load(dir.path()).unwrap();
    assert_eq!(ds.manifest, m);
    let fresh = stvg::generate_samples(&cfg, 500, cfg.seed).unwrap();
    assert_eq!(ds.samples.len(), fresh.len());
    for (a, b) in ds.samples.iter().zip(&fresh) {
        assert_eq!(a.annotation, b.annotation);
        assert_eq!(a.query, b.query);
        assert_eq!(a.clip.data(), b.clip.data(), "{}", a.annotation.clip_id);
    }
}

#[test]
fn rebuilding_reproduces_identical_files() {
    let cfg = SynthConfig { seed: 3, ..Default::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    build_dataset(&cfg, 5, a.path()).unwrap();
    build_dataset(&cfg, 5, b.path()).unwrap();
    for f in ["manifest.json", "annotations.jsonl", "clips/clip_00000.bin", "clips/clip_00004.bin"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn empty_dataset_and_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig::default();
    let m = build_dataset(&cfg, 0, dir.path()).unwrap();
    assert!(m.clip_ids.is_empty());
    assert_eq!(std::fs::read_dir(dir.path().join("clips")).unwrap().count(), 0);
    assert_eq!(cfg.hash(), SynthConfig::default().hash());
    assert_ne!(cfg.hash(), SynthConfig { n_distractors: 3, ..Default::default() }.hash());
    assert_ne!(cfg.hash(), SynthConfig { seed: 1, ..Default::default() }.hash());
}

#[test]
fn impossible_layouts_fail_cleanly() {
    // four large distractors cannot all stay clear of the target
    let cfg = SynthConfig { image_size: 16, min_size: 12.0, max_size: 13.0, speed: 0.0, n_distractors: 4, ..Default::default() };
    cfg.validate().unwrap();
    let err = generate_clip(&cfg, "x", clip_seed(0, 0)).unwrap_err();
    assert!(matches!(err, stvg::Error::Generation(_)), "{err}");
}
