mod common;

use common::*;
use stvg::autograd::Graph;
use stvg::encoder::TokenType;
use stvg::{Batch, ForwardOptions, ModelConfig, TextQuery};

#[test]
fn forward_shapes() {
    let cfg = tiny_model_config();
    let model = tiny_model(&cfg);
    let samples = tiny_samples(3, 1);
    let batch = batch_of(&samples);
    let params = model.init_params::<f32>(0);
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let out = model.forward(&mut g, &p, &batch, ForwardOptions::default()).unwrap();
    let n = model.shape.n_frames;
    let lay = out.sequence.layout;
    assert_eq!((lay.h, lay.w), (2, 2));
    assert_eq!(lay.per_frame(), 2 * 4 + 8);
    assert_eq!(g.shape(out.sequence.x), &[3 * n * lay.per_frame(), cfg.hidden]);
    assert_eq!(out.decoder.stages.len(), cfg.stages);
    for s in &out.decoder.stages {
        assert_eq!(g.shape(s.boxes), &[3 * n, 4]);
        assert_eq!(g.shape(s.temporal), &[3, 2, n]);
        let st = s.state(&g, 1, n);
        assert!((st.start.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        assert!((st.end.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        assert!(st.boxes.iter().all(|b| b.is_valid()));
    }
    let preds = model.predictions(&g, &out, &["a", "b", "c"]);
    assert!(preds.iter().all(|p| p.boxes.len() == n && p.segment.end < n));
}

#[test]
fn token_layout_without_motion() {
    let model = tiny_model(&ModelConfig { use_motion: false, motion_context: false, ..tiny_model_config() });
    let samples = tiny_samples(1, 2);
    let mut g = Graph::new();
    let params = model.init_params::<f32>(0);
    let p = params.bind(&mut g, false);
    let out = model.forward(&mut g, &p, &batch_of(&samples), ForwardOptions::default()).unwrap();
    let lay = out.sequence.layout;
    assert_eq!(lay.per_frame(), 4 + 8);
    assert!(lay.types().iter().all(|t| *t != TokenType::Motion));
}

#[test]
fn query_words_change_the_prediction() {
    let model = tiny_model(&tiny_model_config());
    let s = &tiny_samples(1, 3)[0];
    let words = s.query.n_words();
    assert!(words < s.query.text_len());
    let mut tokens = s.query.tokens().to_vec();
    let run = |q: &TextQuery| {
        let batch = Batch::new(&[(&s.clip, q)]).unwrap();
        let params = model.init_params::<f32>(0);
        let mut g = Graph::new();
        let p = params.bind(&mut g, false);
        let out = model.forward(&mut g, &p, &batch, ForwardOptions::default()).unwrap();
        g.value(out.decoder.stages.last().unwrap().boxes).data().to_vec()
    };
    let base = run(&s.query);
    // changing a real word changes the prediction
    tokens[0] = if tokens[0] == 5 { 6 } else { 5 };
    let changed = TextQuery::from_padded(tokens, stvg::synth::vocab_size()).unwrap();
    assert_ne!(run(&changed), base);
}

#[test]
fn batch_rejects_mismatched_clips() {
    let a = tiny_samples(1, 0).remove(0);
    let b = stvg::generate_samples(&stvg::SynthConfig::default(), 1, 0).unwrap().remove(0);
    assert!(Batch::new(&[(&a.clip, &a.query), (&b.clip, &b.query)]).is_err());
    let model = tiny_model(&tiny_model_config());
    let batch = Batch::new(&[(&b.clip, &b.query)]).unwrap();
    let params = model.init_params::<f32>(0);
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    assert!(model.forward(&mut g, &p, &batch, ForwardOptions::default()).is_err());
}

#[test]
fn predictions_are_batch_independent() {
    let model = tiny_model(&tiny_model_config());
    let params = model.init_params::<f32>(5);
    let samples = tiny_samples(5, 4);
    let opts = ForwardOptions::default();
    let one = model.predict(&params, &samples, 1, opts).unwrap();
    let all = model.predict(&params, &samples, 5, opts).unwrap();
    for (a, b) in one.iter().zip(&all) {
        assert_eq!(a.segment, b.segment);
        for (x, y) in a.boxes.iter().zip(&b.boxes) {
            assert!((x.cx - y.cx).abs() < 1e-5 && (x.w - y.w).abs() < 1e-5);
        }
    }
}
