mod common;

use common::*;
use stvg::autograd::Graph;
use stvg::{ForwardOptions, ModelConfig};

fn decode_values(cfg: &ModelConfig, use_context: bool, seed: u64) -> (Vec<Vec<f32>>, usize, usize) {
    let model = tiny_model(cfg);
    let samples = tiny_samples(3, 11);
    let batch = batch_of(&samples);
    let params = model.init_params::<f32>(seed);
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let out = model.forward(&mut g, &p, &batch, ForwardOptions { use_context, capture_attention: false }).unwrap();
    let mut vals = Vec::new();
    for s in &out.decoder.stages {
        vals.push(g.value(s.boxes).data().to_vec());
        vals.push(g.value(s.temporal).data().to_vec());
        vals.push(g.value(s.q).data().to_vec());
    }
    (vals, out.decoder.icg_calls, out.decoder.icr_calls)
}

#[test]
fn context_off_equals_context_free_model() {
    let full = tiny_model_config();
    let base = ModelConfig { use_context: false, ..full.clone() };
    let (a, icg, icr) = decode_values(&full, false, 21);
    let (b, icg_b, icr_b) = decode_values(&base, true, 21);
    assert_eq!((icg, icr, icg_b, icr_b), (0, 0, 0, 0));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        let xb: Vec<u32> = x.iter().map(|v| v.to_bits()).collect();
        let yb: Vec<u32> = y.iter().map(|v| v.to_bits()).collect();
        assert_eq!(xb, yb);
    }
}

#[test]
fn context_runs_every_stage_and_refines_all_but_last() {
    let cfg = ModelConfig { stages: 3, ..tiny_model_config() };
    let (with, icg, icr) = decode_values(&cfg, true, 21);
    assert_eq!((icg, icr), (3, 2));
    let (without, ..) = decode_values(&cfg, false, 21);
    // the first stage never sees context
    assert_eq!(with[0], without[0]);
    assert_ne!(with.last(), without.last());
}

#[test]
fn baseline_has_no_context_parameters() {
    let base = tiny_model(&ModelConfig { use_context: false, ..tiny_model_config() });
    let full = tiny_model(&tiny_model_config());
    let names = |m: &stvg::Model| m.layout().specs().iter().map(|s| s.name.clone()).collect::<Vec<_>>();
    let (b, f) = (names(&base), names(&full));
    assert!(b.iter().all(|n| f.contains(n)));
    assert!(b.iter().all(|n| !n.contains("context") && !n.contains("score") && !n.contains("fusion")));
    assert!(f.len() > b.len());
}
