mod common;

use common::*;
use stvg::autograd::Graph;
use stvg::{ForwardOptions, Fusion, LossConfig, ModelConfig, Params, Pool};

const TOL: f64 = 1e-4;

fn check(cfg: &ModelConfig, seed: u64) {
    let model = tiny_model(cfg);
    let samples = tiny_samples(2, seed);
    let r = gradcheck(&model, seed, 4, &samples);
    assert!(r.worst <= TOL, "worst relative error {:.3e} at {}", r.worst, r.worst_at);
    assert!(r.groups.contains("Backbone") && r.groups.contains("Head"));
}

#[test]
fn full_model_gradients() {
    check(&tiny_model_config(), 0);
}

#[test]
fn baseline_gradients() {
    check(&ModelConfig { use_context: false, ..tiny_model_config() }, 1);
}

#[test]
fn variant_gradients() {
    check(
        &ModelConfig {
            pool: Pool::Flatten,
            context_in_tdb: true,
            share_heads: false,
            fusion: Fusion::Product,
            stages: 3,
            ..tiny_model_config()
        },
        2,
    );
    check(&ModelConfig { use_motion: false, motion_context: false, ..tiny_model_config() }, 3);
}

fn grads_by_name(cfg: &ModelConfig, loss: &LossConfig, seed: u64) -> Vec<(String, f64)> {
    let model = tiny_model(cfg);
    let samples = tiny_samples(2, seed);
    let batch = batch_of(&samples);
    let params: Params<f64> = model.init_params(seed);
    let mut g = Graph::<f64>::new();
    let p = params.bind(&mut g, true);
    let out = model.forward(&mut g, &p, &batch, ForwardOptions::default()).unwrap();
    let gts: Vec<_> = samples.iter().map(|s| &s.annotation).collect();
    let (l, _) = model.loss(&mut g, &out, &gts, loss);
    let grads = g.backward(l);
    params
        .specs()
        .iter()
        .zip(p.vars())
        .map(|(s, &v)| (s.name.clone(), grads.get(v).map_or(0.0, |t| t.data().iter().map(|x| x.abs()).sum())))
        .collect()
}

#[test]
fn score_heads_learn_only_from_their_supervision() {
    let cfg = tiny_model_config();
    let with = grads_by_name(&cfg, &LossConfig::default(), 4);
    let without = grads_by_name(&cfg, &LossConfig { lambda_temporal: 0.0, lambda_spatial: 0.0, ..Default::default() }, 4);
    let is_score = |n: &str| n.contains(".tscore.") || n.contains(".sscore.");
    assert!(with.iter().filter(|(n, _)| is_score(n)).all(|(_, g)| *g > 0.0));
    for (n, g) in without.iter().filter(|(n, _)| is_score(n)) {
        assert_eq!(*g, 0.0, "{n} received gradient without score supervision");
    }
    // the fusion MLP still learns through the context it produces
    assert!(without.iter().filter(|(n, _)| n.contains(".fusion.")).any(|(_, g)| *g > 0.0));
}

#[test]
fn filtered_context_tokens_get_no_gradient() {
    let cfg = ModelConfig { theta_t: 0.5, theta_s: 0.5, ..tiny_model_config() };
    let model = tiny_model(&cfg);
    let samples = tiny_samples(3, 6);
    let batch = batch_of(&samples);
    let params: Params<f64> = model.init_params(6);
    let mut g = Graph::<f64>::new();
    let p = params.bind(&mut g, true);
    let out = model.forward(&mut g, &p, &batch, ForwardOptions::default()).unwrap();
    let gts: Vec<_> = samples.iter().map(|s| &s.annotation).collect();
    let (l, _) = model.loss(&mut g, &out, &gts, &LossConfig::default());
    let ctx = out.decoder.stages[0].context.as_ref().expect("context after stage 1");
    let grads = g.backward_retaining(l, &[ctx.tokens]);
    let gt = grads.get(ctx.tokens).expect("context tokens are used");
    let n = model.shape.n_frames;
    for (c, kept) in ctx.kept.iter().enumerate() {
        for f in 0..n {
            let row = gt.row(c * n + f);
            let mass: f64 = row.iter().map(|x| x.abs()).sum();
            if kept.contains(&f) {
                assert!(mass > 0.0, "kept frame {f} of clip {c} has no gradient");
            } else {
                assert_eq!(mass, 0.0, "filtered frame {f} of clip {c} leaks gradient");
            }
        }
    }
}
