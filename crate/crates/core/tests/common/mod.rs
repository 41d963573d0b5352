//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stvg::autograd::{Graph, Tensor};
use stvg::{
    BBox, Batch, ForwardOptions, GroundingAnnotation, InputShape, LossConfig, Model, ModelConfig, Params, Sample, Segment,
    SynthConfig, TubePrediction,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// IoU from corner coordinates, written out independently of the library.
pub fn oracle_box_iou(a: &BBox, b: &BBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = (a.cx - a.w / 2.0, a.cy - a.h / 2.0, a.cx + a.w / 2.0, a.cy + a.h / 2.0);
    let (bx1, by1, bx2, by2) = (b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0, b.cy + b.h / 2.0);
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    let union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn frames(s: &Segment) -> BTreeSet<usize> {
    (s.start..=s.end).collect()
}

pub fn oracle_tiou(p: &Segment, g: &Segment) -> f64 {
    let (a, b) = (frames(p), frames(g));
    a.intersection(&b).count() as f64 / a.union(&b).count() as f64
}

pub fn oracle_viou(p: &TubePrediction, g: &GroundingAnnotation) -> f64 {
    let (a, b) = (frames(&p.segment), frames(&g.segment));
    let mut sum = 0.0;
    for &f in a.intersection(&b) {
        sum += oracle_box_iou(&p.boxes[f], &g.boxes[f - g.segment.start]);
    }
    sum / a.union(&b).count() as f64
}

pub fn random_box(r: &mut impl Rng) -> BBox {
    let w = r.gen_range(0.02..0.6);
    let h = r.gen_range(0.02..0.6);
    BBox::new(r.gen_range(w / 2.0..1.0 - w / 2.0), r.gen_range(h / 2.0..1.0 - h / 2.0), w, h)
}

pub fn random_segment(r: &mut impl Rng, n: usize) -> Segment {
    let a = r.gen_range(0..n);
    let b = r.gen_range(0..n);
    Segment { start: a.min(b), end: a.max(b) }
}

/// A randomized suite of clips: ground truth and a prediction per clip.
/// Some predictions reuse the ground-truth boxes so IoU-1 frames occur.
pub fn random_suite(r: &mut impl Rng, n_clips: usize, max_frames: usize) -> (Vec<TubePrediction>, Vec<GroundingAnnotation>) {
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for c in 0..n_clips {
        let n = r.gen_range(1..=max_frames);
        let id = format!("c{c:04}");
        let gs = random_segment(r, n);
        let gboxes: Vec<BBox> = (gs.start..=gs.end).map(|_| random_box(r)).collect();
        let ps = random_segment(r, n);
        let exact = r.gen_bool(0.3);
        let pboxes: Vec<BBox> = (0..n)
            .map(|f| if exact && gs.contains(f) { gboxes[f - gs.start] } else { random_box(r) })
            .collect();
        gts.push(GroundingAnnotation::new(&id, gs, gboxes).unwrap());
        preds.push(TubePrediction { clip_id: id, segment: ps, boxes: pboxes });
    }
    (preds, gts)
}

fn tent(t: f64) -> f64 {
    (1.0 - t.abs()).max(0.0)
}

/// RoIAlign reference: the map is first resampled onto a grid 64 times finer
/// than the cells (each node a tent-weighted sum over every cell, zero
/// outside), samples are read from that grid bilinearly, and the samples of
/// each bin are averaged.
pub fn oracle_roi_align(map: &[f64], h: usize, w: usize, d: usize, b: &BBox, pool: usize, ratio: usize) -> Vec<f64> {
    const OS: usize = 64;
    let (fh, fw) = (h * OS + 1, w * OS + 1);
    // fine node (i, j) sits at image coordinate (i / OS, j / OS)
    let mut fine = vec![0.0; fh * fw * d];
    for i in 0..fh {
        let y = i as f64 / OS as f64;
        for j in 0..fw {
            let x = j as f64 / OS as f64;
            for cy in 0..h {
                let wy = tent(y - 0.5 - cy as f64);
                if wy == 0.0 {
                    continue;
                }
                for cx in 0..w {
                    let wx = tent(x - 0.5 - cx as f64);
                    if wx == 0.0 {
                        continue;
                    }
                    for k in 0..d {
                        fine[(i * fw + j) * d + k] += wy * wx * map[(cy * w + cx) * d + k];
                    }
                }
            }
        }
    }
    let lookup = |y: f64, x: f64, k: usize| -> f64 {
        let (fy, fx) = (y * OS as f64, x * OS as f64);
        let (i0, j0) = (fy.floor().clamp(0.0, (fh - 2) as f64) as usize, fx.floor().clamp(0.0, (fw - 2) as f64) as usize);
        let (ty, tx) = (fy - i0 as f64, fx - j0 as f64);
        let at = |i: usize, j: usize| fine[(i * fw + j) * d + k];
        (1.0 - ty) * ((1.0 - tx) * at(i0, j0) + tx * at(i0, j0 + 1)) + ty * ((1.0 - tx) * at(i0 + 1, j0) + tx * at(i0 + 1, j0 + 1))
    };
    let (x0, y0) = ((b.cx - b.w / 2.0) * w as f64, (b.cy - b.h / 2.0) * h as f64);
    let (bw, bh) = (b.w * w as f64 / pool as f64, b.h * h as f64 / pool as f64);
    let mut out = vec![0.0; pool * pool * d];
    for py in 0..pool {
        for px in 0..pool {
            for sy in 0..ratio {
                for sx in 0..ratio {
                    let y = y0 + bh * (py as f64 + (sy as f64 + 0.5) / ratio as f64);
                    let x = x0 + bw * (px as f64 + (sx as f64 + 0.5) / ratio as f64);
                    for k in 0..d {
                        out[(py * pool + px) * d + k] += lookup(y, x, k) / (ratio * ratio) as f64;
                    }
                }
            }
        }
    }
    out
}

fn pass(scores: &[f64], idx: &BTreeSet<usize>, theta: f64) -> BTreeSet<usize> {
    let above: BTreeSet<usize> = idx.iter().copied().filter(|&i| scores[i] > theta).collect();
    if !above.is_empty() {
        return above;
    }
    // fallback: the first of the highest-scoring candidates
    let best = idx.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
    idx.iter().copied().filter(|&i| scores[i] == best).take(1).collect()
}

/// Two-level filtering by set operations: level-1 survivors intersected
/// with the level-2 survivors computed over those same frames.
pub fn oracle_two_level(s_t: &[f64], s_s: &[f64], theta_t: f64, theta_s: f64) -> Vec<usize> {
    let all: BTreeSet<usize> = (0..s_t.len()).collect();
    let level1 = pass(s_t, &all, theta_t);
    let level2 = pass(s_s, &level1, theta_s);
    level1.intersection(&level2).copied().collect()
}

/// Exhaustive `argmax h_s[i] * h_e[j]` over `i <= j`, first pair in
/// lexicographic order on ties.
#[allow(clippy::needless_range_loop)]
pub fn oracle_segment(h_s: &[f64], h_e: &[f64]) -> Segment {
    let mut pairs = Vec::new();
    for i in 0..h_s.len() {
        for j in i..h_e.len() {
            pairs.push((h_s[i] * h_e[j], i, j));
        }
    }
    let best = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let (_, i, j) = *pairs.iter().find(|p| p.0 == best).unwrap();
    Segment { start: i, end: j }
}

pub fn random_simplex(r: &mut impl Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0f64).powi(3)).collect();
    let z: f64 = v.iter().sum();
    if z == 0.0 {
        return vec![1.0 / n as f64; n];
    }
    v.into_iter().map(|x| x / z).collect()
}

/// Small clips for fast model tests: 4 frames of 16x16.
pub fn tiny_synth() -> SynthConfig {
    SynthConfig { n_frames: 4, image_size: 16, n_distractors: 1, min_size: 3.0, max_size: 5.0, speed: 0.5, ..Default::default() }
}

pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        stages: 2,
        hidden: 16,
        heads: 2,
        appearance_channels: 16,
        motion_channels: 16,
        text_channels: 16,
        encoder_layers: 1,
        ffn_mult: 2,
        pool_size: 2,
        ..Default::default()
    }
}

pub fn tiny_samples(n: usize, seed: u64) -> Vec<Sample> {
    stvg::generate_samples(&tiny_synth(), n, seed).unwrap()
}

pub fn tiny_model(cfg: &ModelConfig) -> Model {
    Model::new(cfg, InputShape::from(&tiny_synth())).unwrap()
}

pub fn batch_of(samples: &[Sample]) -> Batch {
    let items: Vec<_> = samples.iter().map(|s| (&s.clip, &s.query)).collect();
    Batch::new(&items).unwrap()
}

pub fn loss_value(model: &Model, params: &Params<f64>, batch: &Batch, samples: &[Sample], loss: &LossConfig) -> f64 {
    loss_value_frozen(model, params, batch, samples, loss, None)
}

/// Loss with the detached quantities (RoI boxes, filter scores, IoU
/// targets) replayed from `frozen` when given.
pub fn loss_value_frozen(
    model: &Model,
    params: &Params<f64>,
    batch: &Batch,
    samples: &[Sample],
    loss: &LossConfig,
    frozen: Option<&[Tensor<f64>]>,
) -> f64 {
    let mut g = frozen.map_or_else(Graph::<f64>::new, |f| Graph::replaying(f.to_vec()));
    let p = params.bind(&mut g, false);
    let out = model.forward(&mut g, &p, batch, ForwardOptions::default()).unwrap();
    let gts: Vec<_> = samples.iter().map(|s| &s.annotation).collect();
    model.loss(&mut g, &out, &gts, loss).1.total
}

#[derive(Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub worst: f64,
    pub worst_at: String,
    pub groups: BTreeSet<String>,
}

/// Central differences of the total loss, with the detached quantities held
/// at their unperturbed values, against the tape gradient at up to
/// `per_tensor` entries of every parameter tensor.
pub fn gradcheck(model: &Model, seed: u64, per_tensor: usize, samples: &[Sample]) -> GradCheck {
    const H: f64 = 1e-5;
    const FLOOR: f64 = 1e-4;
    let loss_cfg = LossConfig::default();
    let mut params: Params<f64> = model.init_params(seed);
    let batch = batch_of(samples);
    let mut g = Graph::<f64>::recording();
    let p = params.bind(&mut g, true);
    let out = model.forward(&mut g, &p, &batch, ForwardOptions::default()).unwrap();
    let gts: Vec<_> = samples.iter().map(|s| &s.annotation).collect();
    let (loss, _) = model.loss(&mut g, &out, &gts, &loss_cfg);
    let grads = g.backward(loss);
    let frozen = g.take_frozen();
    let analytic: Vec<Vec<f64>> = p
        .vars()
        .iter()
        .zip(params.values())
        .map(|(&v, t)| grads.get(v).map_or_else(|| vec![0.0; t.len()], |gt| gt.data().to_vec()))
        .collect();
    let mut r = rng(seed ^ 0xC4EC);
    let mut res = GradCheck { checked: 0, worst: 0.0, worst_at: String::new(), groups: BTreeSet::new() };
    let specs = params.specs().to_vec();
    for (ti, spec) in specs.iter().enumerate() {
        let n = spec.numel();
        let picks: Vec<usize> = if n <= per_tensor { (0..n).collect() } else { (0..per_tensor).map(|_| r.gen_range(0..n)).collect() };
        for e in picks {
            let orig = params.values()[ti].data()[e];
            params.values_mut()[ti].data_mut()[e] = orig + H;
            let up = loss_value_frozen(model, &params, &batch, samples, &loss_cfg, Some(&frozen));
            params.values_mut()[ti].data_mut()[e] = orig - H;
            let down = loss_value_frozen(model, &params, &batch, samples, &loss_cfg, Some(&frozen));
            params.values_mut()[ti].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[ti][e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            if rel > res.worst {
                res.worst = rel;
                res.worst_at = format!("{}[{e}] analytic {a:.6e} numeric {numeric:.6e}", spec.name);
            }
            res.checked += 1;
        }
        res.groups.insert(format!("{:?}", spec.group));
    }
    res
}
