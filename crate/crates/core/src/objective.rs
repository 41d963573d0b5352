//! Training objective: temporal KL and BCE terms plus spatial smooth-L1,
//! IoU and BCE terms, summed over decoding stages.

use autograd::{BoxLossKind, Graph, Real, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::config::{IouLoss, LossConfig};
use crate::decoder::StageOutput;
use crate::geometry::{box_iou, BBox, GroundingAnnotation, Segment};

/// Added inside the logarithm of the predicted distribution.
pub const KL_EPS: f64 = 1e-8;
/// Probability clipping of the spatial confidence BCE.
pub const BCE_EPS: f64 = 1e-6;

impl From<IouLoss> for BoxLossKind {
    fn from(k: IouLoss) -> Self {
        match k {
            IouLoss::Plain => BoxLossKind::Plain,
            IouLoss::Giou => BoxLossKind::Generalized,
        }
    }
}

/// Start/end target distributions and the inside-segment indicator of one
/// clip.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalTargets {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub inside: Vec<f64>,
}

fn target_distribution(center: usize, n: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return (0..n).map(|i| if i == center { 1.0 } else { 0.0 }).collect();
    }
    let w: Vec<f64> = (0..n).map(|i| (-((i as f64 - center as f64).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

impl TemporalTargets {
    pub fn new(segment: &Segment, n_frames: usize, sigma: f64) -> Self {
        TemporalTargets {
            start: target_distribution(segment.start, n_frames, sigma),
            end: target_distribution(segment.end, n_frames, sigma),
            inside: (0..n_frames).map(|i| if segment.contains(i) { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// `KL(p || q) = sum p log(p / (q + eps))` with `0 log 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(&a, _)| a > 0.0).map(|(&a, &b)| a * (a.ln() - (b + KL_EPS).ln())).sum()
}

/// Mean binary cross-entropy of probabilities `p` against `target`.
pub fn binary_cross_entropy(target: &[f64], p: &[f64]) -> f64 {
    let n = target.len() as f64;
    target.iter().zip(p).map(|(&y, &x)| -(y * x.ln() + (1.0 - y) * (1.0 - x).ln())).sum::<f64>() / n
}

/// `1 - GIoU` (or `1 - IoU`) of one pair of boxes.
pub fn iou_loss(pred: &BBox, gt: &BBox, kind: IouLoss) -> f64 {
    let mut g = Graph::<f64>::new();
    let p = g.constant(Tensor::new(&[1, 4], pred.to_array().to_vec()));
    let l = g.box_overlap_loss(p, Tensor::new(&[1, 4], gt.to_array().to_vec()), Tensor::new(&[1], vec![1.0]), kind.into());
    g.value(l).item()
}

/// Weighted loss terms, each already multiplied by its weight.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub kl_start: f64,
    pub kl_end: f64,
    pub temporal_bce: f64,
    pub l1: f64,
    pub iou: f64,
    pub spatial_bce: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn add(&mut self, o: &LossBreakdown) {
        self.kl_start += o.kl_start;
        self.kl_end += o.kl_end;
        self.temporal_bce += o.temporal_bce;
        self.l1 += o.l1;
        self.iou += o.iou;
        self.spatial_bce += o.spatial_bce;
        self.total += o.total;
    }
}

struct Terms {
    vars: Vec<Var>,
}

impl Terms {
    fn push<T: Real>(&mut self, g: &Graph<T>, v: Var, slot: &mut f64) {
        *slot += g.value(v).item().to_f64().unwrap();
        self.vars.push(v);
    }
}

/// Temporal terms of one stage for a batch, averaged over clips.
pub fn temporal_loss<T: Real>(
    g: &mut Graph<T>,
    stage: &StageOutput,
    targets: &[TemporalTargets],
    cfg: &LossConfig,
) -> (Var, LossBreakdown) {
    let n_clips = targets.len();
    let n = targets[0].inside.len();
    let mut terms = Terms { vars: Vec::new() };
    let mut br = LossBreakdown::default();
    let log_q = g.log_eps(stage.temporal, T::c(KL_EPS));
    for (which, lambda) in [(0, cfg.lambda_start), (1, cfg.lambda_end)] {
        if lambda == 0.0 {
            continue;
        }
        let scale = lambda / n_clips as f64;
        let mut w = vec![T::zero(); n_clips * 2 * n];
        let mut entropy = 0.0;
        for (c, t) in targets.iter().enumerate() {
            let p = if which == 0 { &t.start } else { &t.end };
            for (i, &pi) in p.iter().enumerate() {
                w[(c * 2 + which) * n + i] = T::c(-scale * pi);
                if pi > 0.0 {
                    entropy += scale * pi * pi.ln();
                }
            }
        }
        let cross = g.dot_const(log_q, Tensor::new(&[n_clips, 2, n], w));
        let ent = g.constant(Tensor::scalar(T::c(entropy)));
        let kl = g.sum_scalars(&[cross, ent]);
        let slot = if which == 0 { &mut br.kl_start } else { &mut br.kl_end };
        terms.push(g, kl, slot);
    }
    if let (Some(logits), true) = (stage.temporal_score_logits, cfg.lambda_temporal > 0.0) {
        let target: Vec<T> = targets.iter().flat_map(|t| t.inside.iter().map(|&v| T::c(v))).collect();
        let w = T::c(cfg.lambda_temporal / (n * n_clips) as f64);
        let len = target.len();
        let bce = g.bce_with_logits(logits, Tensor::new(&[len], target), Tensor::full(&[len], w));
        terms.push(g, bce, &mut br.temporal_bce);
    }
    finish(g, terms, br)
}

fn finish<T: Real>(g: &mut Graph<T>, terms: Terms, mut br: LossBreakdown) -> (Var, LossBreakdown) {
    let total = if terms.vars.is_empty() { g.constant(Tensor::scalar(T::zero())) } else { g.sum_scalars(&terms.vars) };
    br.total = g.value(total).item().to_f64().unwrap();
    (total, br)
}

/// Spatial terms of one stage for a batch. Frames outside the ground-truth
/// segment are ignored; each clip's terms are averaged over its inside
/// frames and then over clips.
pub fn spatial_loss<T: Real>(
    g: &mut Graph<T>,
    stage: &StageOutput,
    gts: &[&GroundingAnnotation],
    n_frames: usize,
    cfg: &LossConfig,
    kind: IouLoss,
) -> (Var, LossBreakdown) {
    let n_clips = gts.len();
    let rows = n_clips * n_frames;
    let mut target = vec![T::zero(); rows * 4];
    let mut weight = vec![0.0; rows];
    for (c, gt) in gts.iter().enumerate() {
        let w = 1.0 / (gt.segment.len() * n_clips) as f64;
        for f in gt.segment.frames() {
            let b = gt.box_at(f).expect("frame inside segment");
            for (j, v) in b.to_array().into_iter().enumerate() {
                target[(c * n_frames + f) * 4 + j] = T::c(v);
            }
            weight[c * n_frames + f] = w;
        }
    }
    let target = Tensor::new(&[rows, 4], target);
    let weights = |lambda: f64| Tensor::new(&[rows], weight.iter().map(|&w| T::c(lambda * w)).collect());
    let mut terms = Terms { vars: Vec::new() };
    let mut br = LossBreakdown::default();
    if cfg.lambda_l1 > 0.0 {
        let l1 = g.smooth_l1(stage.boxes, target.clone(), weights(cfg.lambda_l1));
        terms.push(g, l1, &mut br.l1);
    }
    if cfg.lambda_iou > 0.0 {
        let iou = g.box_overlap_loss(stage.boxes, target.clone(), weights(cfg.lambda_iou), kind.into());
        terms.push(g, iou, &mut br.iou);
    }
    if let (Some(scores), true) = (stage.spatial_scores, cfg.lambda_spatial > 0.0) {
        let pred = g.stop_gradient(stage.boxes);
        let ious: Vec<T> = (0..rows)
            .map(|r| {
                if weight[r] == 0.0 {
                    return T::zero();
                }
                let p = BBox::from(std::array::from_fn(|j| pred.row(r)[j].to_f64().unwrap()));
                let t = BBox::from(std::array::from_fn(|j| target.row(r)[j].to_f64().unwrap()));
                T::c(box_iou(&p, &t))
            })
            .collect();
        let bce = g.bce_prob(scores, Tensor::new(&[rows], ious), weights(cfg.lambda_spatial), T::c(BCE_EPS));
        terms.push(g, bce, &mut br.spatial_bce);
    }
    finish(g, terms, br)
}

/// Sum of temporal and spatial terms over every stage.
pub fn total_loss<T: Real>(
    g: &mut Graph<T>,
    stages: &[StageOutput],
    gts: &[&GroundingAnnotation],
    n_frames: usize,
    cfg: &LossConfig,
    kind: IouLoss,
) -> (Var, LossBreakdown) {
    let targets: Vec<TemporalTargets> =
        gts.iter().map(|a| TemporalTargets::new(&a.segment, n_frames, cfg.temporal_target_sigma)).collect();
    let mut parts = Vec::with_capacity(2 * stages.len());
    let mut br = LossBreakdown::default();
    for s in stages {
        let (t, bt) = temporal_loss(g, s, &targets, cfg);
        let (sp, bs) = spatial_loss(g, s, gts, n_frames, cfg, kind);
        parts.push(t);
        parts.push(sp);
        br.add(&bt);
        br.add(&bs);
    }
    let total = g.sum_scalars(&parts);
    br.total = g.value(total).item().to_f64().unwrap();
    (total, br)
}
