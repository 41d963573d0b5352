//! Cascaded decoder: spatial and temporal decoding blocks, prediction heads
//! and segment selection.

use std::rc::Rc;

use autograd::{AttentionWeights, Graph, Real, Tensor, Var};

use crate::config::{ModelConfig, Pool};
use crate::encoder::MultimodalSequence;
use crate::geometry::{BBox, Segment, MIN_BOX_SIZE};
use crate::icg::{generate_context, RoiSpec};
use crate::icr::{refine, BatchContext, ContextFusion, FilterConfig, InstanceContext, SpatialScoreHead, TemporalScoreHead};
use crate::nn::{AttentionSublayer, FeedForward, Grouping, LayerNorm, Linear, Mlp};
use crate::params::{Bound, Init, ParamGroup, ParamId, ParamLayout};

/// Segment with the highest `h_s[i] * h_e[j]` over `i <= j`; ties go to the
/// smallest `(i, j)`. Linear time: for each end frame the best start is the
/// first argmax of the prefix.
pub fn select_segment(h_s: &[f64], h_e: &[f64]) -> Segment {
    assert!(!h_s.is_empty() && h_s.len() == h_e.len(), "select_segment: bad lengths");
    let mut arg = 0;
    let mut best = (0, 0);
    let mut best_p = f64::NEG_INFINITY;
    for j in 0..h_e.len() {
        if h_s[j] > h_s[arg] {
            arg = j;
        }
        let p = h_s[arg] * h_e[j];
        if p > best_p {
            best_p = p;
            best = (arg, j);
        }
    }
    Segment { start: best.0, end: best.1 }
}

/// Spatial decoding block: self-attention across frames, optional
/// cross-attention to instance context, cross-attention to the frame's
/// encoder tokens.
#[derive(Clone, Debug)]
pub struct Sdb {
    pub sa: AttentionSublayer,
    pub context: Option<AttentionSublayer>,
    pub ca: AttentionSublayer,
}

/// Temporal decoding block: self-attention, optional context
/// cross-attention, cross-attention to the encoder tokens, feed-forward.
#[derive(Clone, Debug)]
pub struct Tdb {
    pub sa: AttentionSublayer,
    pub context: Option<AttentionSublayer>,
    pub ca: AttentionSublayer,
    pub ffn: FeedForward,
}

/// Box, temporal and confidence heads of one stage (or of all stages when
/// shared).
#[derive(Clone, Debug)]
pub struct Heads {
    box_norm: LayerNorm,
    pub box_mlp: Mlp,
    temporal_norm: LayerNorm,
    pub temporal: Linear,
    pub temporal_score: Option<TemporalScoreHead>,
    pub spatial_score: Option<SpatialScoreHead>,
    pub fusion: Option<ContextFusion>,
}

impl Heads {
    fn new(l: &mut ParamLayout, name: &str, cfg: &ModelConfig, context: bool, fusion: bool) -> Self {
        let d = cfg.hidden;
        let rows = if cfg.pool == Pool::Mean { 1 } else { cfg.pool_size * cfg.pool_size };
        let mods = if cfg.uses_motion_context() { 2 } else { 1 };
        Heads {
            box_norm: LayerNorm::new(l, &format!("{name}.box.norm"), d, ParamGroup::Head),
            box_mlp: Mlp::new(l, &format!("{name}.box.mlp"), &[d, d, d, 4], ParamGroup::Head),
            temporal_norm: LayerNorm::new(l, &format!("{name}.temporal.norm"), d, ParamGroup::Head),
            temporal: Linear::new(l, &format!("{name}.temporal.linear"), d, 2, ParamGroup::Head),
            temporal_score: context.then(|| TemporalScoreHead::new(l, &format!("{name}.tscore"), d)),
            spatial_score: context
                .then(|| SpatialScoreHead::new(l, &format!("{name}.sscore"), rows * d, d, cfg.uses_motion_context())),
            fusion: (context && fusion).then(|| ContextFusion::new(l, &format!("{name}.fusion"), mods * rows * d, d)),
        }
    }

    /// Clamped `(cx, cy, w, h)` boxes `[rows, 4]`.
    pub fn boxes<T: Real>(&self, g: &mut Graph<T>, p: &Bound, q: Var) -> Var {
        let h = self.box_norm.forward(g, p, q);
        let h = self.box_mlp.forward(g, p, h);
        let h = g.sigmoid(h);
        g.clamp_boxes(h, T::c(MIN_BOX_SIZE))
    }

    /// Start/end distributions `[clips, 2, frames]`, softmax over frames.
    pub fn temporal_distributions<T: Real>(&self, g: &mut Graph<T>, p: &Bound, pq: Var, n_clips: usize, n_frames: usize) -> Var {
        let h = self.temporal_norm.forward(g, p, pq);
        let logits = self.temporal.forward(g, p, h);
        let logits = g.reshape(logits, &[n_clips, n_frames, 2]);
        let logits = g.transpose_last2(logits);
        g.softmax_last(logits)
    }
}

/// Per-call switches of a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Run context generation and refinement (ignored when the model has no
    /// context sublayers).
    pub use_context: bool,
    /// Keep the attention weights of the last spatial cross-attention.
    pub capture_attention: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions { use_context: true, capture_attention: false }
    }
}

/// Tape handles of one decoding stage.
#[derive(Clone, Debug)]
pub struct StageOutput {
    pub stage: usize,
    /// Spatial queries `[groups, d]`.
    pub q: Var,
    /// Temporal queries `[groups, d]`.
    pub p: Var,
    /// `[groups, 4]`
    pub boxes: Var,
    /// `[clips, 2, frames]`
    pub temporal: Var,
    /// `[groups, 1]` logits of the temporal confidence.
    pub temporal_score_logits: Option<Var>,
    /// `[groups, 1]` spatial confidence.
    pub spatial_scores: Option<Var>,
    /// Context produced by this stage for the next one.
    pub context: Option<BatchContext>,
}

#[derive(Clone, Debug)]
pub struct DecoderOutput<T> {
    pub stages: Vec<StageOutput>,
    /// Context generation calls.
    pub icg_calls: usize,
    /// Context refinement calls.
    pub icr_calls: usize,
    /// Last-stage spatial cross-attention, `[groups, heads, 1, per_frame]`.
    pub attention: Option<Rc<AttentionWeights<T>>>,
}

/// Values of one stage for one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeState<T> {
    pub stage: usize,
    pub q: Tensor<T>,
    pub p: Tensor<T>,
    pub boxes: Vec<BBox>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub temporal_scores: Option<Vec<f64>>,
    pub spatial_scores: Option<Vec<f64>>,
    pub context: Option<InstanceContext<T>>,
}

fn rows_of<T: Real>(t: &Tensor<T>, r: std::ops::Range<usize>) -> Tensor<T> {
    let c = t.cols();
    Tensor::new(&[r.len(), c], t.data()[r.start * c..r.end * c].to_vec())
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64().unwrap()).collect()
}

impl StageOutput {
    pub fn state<T: Real>(&self, g: &Graph<T>, clip: usize, n_frames: usize) -> DecodeState<T> {
        let r = clip * n_frames..(clip + 1) * n_frames;
        let boxes = g.value(self.boxes);
        let temporal = g.value(self.temporal).data();
        let t_off = clip * 2 * n_frames;
        DecodeState {
            stage: self.stage,
            q: rows_of(g.value(self.q), r.clone()),
            p: rows_of(g.value(self.p), r.clone()),
            boxes: r.clone().map(|i| BBox::from(std::array::from_fn(|j| boxes.row(i)[j].to_f64().unwrap()))).collect(),
            start: to_f64(&temporal[t_off..t_off + n_frames]),
            end: to_f64(&temporal[t_off + n_frames..t_off + 2 * n_frames]),
            temporal_scores: self
                .temporal_score_logits
                .map(|v| g.value(v).data()[r.clone()].iter().map(|z| 1.0 / (1.0 + (-z.to_f64().unwrap()).exp())).collect()),
            spatial_scores: self.spatial_scores.map(|v| to_f64(&g.value(v).data()[r.clone()])),
            context: self.context.as_ref().map(|c| c.instance(g, clip)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub stages: usize,
    hidden: usize,
    heads: usize,
    n_frames: usize,
    query: ParamId,
    temporal_query: ParamId,
    frame_embedding: ParamId,
    memory_norm: LayerNorm,
    pub sdb: Vec<Sdb>,
    pub tdb: Vec<Tdb>,
    pub heads_per_stage: Vec<Heads>,
    has_context: bool,
    motion_context: bool,
    roi: RoiSpec,
    filter: FilterConfig,
}

impl Decoder {
    pub fn new(l: &mut ParamLayout, cfg: &ModelConfig, n_frames: usize) -> Self {
        let d = cfg.hidden;
        let k = cfg.stages;
        let ctx = cfg.use_context;
        let g = ParamGroup::Head;
        let query = l.add("dec.query", &[1, d], g, Init::Uniform(0.1));
        let temporal_query = l.add("dec.temporal_query", &[1, d], g, Init::Uniform(0.1));
        let frame_embedding = l.add("dec.frame_embedding", &[n_frames, d], g, Init::Uniform(0.1));
        let memory_norm = LayerNorm::new(l, "dec.memory_norm", d, g);
        let mut sdb = Vec::with_capacity(k);
        let mut tdb = Vec::with_capacity(k);
        for s in 0..k {
            let has_ctx = ctx && s > 0;
            sdb.push(Sdb {
                sa: AttentionSublayer::new(l, &format!("dec.sdb{s}.sa"), d, cfg.heads, g),
                context: has_ctx.then(|| AttentionSublayer::new(l, &format!("dec.sdb{s}.context"), d, cfg.heads, g)),
                ca: AttentionSublayer::new(l, &format!("dec.sdb{s}.ca"), d, cfg.heads, g),
            });
            tdb.push(Tdb {
                sa: AttentionSublayer::new(l, &format!("dec.tdb{s}.sa"), d, cfg.heads, g),
                context: (has_ctx && cfg.context_in_tdb)
                    .then(|| AttentionSublayer::new(l, &format!("dec.tdb{s}.context"), d, cfg.heads, g)),
                ca: AttentionSublayer::new(l, &format!("dec.tdb{s}.ca"), d, cfg.heads, g),
                ffn: FeedForward::new(l, &format!("dec.tdb{s}.ffn"), d, cfg.ffn_mult, g),
            });
        }
        let heads_per_stage = if cfg.share_heads {
            vec![Heads::new(l, "dec.heads", cfg, ctx, k > 1)]
        } else {
            (0..k).map(|s| Heads::new(l, &format!("dec.heads{s}"), cfg, ctx, s + 1 < k)).collect()
        };
        Decoder {
            stages: k,
            hidden: d,
            heads: cfg.heads,
            n_frames,
            query,
            temporal_query,
            frame_embedding,
            memory_norm,
            sdb,
            tdb,
            heads_per_stage,
            has_context: ctx,
            motion_context: cfg.uses_motion_context(),
            roi: RoiSpec {
                pool: cfg.pool_size,
                sampling_ratio: cfg.sampling_ratio,
                mean: cfg.pool == Pool::Mean,
                motion: cfg.uses_motion_context(),
            },
            filter: cfg.into(),
        }
    }

    pub fn has_context(&self) -> bool {
        self.has_context
    }

    pub fn stage_heads(&self, stage: usize) -> &Heads {
        &self.heads_per_stage[stage.min(self.heads_per_stage.len() - 1)]
    }

    pub fn filter(&self) -> &FilterConfig {
        &self.filter
    }

    /// Initial spatial and temporal queries `[n_clips * n_frames, d]`.
    pub fn init_queries<T: Real>(&self, g: &mut Graph<T>, p: &Bound, n_clips: usize) -> (Var, Var) {
        let frames: Vec<usize> = (0..n_clips * self.n_frames).map(|i| i % self.n_frames).collect();
        let fe = g.gather_rows(p[self.frame_embedding], &frames);
        let q = g.add_tiled(fe, p[self.query]);
        let pq = g.add_tiled(fe, p[self.temporal_query]);
        (q, pq)
    }

    /// Encoder tokens as seen by the decoder.
    pub fn memory<T: Real>(&self, g: &mut Graph<T>, p: &Bound, seq: &MultimodalSequence) -> Var {
        self.memory_norm.forward(g, p, seq.x)
    }

    fn across_frames(&self, n_clips: usize, mask: Option<Rc<[bool]>>) -> Grouping {
        Grouping { groups: n_clips, q_len: self.n_frames, k_len: self.n_frames, key_mask: mask }
    }

    fn per_frame(&self, seq: &MultimodalSequence) -> Grouping {
        Grouping { groups: seq.n_groups(), q_len: 1, k_len: seq.layout.per_frame(), key_mask: Some(seq.key_mask.clone()) }
    }

    #[allow(clippy::type_complexity, clippy::too_many_arguments)]
    pub fn sdb_forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        stage: usize,
        q: Var,
        context: Option<&BatchContext>,
        memory: Var,
        seq: &MultimodalSequence,
    ) -> (Var, Rc<AttentionWeights<T>>) {
        let b = &self.sdb[stage];
        let (mut x, _) = b.sa.forward(g, p, q, None, &self.across_frames(seq.n_clips, None));
        if let (Some(layer), Some(c)) = (&b.context, context) {
            x = layer.forward(g, p, x, Some(c.tokens), &self.across_frames(seq.n_clips, Some(c.key_mask.clone()))).0;
        }
        b.ca.forward(g, p, x, Some(memory), &self.per_frame(seq))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn tdb_forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        stage: usize,
        pq: Var,
        context: Option<&BatchContext>,
        memory: Var,
        seq: &MultimodalSequence,
    ) -> Var {
        let b = &self.tdb[stage];
        let (mut x, _) = b.sa.forward(g, p, pq, None, &self.across_frames(seq.n_clips, None));
        if let (Some(layer), Some(c)) = (&b.context, context) {
            x = layer.forward(g, p, x, Some(c.tokens), &self.across_frames(seq.n_clips, Some(c.key_mask.clone()))).0;
        }
        let (x, _) = b.ca.forward(g, p, x, Some(memory), &self.per_frame(seq));
        b.ffn.forward(g, p, x)
    }

    /// Runs every stage. Confidence scores and filtering use detached values.
    pub fn decode<T: Real>(&self, g: &mut Graph<T>, p: &Bound, seq: &MultimodalSequence, opts: ForwardOptions) -> DecoderOutput<T> {
        let memory = self.memory(g, p, seq);
        let (mut q, mut pq) = self.init_queries(g, p, seq.n_clips);
        let use_context = self.has_context && opts.use_context;
        let mut context: Option<BatchContext> = None;
        let mut out = DecoderOutput { stages: Vec::with_capacity(self.stages), icg_calls: 0, icr_calls: 0, attention: None };
        for k in 0..self.stages {
            let (q_next, attn) = self.sdb_forward(g, p, k, q, context.as_ref(), memory, seq);
            let p_next = self.tdb_forward(g, p, k, pq, context.as_ref(), memory, seq);
            q = q_next;
            pq = p_next;
            if opts.capture_attention && k + 1 == self.stages {
                out.attention = Some(attn);
            }
            let heads = self.stage_heads(k);
            let boxes = heads.boxes(g, p, q);
            let temporal = heads.temporal_distributions(g, p, pq, seq.n_clips, seq.n_frames);
            let mut stage = StageOutput {
                stage: k + 1,
                q,
                p: pq,
                boxes,
                temporal,
                temporal_score_logits: None,
                spatial_scores: None,
                context: None,
            };
            if use_context {
                let (ts, ss, fusion) = (
                    heads.temporal_score.as_ref().expect("context heads"),
                    heads.spatial_score.as_ref().expect("context heads"),
                    heads.fusion.as_ref(),
                );
                let t_logits = ts.logits(g, p, pq);
                let regions: Vec<BBox> = g
                    .stop_gradient(boxes)
                    .data()
                    .chunks(4)
                    .map(|b| BBox::new(b[0].to_f64().unwrap(), b[1].to_f64().unwrap(), b[2].to_f64().unwrap(), b[3].to_f64().unwrap()))
                    .collect();
                let raw = generate_context(g, memory, &seq.layout, &regions, self.roi);
                out.icg_calls += 1;
                let s_s = ss.scores(g, p, &raw);
                if k + 1 < self.stages {
                    let st: Vec<f64> =
                        g.stop_gradient(t_logits).data().iter().map(|z| 1.0 / (1.0 + (-z.to_f64().unwrap()).exp())).collect();
                    let sv: Vec<f64> = to_f64(g.stop_gradient(s_s).data());
                    let fusion = fusion.expect("fusion head for non-final stage");
                    let c = refine(g, p, fusion, &raw, &st, &sv, seq.n_frames, &self.filter, k + 1);
                    out.icr_calls += 1;
                    context = Some(c);
                    stage.context = context.clone();
                }
                stage.temporal_score_logits = Some(t_logits);
                stage.spatial_scores = Some(s_s);
            }
            out.stages.push(stage);
        }
        out
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn motion_context(&self) -> bool {
        self.motion_context
    }

    pub fn roi_spec(&self) -> RoiSpec {
        self.roi
    }
}
