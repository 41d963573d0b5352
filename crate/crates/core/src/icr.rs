//! Instance context refinement: confidence scores, high-pass filtering of
//! frames and fusion of the surviving RoI features into context tokens.

use std::rc::Rc;

use autograd::{Graph, Real, Tensor, Var};

use crate::config::{Fusion, ModelConfig};
use crate::icg::RawContext;
use crate::nn::{LayerNorm, Mlp};
use crate::params::{Bound, ParamGroup, ParamLayout};

/// Indices whose score is strictly above `theta`. When none is, the single
/// highest-scoring index (the first one on ties) is kept instead.
pub fn high_pass_filter(scores: &[f64], theta: f64) -> Vec<usize> {
    assert!(!scores.is_empty(), "high_pass_filter on no entries");
    let kept: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > theta).collect();
    if !kept.is_empty() {
        return kept;
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    vec![best]
}

/// Filtering settings taken from the model configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterConfig {
    pub fusion: Fusion,
    pub theta_t: f64,
    pub theta_s: f64,
    pub theta_sum: f64,
    pub theta_product: f64,
    pub filter_temporal: bool,
    pub filter_spatial: bool,
    pub hfs_uses_temporal: bool,
}

impl From<&ModelConfig> for FilterConfig {
    fn from(c: &ModelConfig) -> Self {
        FilterConfig {
            fusion: c.fusion,
            theta_t: c.theta_t,
            theta_s: c.theta_s,
            theta_sum: c.theta_sum,
            theta_product: c.theta_product,
            filter_temporal: c.filter_temporal,
            filter_spatial: c.filter_spatial,
            hfs_uses_temporal: c.hfs_uses_temporal,
        }
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        (&ModelConfig::default()).into()
    }
}

/// Frames whose context survives filtering, in increasing order. Never empty.
pub fn kept_frames(s_t: &[f64], s_s: &[f64], cfg: &FilterConfig) -> Vec<usize> {
    assert_eq!(s_t.len(), s_s.len(), "score lengths differ");
    match cfg.fusion {
        Fusion::TwoLevel => {
            let level1 =
                if cfg.filter_temporal { high_pass_filter(s_t, cfg.theta_t) } else { (0..s_t.len()).collect() };
            if !cfg.filter_spatial {
                return level1;
            }
            let second = if cfg.hfs_uses_temporal { s_t } else { s_s };
            let restricted: Vec<f64> = level1.iter().map(|&i| second[i]).collect();
            high_pass_filter(&restricted, cfg.theta_s).into_iter().map(|j| level1[j]).collect()
        }
        Fusion::Sum => {
            let joint: Vec<f64> = s_t.iter().zip(s_s).map(|(a, b)| a + b).collect();
            high_pass_filter(&joint, cfg.theta_sum)
        }
        Fusion::Product => {
            let joint: Vec<f64> = s_t.iter().zip(s_s).map(|(a, b)| a * b).collect();
            high_pass_filter(&joint, cfg.theta_product)
        }
    }
}

/// Context tokens of one clip and the frames they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceContext<T> {
    pub stage: usize,
    /// `[frame_index.len(), d]`
    pub tokens: Tensor<T>,
    pub frame_index: Vec<usize>,
}

/// Per-frame temporal confidence from the temporal queries.
#[derive(Clone, Debug)]
pub struct TemporalScoreHead {
    norm: LayerNorm,
    mlp: Mlp,
}

impl TemporalScoreHead {
    pub fn new(l: &mut ParamLayout, name: &str, d: usize) -> Self {
        TemporalScoreHead {
            norm: LayerNorm::new(l, &format!("{name}.norm"), d, ParamGroup::Head),
            mlp: Mlp::new(l, &format!("{name}.mlp"), &[d, d, 1], ParamGroup::Head),
        }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// Logits `[rows, 1]`; the scores are their sigmoid.
    pub fn logits<T: Real>(&self, g: &mut Graph<T>, p: &Bound, queries: Var) -> Var {
        let h = self.norm.forward(g, p, queries);
        self.mlp.forward(g, p, h)
    }
}

/// Per-frame spatial confidence from the pooled RoI features: the mean of an
/// appearance and a motion estimate.
#[derive(Clone, Debug)]
pub struct SpatialScoreHead {
    appearance: Mlp,
    motion: Option<Mlp>,
}

impl SpatialScoreHead {
    pub fn new(l: &mut ParamLayout, name: &str, d_in: usize, d: usize, motion: bool) -> Self {
        SpatialScoreHead {
            appearance: Mlp::new(l, &format!("{name}.app"), &[d_in, d, 1], ParamGroup::Head),
            motion: motion.then(|| Mlp::new(l, &format!("{name}.mot"), &[d_in, d, 1], ParamGroup::Head)),
        }
    }

    /// Scores `[groups, 1]` in `(0, 1)`.
    pub fn scores<T: Real>(&self, g: &mut Graph<T>, p: &Bound, raw: &RawContext) -> Var {
        let a = self.appearance.forward(g, p, raw.appearance);
        let a = g.sigmoid(a);
        match (&self.motion, raw.motion) {
            (Some(mlp), Some(m)) => {
                let m = mlp.forward(g, p, m);
                let m = g.sigmoid(m);
                let s = g.add(a, m);
                g.scale(s, T::c(0.5))
            }
            _ => a,
        }
    }
}

/// MLP from the concatenated per-frame RoI features to one context token.
#[derive(Clone, Debug)]
pub struct ContextFusion {
    mlp: Mlp,
}

impl ContextFusion {
    pub fn new(l: &mut ParamLayout, name: &str, d_in: usize, d: usize) -> Self {
        ContextFusion { mlp: Mlp::new(l, &format!("{name}.mlp"), &[d_in, d, d], ParamGroup::Head) }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// Tokens `[groups, d]` for every frame; filtering happens through the
    /// key mask of the attention that consumes them.
    pub fn tokens<T: Real>(&self, g: &mut Graph<T>, p: &Bound, raw: &RawContext) -> Var {
        self.mlp.forward(g, p, raw.joint)
    }
}

/// Context of a whole batch: tokens for every frame plus the mask of
/// surviving frames.
#[derive(Clone, Debug)]
pub struct BatchContext {
    pub stage: usize,
    /// `[n_clips * n_frames, d]`
    pub tokens: Var,
    pub key_mask: Rc<[bool]>,
    /// Surviving frames of each clip.
    pub kept: Vec<Vec<usize>>,
}

impl BatchContext {
    /// Tokens of one clip restricted to its surviving frames.
    pub fn instance<T: Real>(&self, g: &Graph<T>, clip: usize) -> InstanceContext<T> {
        let t = g.value(self.tokens);
        let n = t.rows() / self.kept.len();
        let d = t.cols();
        let mut data = Vec::with_capacity(self.kept[clip].len() * d);
        for &f in &self.kept[clip] {
            data.extend_from_slice(t.row(clip * n + f));
        }
        InstanceContext { stage: self.stage, tokens: Tensor::new(&[self.kept[clip].len(), d], data), frame_index: self.kept[clip].clone() }
    }
}

/// Filters frames per clip and builds the context tokens.
#[allow(clippy::too_many_arguments)]
pub fn refine<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    fusion: &ContextFusion,
    raw: &RawContext,
    s_t: &[f64],
    s_s: &[f64],
    n_frames: usize,
    cfg: &FilterConfig,
    stage: usize,
) -> BatchContext {
    let groups = s_t.len();
    assert_eq!(groups % n_frames, 0, "scores do not cover whole clips");
    let mut mask = vec![false; groups];
    let mut kept = Vec::with_capacity(groups / n_frames);
    for c in 0..groups / n_frames {
        let r = c * n_frames..(c + 1) * n_frames;
        let k = kept_frames(&s_t[r.clone()], &s_s[r], cfg);
        for &f in &k {
            mask[c * n_frames + f] = true;
        }
        kept.push(k);
    }
    let tokens = fusion.tokens(g, p, raw);
    BatchContext { stage, tokens, key_mask: mask.into(), kept }
}
