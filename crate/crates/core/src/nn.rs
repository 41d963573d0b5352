//! Layers shared by the encoder and decoder.

use std::rc::Rc;

use autograd::{AttentionSpec, AttentionWeights, Graph, Real, Var};

use crate::params::{Bound, Init, ParamGroup, ParamId, ParamLayout};

pub(crate) const LN_EPS: f64 = 1e-5;

fn xavier(fan_in: usize, fan_out: usize) -> Init {
    Init::Uniform((6.0 / (fan_in + fan_out) as f64).sqrt())
}

#[derive(Clone, Debug)]
pub struct Linear {
    w: ParamId,
    b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(l: &mut ParamLayout, name: &str, d_in: usize, d_out: usize, group: ParamGroup) -> Self {
        let w = l.add(format!("{name}.w"), &[d_in, d_out], group, xavier(d_in, d_out));
        let b = l.add(format!("{name}.b"), &[d_out], group, Init::Zeros);
        Linear { w, b: Some(b), d_in, d_out }
    }

    pub fn no_bias(l: &mut ParamLayout, name: &str, d_in: usize, d_out: usize, group: ParamGroup) -> Self {
        let w = l.add(format!("{name}.w"), &[d_in, d_out], group, xavier(d_in, d_out));
        Linear { w, b: None, d_in, d_out }
    }

    pub fn weight(&self) -> ParamId {
        self.w
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.b
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        g.linear(x, p[self.w], self.b.map(|b| p[b]))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    gamma: ParamId,
    beta: ParamId,
}

impl LayerNorm {
    pub fn new(l: &mut ParamLayout, name: &str, d: usize, group: ParamGroup) -> Self {
        let gamma = l.add(format!("{name}.gamma"), &[d], group, Init::Ones);
        let beta = l.add(format!("{name}.beta"), &[d], group, Init::Zeros);
        LayerNorm { gamma, beta }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        g.layer_norm(x, p[self.gamma], p[self.beta], T::c(LN_EPS))
    }
}

/// Linear layers with GELU between them (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(l: &mut ParamLayout, name: &str, dims: &[usize], group: ParamGroup) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least one layer");
        let layers = dims.windows(2).enumerate().map(|(i, d)| Linear::new(l, &format!("{name}.{i}"), d[0], d[1], group)).collect();
        Mlp { layers }
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, mut x: Var) -> Var {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, p, x);
            if i < last {
                x = g.gelu(x);
            }
        }
        x
    }
}

/// Which keys each query group sees.
#[derive(Clone, Debug)]
pub struct Grouping {
    pub groups: usize,
    pub q_len: usize,
    pub k_len: usize,
    pub key_mask: Option<Rc<[bool]>>,
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(l: &mut ParamLayout, name: &str, d: usize, heads: usize, group: ParamGroup) -> Self {
        MultiHeadAttention {
            q: Linear::new(l, &format!("{name}.q"), d, d, group),
            k: Linear::new(l, &format!("{name}.k"), d, d, group),
            v: Linear::new(l, &format!("{name}.v"), d, d, group),
            o: Linear::new(l, &format!("{name}.o"), d, d, group),
            heads,
        }
    }

    pub fn value_proj(&self) -> &Linear {
        &self.v
    }

    pub fn out_proj(&self) -> &Linear {
        &self.o
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x_q: Var,
        x_kv: Var,
        grouping: &Grouping,
    ) -> (Var, Rc<AttentionWeights<T>>) {
        let q = self.q.forward(g, p, x_q);
        let k = self.k.forward(g, p, x_kv);
        let v = self.v.forward(g, p, x_kv);
        let spec = AttentionSpec {
            groups: grouping.groups,
            q_len: grouping.q_len,
            k_len: grouping.k_len,
            heads: self.heads,
            key_mask: grouping.key_mask.clone(),
        };
        let (a, w) = g.attention(q, k, v, &spec);
        (self.o.forward(g, p, a), w)
    }
}

/// `x + MHA(LN(x), memory)`. Self-attention passes `None` as memory and
/// attends to `LN(x)`.
#[derive(Clone, Debug)]
pub struct AttentionSublayer {
    norm: LayerNorm,
    attn: MultiHeadAttention,
}

impl AttentionSublayer {
    pub fn new(l: &mut ParamLayout, name: &str, d: usize, heads: usize, group: ParamGroup) -> Self {
        AttentionSublayer {
            norm: LayerNorm::new(l, &format!("{name}.norm"), d, group),
            attn: MultiHeadAttention::new(l, &format!("{name}.attn"), d, heads, group),
        }
    }

    pub fn attention(&self) -> &MultiHeadAttention {
        &self.attn
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x: Var,
        memory: Option<Var>,
        grouping: &Grouping,
    ) -> (Var, Rc<AttentionWeights<T>>) {
        let h = self.norm.forward(g, p, x);
        let (a, w) = self.attn.forward(g, p, h, memory.unwrap_or(h), grouping);
        (g.add(x, a), w)
    }
}

/// `x + MLP(LN(x))` with hidden width `mult * d`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    norm: LayerNorm,
    mlp: Mlp,
}

impl FeedForward {
    pub fn new(l: &mut ParamLayout, name: &str, d: usize, mult: usize, group: ParamGroup) -> Self {
        FeedForward {
            norm: LayerNorm::new(l, &format!("{name}.norm"), d, group),
            mlp: Mlp::new(l, &format!("{name}.mlp"), &[d, mult * d, d], group),
        }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        let h = self.norm.forward(g, p, x);
        let h = self.mlp.forward(g, p, h);
        g.add(x, h)
    }
}

/// Pre-norm self-attention block followed by a feed-forward sublayer.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub attn: AttentionSublayer,
    pub ffn: FeedForward,
}

impl EncoderBlock {
    pub fn new(l: &mut ParamLayout, name: &str, d: usize, heads: usize, mult: usize, group: ParamGroup) -> Self {
        EncoderBlock {
            attn: AttentionSublayer::new(l, &format!("{name}.sa"), d, heads, group),
            ffn: FeedForward::new(l, &format!("{name}.ffn"), d, mult, group),
        }
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x: Var,
        grouping: &Grouping,
    ) -> (Var, Rc<AttentionWeights<T>>) {
        let (x, w) = self.attn.forward(g, p, x, None, grouping);
        (self.ffn.forward(g, p, x), w)
    }
}

/// Sinusoid table `[n, d]`: pairs `(sin, cos)` of `pos / 10000^(2i/d)`.
pub fn sinusoid(n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for pos in 0..n {
        for i in 0..d / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            out[pos * d + 2 * i] = (pos as f64 * freq).sin();
            out[pos * d + 2 * i + 1] = (pos as f64 * freq).cos();
        }
    }
    out
}

/// 2-D sinusoid `[h * w, d]`: the first half of the channels encodes the
/// row, the second half the column.
pub fn sinusoid_2d(h: usize, w: usize, d: usize) -> Vec<f64> {
    let half = d / 2;
    let ys = sinusoid(h, half);
    let xs = sinusoid(w, half);
    let mut out = vec![0.0; h * w * d];
    for y in 0..h {
        for x in 0..w {
            let row = &mut out[(y * w + x) * d..(y * w + x + 1) * d];
            row[..half].copy_from_slice(&ys[y * half..(y + 1) * half]);
            row[half..2 * half].copy_from_slice(&xs[x * half..(x + 1) * half]);
        }
    }
    out
}
