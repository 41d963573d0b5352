//! Toy appearance, motion and text backbones, multimodal fusion and the
//! within-frame self-attention encoder.

use std::ops::Range;
use std::rc::Rc;

use autograd::{AttentionWeights, Conv2dSpec, Graph, Real, Tensor, Var};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{sinusoid, sinusoid_2d, EncoderBlock, Grouping, Linear};
use crate::params::{Bound, Init, ParamGroup, ParamId, ParamLayout};

/// Reserved padding token.
pub const PAD_ID: u32 = 0;

/// Per-stage output channels of the convolutional stacks before the last one.
const STACK_CHANNELS: [usize; 2] = [16, 32];

/// `n_frames` RGB images, row-major `[frame, y, x, channel]`, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    pub n_frames: usize,
    pub height: usize,
    pub width: usize,
    data: Vec<f32>,
}

impl VideoClip {
    pub fn new(n_frames: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if n_frames < 2 {
            return Err(Error::Input(format!("clip needs at least 2 frames, got {n_frames}")));
        }
        if data.len() != n_frames * height * width * 3 {
            return Err(Error::Input(format!("clip data has {} values for {n_frames}x{height}x{width}x3", data.len())));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input("clip values outside [0, 1]".into()));
        }
        Ok(VideoClip { n_frames, height, width, data })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        let n = self.height * self.width * 3;
        &self.data[i * n..(i + 1) * n]
    }
}

/// Token ids padded with [`PAD_ID`] to a fixed length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextQuery {
    tokens: Vec<u32>,
    n_words: usize,
}

impl TextQuery {
    pub fn new(ids: &[u32], text_len: usize, vocab_size: usize) -> Result<Self> {
        if ids.is_empty() || ids.len() > text_len {
            return Err(Error::Input(format!("query length {} not in [1, {text_len}]", ids.len())));
        }
        if let Some(&bad) = ids.iter().find(|&&t| t == PAD_ID || t as usize >= vocab_size) {
            return Err(Error::Input(format!("token id {bad} is padding or outside the vocabulary of {vocab_size}")));
        }
        let mut tokens = ids.to_vec();
        tokens.resize(text_len, PAD_ID);
        Ok(TextQuery { tokens, n_words: ids.len() })
    }

    /// Parses an already padded sequence; padding must be trailing.
    pub fn from_padded(tokens: Vec<u32>, vocab_size: usize) -> Result<Self> {
        let n_words = tokens.iter().take_while(|&&t| t != PAD_ID).count();
        if tokens[n_words..].iter().any(|&t| t != PAD_ID) {
            return Err(Error::Input("padding inside query".into()));
        }
        Self::new(&tokens[..n_words], tokens.len(), vocab_size)
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    /// Padded length.
    pub fn text_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    /// `true` for real words, `false` for padding.
    pub fn word_mask(&self) -> Vec<bool> {
        (0..self.tokens.len()).map(|i| i < self.n_words).collect()
    }
}

/// Clips and queries stacked for one forward pass.
#[derive(Clone, Debug)]
pub struct Batch {
    pub n_clips: usize,
    pub n_frames: usize,
    pub height: usize,
    pub width: usize,
    pub text_len: usize,
    frames: Vec<f32>,
    tokens: Vec<u32>,
    word_mask: Vec<bool>,
}

impl Batch {
    pub fn new(items: &[(&VideoClip, &TextQuery)]) -> Result<Self> {
        let (c0, q0) = items.first().ok_or_else(|| Error::Input("empty batch".into()))?;
        let mut b = Batch {
            n_clips: items.len(),
            n_frames: c0.n_frames,
            height: c0.height,
            width: c0.width,
            text_len: q0.text_len(),
            frames: Vec::with_capacity(items.len() * c0.data.len()),
            tokens: Vec::new(),
            word_mask: Vec::new(),
        };
        for (c, q) in items {
            if (c.n_frames, c.height, c.width, q.text_len()) != (b.n_frames, b.height, b.width, b.text_len) {
                return Err(Error::Input("batch items differ in shape".into()));
            }
            b.frames.extend_from_slice(&c.data);
            b.tokens.extend_from_slice(&q.tokens);
            b.word_mask.extend(q.word_mask());
        }
        Ok(b)
    }

    pub fn frames(&self) -> &[f32] {
        &self.frames
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn word_mask(&self) -> &[bool] {
        &self.word_mask
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenType {
    Appearance,
    Motion,
    Text,
}

impl TokenType {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Order of the tokens of one frame: `[appearance | motion | text]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenLayout {
    /// Feature-map height and width.
    pub h: usize,
    pub w: usize,
    pub text_len: usize,
    pub has_motion: bool,
}

impl TokenLayout {
    pub fn cells(&self) -> usize {
        self.h * self.w
    }

    pub fn per_frame(&self) -> usize {
        self.cells() * if self.has_motion { 2 } else { 1 } + self.text_len
    }

    pub fn appearance(&self) -> Range<usize> {
        0..self.cells()
    }

    pub fn motion(&self) -> Option<Range<usize>> {
        self.has_motion.then(|| self.cells()..2 * self.cells())
    }

    pub fn text(&self) -> Range<usize> {
        let start = self.per_frame() - self.text_len;
        start..self.per_frame()
    }

    pub fn token_type(&self, i: usize) -> TokenType {
        if self.appearance().contains(&i) {
            TokenType::Appearance
        } else if self.motion().is_some_and(|r| r.contains(&i)) {
            TokenType::Motion
        } else {
            TokenType::Text
        }
    }

    pub fn types(&self) -> Vec<TokenType> {
        (0..self.per_frame()).map(|i| self.token_type(i)).collect()
    }
}

/// Fused encoder output: `x` is `[n_clips * n_frames * per_frame, hidden]`.
#[derive(Clone, Debug)]
pub struct MultimodalSequence {
    pub x: Var,
    pub layout: TokenLayout,
    pub n_clips: usize,
    pub n_frames: usize,
    /// Visible keys, `false` at text padding; one entry per token row.
    pub key_mask: Rc<[bool]>,
}

impl MultimodalSequence {
    pub fn n_groups(&self) -> usize {
        self.n_clips * self.n_frames
    }

    /// Grouping for attention among the tokens of each frame.
    pub fn frame_grouping(&self) -> Grouping {
        let s = self.layout.per_frame();
        Grouping { groups: self.n_groups(), q_len: s, k_len: s, key_mask: Some(self.key_mask.clone()) }
    }
}

/// Three stride-2 3x3 convolutions with GELU.
#[derive(Clone, Debug)]
pub struct ConvStack {
    layers: Vec<(ParamId, ParamId)>,
}

impl ConvStack {
    fn new(l: &mut ParamLayout, name: &str, out_channels: usize) -> Self {
        let mut c_in = 3;
        let mut layers = Vec::new();
        for (i, c_out) in STACK_CHANNELS.into_iter().chain([out_channels]).enumerate() {
            let fan_in = 9 * c_in;
            let w = l.add(format!("{name}.{i}.w"), &[fan_in, c_out], ParamGroup::Backbone, Init::Uniform((3.0 / fan_in as f64).sqrt()));
            let b = l.add(format!("{name}.{i}.b"), &[c_out], ParamGroup::Backbone, Init::Zeros);
            layers.push((w, b));
            c_in = c_out;
        }
        ConvStack { layers }
    }

    /// `[n, h, w, 3] -> [n, h/8, w/8, c]`
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, mut x: Var) -> Var {
        let spec = Conv2dSpec { kernel: 3, stride: 2 };
        for &(w, b) in &self.layers {
            x = g.conv2d(x, p[w], p[b], spec);
            x = g.gelu(x);
        }
        x
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub layout: TokenLayout,
    pub n_frames: usize,
    pub image_size: usize,
    pub vocab_size: usize,
    hidden: usize,
    heads: usize,
    text_channels: usize,
    appearance: ConvStack,
    motion: Option<ConvStack>,
    text_embedding: ParamId,
    text_block: EncoderBlock,
    proj_a: Linear,
    proj_m: Option<Linear>,
    proj_t: Linear,
    type_embedding: ParamId,
    frame_embedding: ParamId,
    blocks: Vec<EncoderBlock>,
    pos: Vec<f64>,
    text_pos: Vec<f64>,
}

impl Encoder {
    pub fn new(
        l: &mut ParamLayout,
        cfg: &ModelConfig,
        n_frames: usize,
        image_size: usize,
        text_len: usize,
        vocab_size: usize,
    ) -> Result<Self> {
        if image_size == 0 || !image_size.is_multiple_of(8) {
            return Err(Error::Config(format!("image size {image_size} is not divisible by 8")));
        }
        let d = cfg.hidden;
        let layout = TokenLayout { h: image_size / 8, w: image_size / 8, text_len, has_motion: cfg.use_motion };
        let appearance = ConvStack::new(l, "enc.app", cfg.appearance_channels);
        let motion = cfg.use_motion.then(|| ConvStack::new(l, "enc.mot", cfg.motion_channels));
        let ct = cfg.text_channels;
        let text_embedding = l.add("enc.text.embedding", &[vocab_size, ct], ParamGroup::Backbone, Init::Uniform(0.5));
        let text_block = EncoderBlock::new(l, "enc.text.block", ct, cfg.heads, cfg.ffn_mult, ParamGroup::Backbone);
        let proj_a = Linear::new(l, "enc.proj_a", cfg.appearance_channels, d, ParamGroup::Head);
        let proj_m = cfg.use_motion.then(|| Linear::new(l, "enc.proj_m", cfg.motion_channels, d, ParamGroup::Head));
        let proj_t = Linear::new(l, "enc.proj_t", ct, d, ParamGroup::Head);
        let type_embedding = l.add("enc.type_embedding", &[3, d], ParamGroup::Head, Init::Uniform(0.1));
        let frame_embedding = l.add("enc.frame_embedding", &[n_frames, d], ParamGroup::Head, Init::Uniform(0.1));
        let blocks = (0..cfg.encoder_layers)
            .map(|i| EncoderBlock::new(l, &format!("enc.block{i}"), d, cfg.heads, cfg.ffn_mult, ParamGroup::Head))
            .collect();

        let mut pos = Vec::with_capacity(layout.per_frame() * d);
        let grid = sinusoid_2d(layout.h, layout.w, d);
        pos.extend_from_slice(&grid);
        if cfg.use_motion {
            pos.extend_from_slice(&grid);
        }
        pos.extend(sinusoid(text_len, d));
        Ok(Encoder {
            layout,
            n_frames,
            image_size,
            vocab_size,
            hidden: d,
            heads: cfg.heads,
            text_channels: ct,
            appearance,
            motion,
            text_embedding,
            text_block,
            proj_a,
            proj_m,
            proj_t,
            type_embedding,
            frame_embedding,
            blocks,
            pos,
            text_pos: sinusoid(text_len, ct),
        })
    }

    pub fn blocks(&self) -> &[EncoderBlock] {
        &self.blocks
    }

    pub fn check_batch(&self, b: &Batch) -> Result<()> {
        if (b.n_frames, b.height, b.width, b.text_len)
            != (self.n_frames, self.image_size, self.image_size, self.layout.text_len)
        {
            return Err(Error::Input(format!(
                "batch of {}x{}x{} frames / {} tokens does not match encoder {}x{}x{} / {}",
                b.n_frames, b.height, b.width, b.text_len, self.n_frames, self.image_size, self.image_size, self.layout.text_len
            )));
        }
        if let Some(&t) = b.tokens.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(Error::Input(format!("token id {t} outside the vocabulary of {}", self.vocab_size)));
        }
        Ok(())
    }

    fn frames_tensor<T: Real>(b: &Batch, data: Vec<f32>) -> Tensor<T> {
        Tensor::new(&[b.n_clips * b.n_frames, b.height, b.width, 3], data.into_iter().map(|v| T::c(v as f64)).collect())
    }

    /// Per-frame appearance maps `[clips * frames, h, w, C_a]`.
    pub fn encode_appearance<T: Real>(&self, g: &mut Graph<T>, p: &Bound, b: &Batch) -> Var {
        let x = g.constant(Self::frames_tensor(b, b.frames.clone()));
        self.appearance.forward(g, p, x)
    }

    /// Central temporal difference `f[i+1] - f[i-1]`, indices clamped to the clip.
    pub fn temporal_difference(b: &Batch) -> Vec<f32> {
        let n = b.n_frames;
        let fs = b.height * b.width * 3;
        let mut out = vec![0f32; b.frames.len()];
        for c in 0..b.n_clips {
            for i in 0..n {
                let next = &b.frames[(c * n + (i + 1).min(n - 1)) * fs..][..fs];
                let prev = &b.frames[(c * n + i.saturating_sub(1)) * fs..][..fs];
                for ((o, &a), &z) in out[(c * n + i) * fs..][..fs].iter_mut().zip(next).zip(prev) {
                    *o = a - z;
                }
            }
        }
        out
    }

    /// Per-frame motion maps `[clips * frames, h, w, C_m]`, if motion is enabled.
    pub fn encode_motion<T: Real>(&self, g: &mut Graph<T>, p: &Bound, b: &Batch) -> Option<Var> {
        let stack = self.motion.as_ref()?;
        let x = g.constant(Self::frames_tensor(b, Self::temporal_difference(b)));
        Some(stack.forward(g, p, x))
    }

    /// Contextual word embeddings `[clips * text_len, C_t]`.
    pub fn encode_text<T: Real>(&self, g: &mut Graph<T>, p: &Bound, b: &Batch) -> Var {
        let ids: Vec<usize> = b.tokens.iter().map(|&t| t as usize).collect();
        let x = g.gather_rows(p[self.text_embedding], &ids);
        let pos = g.constant(Tensor::new(&[b.text_len, self.text_channels], self.text_pos.iter().map(|&v| T::c(v)).collect()));
        let x = g.add_tiled(x, pos);
        let grouping =
            Grouping { groups: b.n_clips, q_len: b.text_len, k_len: b.text_len, key_mask: Some(b.word_mask.clone().into()) };
        self.text_block.forward(g, p, x, &grouping).0
    }

    /// Projects every modality to the hidden width and lays the tokens out
    /// per frame as `[appearance | motion | text]`, text repeated per frame.
    pub fn fuse<T: Real>(&self, g: &mut Graph<T>, p: &Bound, b: &Batch, app: Var, motion: Option<Var>, text: Var) -> Result<MultimodalSequence> {
        let groups = b.n_clips * b.n_frames;
        let cells = self.layout.cells();
        let expect = |v: Var, rows: usize, cols: usize, what: &str, g: &Graph<T>| {
            let t = g.value(v);
            if t.rows() != rows || t.cols() != cols {
                return Err(Error::Input(format!("{what}: got {:?}, expected {rows} rows of {cols}", t.shape())));
            }
            Ok(())
        };
        expect(app, groups * cells, self.proj_a.d_in, "appearance features", g)?;
        expect(text, b.n_clips * b.text_len, self.proj_t.d_in, "text features", g)?;
        let app = g.reshape(app, &[groups * cells, self.proj_a.d_in]);
        let mut parts = vec![self.proj_a.forward(g, p, app)];
        match (motion, &self.proj_m) {
            (Some(m), Some(proj)) => {
                expect(m, groups * cells, proj.d_in, "motion features", g)?;
                let m = g.reshape(m, &[groups * cells, proj.d_in]);
                parts.push(proj.forward(g, p, m));
            }
            (None, None) => {}
            _ => return Err(Error::Input("motion features do not match the motion setting".into())),
        }
        parts.push(self.proj_t.forward(g, p, text));
        let all = g.concat_rows(&parts);

        let has_m = self.layout.has_motion;
        let m_off = groups * cells;
        let t_off = if has_m { 2 * groups * cells } else { groups * cells };
        let s = self.layout.per_frame();
        let mut idx = Vec::with_capacity(groups * s);
        let mut key_mask = Vec::with_capacity(groups * s);
        for c in 0..b.n_clips {
            for f in 0..b.n_frames {
                let gi = c * b.n_frames + f;
                idx.extend((0..cells).map(|j| gi * cells + j));
                if has_m {
                    idx.extend((0..cells).map(|j| m_off + gi * cells + j));
                }
                idx.extend((0..b.text_len).map(|j| t_off + c * b.text_len + j));
                key_mask.extend(std::iter::repeat_n(true, s - b.text_len));
                key_mask.extend_from_slice(&b.word_mask[c * b.text_len..(c + 1) * b.text_len]);
            }
        }
        let x = g.gather_rows(all, &idx);
        Ok(MultimodalSequence { x, layout: self.layout, n_clips: b.n_clips, n_frames: b.n_frames, key_mask: key_mask.into() })
    }

    /// Adds positional, type and frame embeddings.
    pub fn add_embeddings<T: Real>(&self, g: &mut Graph<T>, p: &Bound, seq: &MultimodalSequence) -> MultimodalSequence {
        let s = self.layout.per_frame();
        let d = self.hidden;
        let pos = g.constant(Tensor::new(&[s, d], self.pos.iter().map(|&v| T::c(v)).collect()));
        let x = g.add_tiled(seq.x, pos);
        let types: Vec<usize> = self.layout.types().into_iter().map(TokenType::index).collect();
        let typ = g.gather_rows(p[self.type_embedding], &types);
        let x = g.add_tiled(x, typ);
        let frames: Vec<usize> = (0..seq.n_groups()).map(|i| i % seq.n_frames).collect();
        let fe = g.gather_rows(p[self.frame_embedding], &frames);
        let x = g.add_repeated(x, fe, s);
        MultimodalSequence { x, ..seq.clone() }
    }

    /// Self-attention blocks over the tokens of each frame. Returns the
    /// attention weights of every block.
    pub fn sa_encode<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        seq: &MultimodalSequence,
    ) -> (MultimodalSequence, Vec<Rc<AttentionWeights<T>>>) {
        let grouping = seq.frame_grouping();
        let mut x = seq.x;
        let mut weights = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, w) = block.forward(g, p, x, &grouping);
            x = y;
            weights.push(w);
        }
        (MultimodalSequence { x, ..seq.clone() }, weights)
    }

    /// Full encoder: backbones, fusion, embeddings and self-attention.
    pub fn encode<T: Real>(&self, g: &mut Graph<T>, p: &Bound, b: &Batch) -> Result<MultimodalSequence> {
        self.check_batch(b)?;
        let a = self.encode_appearance(g, p, b);
        let m = self.encode_motion(g, p, b);
        let t = self.encode_text(g, p, b);
        let x = self.fuse(g, p, b, a, m, t)?;
        let x = self.add_embeddings(g, p, &x);
        Ok(self.sa_encode(g, p, &x).0)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn heads(&self) -> usize {
        self.heads
    }
}
