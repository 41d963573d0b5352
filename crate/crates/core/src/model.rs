//! Encoder and decoder assembled into one grounding model.

use autograd::{Graph, Real, Var};

use crate::config::{LossConfig, ModelConfig};
use crate::decoder::{select_segment, Decoder, DecoderOutput, ForwardOptions};
use crate::encoder::{Batch, Encoder, MultimodalSequence};
use crate::error::Result;
use crate::geometry::{BBox, GroundingAnnotation};
use crate::metrics::TubePrediction;
use crate::objective::{total_loss, LossBreakdown};
use crate::params::{Bound, ParamLayout, Params};
use crate::synth::{vocab_size, Sample, SynthConfig};

/// Clip and query dimensions a model is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputShape {
    pub n_frames: usize,
    pub image_size: usize,
    pub text_len: usize,
    pub vocab_size: usize,
}

impl From<&SynthConfig> for InputShape {
    fn from(c: &SynthConfig) -> Self {
        InputShape { n_frames: c.n_frames, image_size: c.image_size, text_len: c.text_len, vocab_size: vocab_size() }
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub shape: InputShape,
    pub encoder: Encoder,
    pub decoder: Decoder,
    layout: ParamLayout,
}

/// Everything a forward pass leaves on the tape.
#[derive(Clone, Debug)]
pub struct ModelOutput<T> {
    pub sequence: MultimodalSequence,
    pub decoder: DecoderOutput<T>,
}

impl Model {
    pub fn new(config: &ModelConfig, shape: InputShape) -> Result<Self> {
        config.validate()?;
        let mut layout = ParamLayout::new();
        let encoder = Encoder::new(&mut layout, config, shape.n_frames, shape.image_size, shape.text_len, shape.vocab_size)?;
        let decoder = Decoder::new(&mut layout, config, shape.n_frames);
        Ok(Model { config: config.clone(), shape, encoder, decoder, layout })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn init_params<T: Real>(&self, seed: u64) -> Params<T> {
        Params::init(&self.layout, seed)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, batch: &Batch, opts: ForwardOptions) -> Result<ModelOutput<T>> {
        let sequence = self.encoder.encode(g, p, batch)?;
        let decoder = self.decoder.decode(g, p, &sequence, opts);
        Ok(ModelOutput { sequence, decoder })
    }

    pub fn loss<T: Real>(
        &self,
        g: &mut Graph<T>,
        out: &ModelOutput<T>,
        gts: &[&GroundingAnnotation],
        cfg: &LossConfig,
    ) -> (Var, LossBreakdown) {
        total_loss(g, &out.decoder.stages, gts, self.shape.n_frames, cfg, self.config.iou_loss)
    }

    /// Final-stage tube of every clip in a forward output.
    pub fn predictions<T: Real>(&self, g: &Graph<T>, out: &ModelOutput<T>, ids: &[&str]) -> Vec<TubePrediction> {
        let last = out.decoder.stages.last().expect("at least one stage");
        let n = self.shape.n_frames;
        ids.iter()
            .enumerate()
            .map(|(c, id)| {
                let s = last.state(g, c, n);
                TubePrediction { clip_id: id.to_string(), segment: select_segment(&s.start, &s.end), boxes: s.boxes }
            })
            .collect()
    }

    /// Inference over `samples` in chunks of `batch_size`.
    pub fn predict(&self, params: &Params<f32>, samples: &[Sample], batch_size: usize, opts: ForwardOptions) -> Result<Vec<TubePrediction>> {
        let mut preds = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(batch_size.max(1)) {
            let items: Vec<_> = chunk.iter().map(|s| (&s.clip, &s.query)).collect();
            let batch = Batch::new(&items)?;
            let mut g = Graph::new();
            let p = params.bind(&mut g, false);
            let out = self.forward(&mut g, &p, &batch, opts)?;
            let ids: Vec<&str> = chunk.iter().map(|s| s.annotation.clip_id.as_str()).collect();
            preds.extend(self.predictions(&g, &out, &ids));
        }
        Ok(preds)
    }
}

/// Boxes of a `[rows, 4]` tensor.
pub fn boxes_of<T: Real>(g: &Graph<T>, v: Var) -> Vec<BBox> {
    g.value(v).data().chunks(4).map(|b| BBox::from(std::array::from_fn(|j| b[j].to_f64().unwrap()))).collect()
}
