//! Attention heatmaps of the final-stage spatial cross-attention.

use std::fs;
use std::path::Path;

use autograd::Graph;
use serde::{Deserialize, Serialize};

use crate::decoder::ForwardOptions;
use crate::encoder::Batch;
use crate::error::{io_err, Error, Result};
use crate::geometry::{BBox, Segment};
use crate::model::Model;
use crate::params::Params;
use crate::synth::{decode_tokens, Sample};

/// Per-frame attention over the visual feature grid, heads averaged and the
/// appearance and motion weights of a cell summed.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMaps {
    pub h: usize,
    pub w: usize,
    /// `n_frames` maps of `h * w` weights.
    pub frames: Vec<Vec<f64>>,
    pub boxes: Vec<BBox>,
    pub segment: Segment,
}

impl AttentionMaps {
    /// Frame `f` scaled so its largest weight maps to 255.
    pub fn gray(&self, f: usize) -> Vec<u8> {
        let m = &self.frames[f];
        let max = m.iter().cloned().fold(0.0, f64::max);
        m.iter().map(|&v| if max > 0.0 { (255.0 * v / max).round() as u8 } else { 0 }).collect()
    }
}

pub fn attention_maps(model: &Model, params: &Params<f32>, sample: &Sample, use_context: bool) -> Result<AttentionMaps> {
    let batch = Batch::new(&[(&sample.clip, &sample.query)])?;
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let opts = ForwardOptions { use_context: use_context && model.config.use_context, capture_attention: true };
    let out = model.forward(&mut g, &p, &batch, opts)?;
    let attn = out.decoder.attention.clone().expect("attention captured");
    let layout = out.sequence.layout;
    let cells = layout.cells();
    let frames = (0..model.shape.n_frames)
        .map(|f| {
            let mut m = vec![0.0; cells];
            for h in 0..attn.heads {
                let row = attn.row(f, h, 0);
                for (c, v) in m.iter_mut().enumerate() {
                    *v += row[layout.appearance().start + c] as f64;
                    if let Some(r) = layout.motion() {
                        *v += row[r.start + c] as f64;
                    }
                }
            }
            m.iter_mut().for_each(|v| *v /= attn.heads as f64);
            m
        })
        .collect();
    let pred = model.predictions(&g, &out, &[sample.annotation.clip_id.as_str()]).remove(0);
    Ok(AttentionMaps { h: layout.h, w: layout.w, frames, boxes: pred.boxes, segment: pred.segment })
}

#[derive(Serialize, Deserialize)]
struct FrameEntry {
    frame: usize,
    file: String,
    in_segment: bool,
    #[serde(rename = "box")]
    bbox: BBox,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    clip_id: String,
    query: String,
    use_context: bool,
    grid: [usize; 2],
    segment: Segment,
    frames: Vec<FrameEntry>,
}

/// Writes `frame_XX.pgm` (binary graymap of the feature grid) for every frame
/// plus `attention.json` with the predicted boxes and segment.
pub fn dump_attention(model: &Model, params: &Params<f32>, sample: &Sample, use_context: bool, out: &Path) -> Result<AttentionMaps> {
    let maps = attention_maps(model, params, sample, use_context)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut frames = Vec::with_capacity(maps.frames.len());
    for f in 0..maps.frames.len() {
        let name = format!("frame_{f:02}.pgm");
        let path = out.join(&name);
        let mut buf = format!("P5\n{} {}\n255\n", maps.w, maps.h).into_bytes();
        buf.extend(maps.gray(f));
        fs::write(&path, buf).map_err(io_err(&path))?;
        frames.push(FrameEntry { frame: f, file: name, in_segment: maps.segment.contains(f), bbox: maps.boxes[f] });
    }
    let side = Sidecar {
        clip_id: sample.annotation.clip_id.clone(),
        query: decode_tokens(sample.query.tokens()),
        use_context,
        grid: [maps.h, maps.w],
        segment: maps.segment,
        frames,
    };
    let path = out.join("attention.json");
    let text = serde_json::to_string_pretty(&side).map_err(|e| Error::Json { path: path.clone(), source: e })?;
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(maps)
}
