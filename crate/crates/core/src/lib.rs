//! Spatio-temporal video grounding with instance context, trained on a
//! synthetic moving-shapes task.
//!
//! A query such as "the red circle moving left" names one object in a short
//! clip. The model predicts the frame segment where that object matches the
//! query and a box on every frame. Decoding runs in stages; after each stage
//! the current boxes are pooled into per-frame context tokens, low-confidence
//! frames are filtered out, and the survivors guide the next stage.

mod error;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod geometry;
pub mod harness;
pub mod icg;
pub mod icr;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod objective;
pub mod params;
pub mod synth;

pub use autograd;
pub use config::{DataConfig, EvalConfig, Fusion, IouLoss, LossConfig, ModelConfig, Pool, RunConfig, TrainConfig};
pub use decoder::{select_segment, DecoderOutput, ForwardOptions};
pub use encoder::{Batch, TextQuery, VideoClip};
pub use error::{Error, Result};
pub use geometry::{box_iou, segment_tiou, BBox, GroundingAnnotation, Segment};
pub use metrics::{evaluate, EvalReport, TubePrediction};
pub use model::{InputShape, Model, ModelOutput};
pub use params::Params;
pub use synth::{generate_samples, Dataset, Sample, SynthConfig};
