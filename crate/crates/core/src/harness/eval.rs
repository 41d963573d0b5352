//! Batched evaluation of a trained model.

use std::fs;
use std::path::Path;

use crate::decoder::ForwardOptions;
use crate::error::{io_err, Result};
use crate::harness::checkpoint::Checkpoint;
use crate::metrics::{evaluate, EvalReport};
use crate::model::Model;
use crate::params::Params;
use crate::synth::Sample;

/// Predicts every sample and scores the final-stage tubes.
pub fn evaluate_model(model: &Model, params: &Params<f32>, samples: &[Sample], batch_size: usize) -> Result<EvalReport> {
    let opts = ForwardOptions { use_context: model.config.use_context, capture_attention: false };
    let preds = model.predict(params, samples, batch_size, opts)?;
    let gts: Vec<_> = samples.iter().map(|s| s.annotation.clone()).collect();
    evaluate(&preds, &gts)
}

pub fn evaluate_checkpoint(ckpt: &Checkpoint, samples: &[Sample]) -> Result<EvalReport> {
    let model = ckpt.model()?;
    let params = ckpt.params_for(&model, false, ckpt.config.train.seed)?;
    evaluate_model(&model, &params, samples, ckpt.config.eval.batch_size)
}

pub fn write_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, report.to_json()).map_err(io_err(path))
}
