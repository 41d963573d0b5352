//! Training loop.

use autograd::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, RunConfig};
use crate::decoder::ForwardOptions;
use crate::encoder::Batch;
use crate::error::{Error, Result};
use crate::harness::checkpoint::Checkpoint;
use crate::harness::optim::{clip_grad_norm, lr_scale, AdamW};
use crate::model::Model;
use crate::objective::LossBreakdown;
use crate::params::Params;
use crate::synth::{generate_samples, Dataset, Sample};

/// Offset between the train and test generator seeds when clips are
/// generated in memory.
pub const TEST_SEED_OFFSET: u64 = 0x5EED_7E57;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// 1-based index of the step that produced this entry.
    pub step: usize,
    pub lr_scale: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    pub loss: LossBreakdown,
}

/// Train and test samples described by a data section: loaded from disk when
/// a directory is given, generated otherwise.
pub fn load_data(cfg: &DataConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let train = match &cfg.train_dir {
        Some(d) => Dataset::load(d)?.samples,
        None => generate_samples(&cfg.synth, cfg.n_train, cfg.synth.seed)?,
    };
    let test = match &cfg.test_dir {
        Some(d) => Dataset::load(d)?.samples,
        None => generate_samples(&cfg.synth, cfg.n_test, cfg.synth.seed.wrapping_add(TEST_SEED_OFFSET))?,
    };
    Ok((train, test))
}

/// Sample indices of the batch at `step`. The stream walks through one
/// seeded permutation of the data per epoch.
pub fn batch_indices(seed: u64, step: usize, batch: usize, n: usize) -> Vec<usize> {
    assert!(n > 0, "empty training set");
    let mut out = Vec::with_capacity(batch);
    let mut cached: Option<(usize, Vec<usize>)> = None;
    for j in 0..batch {
        let pos = step * batch + j;
        let epoch = pos / n;
        if cached.as_ref().is_none_or(|(e, _)| *e != epoch) {
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            perm.shuffle(&mut rng);
            cached = Some((epoch, perm));
        }
        out.push(cached.as_ref().unwrap().1[pos % n]);
    }
    out
}

pub struct Trainer<'m> {
    model: &'m Model,
    config: RunConfig,
    params: Params<f32>,
    optim: AdamW,
    step: usize,
}

impl<'m> Trainer<'m> {
    pub fn new(model: &'m Model, config: &RunConfig) -> Self {
        let params = model.init_params(config.train.seed);
        Self::with_params(model, config, params)
    }

    pub fn with_params(model: &'m Model, config: &RunConfig, params: Params<f32>) -> Self {
        let optim = AdamW::new(&params);
        Trainer { model, config: config.clone(), params, optim, step: 0 }
    }

    /// Resumes from a checkpoint whose layout matches `model`.
    pub fn resume(model: &'m Model, ckpt: &Checkpoint) -> Result<Self> {
        let params = ckpt.params_for(model, false, ckpt.config.train.seed)?;
        let optim = ckpt.optimizer.clone().unwrap_or_else(|| AdamW::new(&params));
        Ok(Trainer { model, config: ckpt.config.clone(), params, optim, step: ckpt.step })
    }

    pub fn params(&self) -> &Params<f32> {
        &self.params
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Loss and gradients of one batch without updating anything.
    pub fn loss_and_grads(&self, samples: &[&Sample]) -> Result<(LossBreakdown, Vec<Tensor<f32>>)> {
        let items: Vec<_> = samples.iter().map(|s| (&s.clip, &s.query)).collect();
        let batch = Batch::new(&items)?;
        let gts: Vec<_> = samples.iter().map(|s| &s.annotation).collect();
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, true);
        let out = self.model.forward(&mut g, &p, &batch, ForwardOptions::default())?;
        let (loss, br) = self.model.loss(&mut g, &out, &gts, &self.config.loss);
        if !br.total.is_finite() {
            return Err(Error::Diverged { step: self.step + 1, loss: br.total });
        }
        let mut grads = g.backward(loss);
        let grads = p
            .vars()
            .iter()
            .zip(self.params.values())
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        Ok((br, grads))
    }

    /// One optimizer step on `samples`. Aborts on a non-finite loss or
    /// gradient.
    pub fn train_step(&mut self, samples: &[&Sample]) -> Result<LogEntry> {
        let (loss, mut grads) = self.loss_and_grads(samples)?;
        let tc = &self.config.train;
        let grad_norm = clip_grad_norm(&mut grads, tc.grad_clip);
        if !grad_norm.is_finite() {
            return Err(Error::Diverged { step: self.step + 1, loss: grad_norm });
        }
        let scale = lr_scale(self.step, tc.warmup, tc.steps);
        self.optim.step(&mut self.params, &grads, tc, scale);
        self.step += 1;
        Ok(LogEntry { step: self.step, lr_scale: scale, grad_norm, loss })
    }

    /// Trains until `config.train.steps` steps are done, calling `on_log`
    /// every `log_every` steps and on the last one.
    pub fn run(&mut self, data: &[Sample], mut on_log: impl FnMut(&LogEntry)) -> Result<Vec<LogEntry>> {
        let (total, batch, seed, every) =
            (self.config.train.steps, self.config.train.batch_size, self.config.train.seed, self.config.train.log_every.max(1));
        let mut log = Vec::with_capacity(total.saturating_sub(self.step));
        while self.step < total {
            let idx = batch_indices(seed, self.step, batch, data.len());
            let samples: Vec<&Sample> = idx.iter().map(|&i| &data[i]).collect();
            let e = self.train_step(&samples)?;
            if e.step % every == 0 || e.step == total {
                on_log(&e);
            }
            log.push(e);
        }
        Ok(log)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { config: self.config.clone(), step: self.step, params: self.params.clone(), optimizer: Some(self.optim.clone()) }
    }
}

/// Builds the model of `config` and trains it on `data`.
pub fn train(config: &RunConfig, data: &[Sample], on_log: impl FnMut(&LogEntry)) -> Result<(Checkpoint, Vec<LogEntry>)> {
    config.validate()?;
    let model = Model::new(&config.model, (&config.data.synth).into())?;
    let mut t = Trainer::new(&model, config);
    let log = t.run(data, on_log)?;
    Ok((t.checkpoint(), log))
}
