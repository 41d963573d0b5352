//! Run configuration. Every section rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::synth::SynthConfig;

/// How temporal and spatial confidences combine when filtering context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Temporal filter first, then spatial filter on the survivors.
    TwoLevel,
    /// One filter on `s_t + s_s`.
    Sum,
    /// One filter on `s_t * s_s`.
    Product,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IouLoss {
    Plain,
    Giou,
}

/// Reduction of a RoI grid before scoring and fusion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Mean,
    Flatten,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Decoder stages.
    pub stages: usize,
    pub hidden: usize,
    pub heads: usize,
    pub appearance_channels: usize,
    pub motion_channels: usize,
    pub text_channels: usize,
    /// Self-attention blocks in the multimodal encoder.
    pub encoder_layers: usize,
    pub ffn_mult: usize,
    pub pool_size: usize,
    pub sampling_ratio: usize,
    pub theta_t: f64,
    pub theta_s: f64,
    /// Threshold of the one-level `sum` filter.
    pub theta_sum: f64,
    /// Threshold of the one-level `product` filter.
    pub theta_product: f64,
    pub share_heads: bool,
    pub fusion: Fusion,
    pub iou_loss: IouLoss,
    pub pool: Pool,
    pub hfs_uses_temporal: bool,
    pub context_in_tdb: bool,
    pub use_context: bool,
    pub use_motion: bool,
    /// Include motion RoI features in the context (needs `use_motion`).
    pub motion_context: bool,
    /// Apply the temporal filter level.
    pub filter_temporal: bool,
    /// Apply the spatial filter level.
    pub filter_spatial: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            stages: 3,
            hidden: 64,
            heads: 4,
            appearance_channels: 64,
            motion_channels: 64,
            text_channels: 64,
            encoder_layers: 2,
            ffn_mult: 4,
            pool_size: 4,
            sampling_ratio: 2,
            theta_t: 0.7,
            theta_s: 0.8,
            theta_sum: 1.5,
            theta_product: 0.56,
            share_heads: true,
            fusion: Fusion::TwoLevel,
            iou_loss: IouLoss::Giou,
            pool: Pool::Mean,
            hfs_uses_temporal: false,
            context_in_tdb: false,
            use_context: true,
            use_motion: true,
            motion_context: true,
            filter_temporal: true,
            filter_spatial: true,
        }
    }
}

impl ModelConfig {
    /// The context-free reference model.
    pub fn baseline() -> Self {
        ModelConfig { use_context: false, ..Default::default() }
    }

    pub fn uses_motion_context(&self) -> bool {
        self.use_motion && self.motion_context
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.stages < 1 {
            return err("model.stages must be >= 1".into());
        }
        if self.hidden == 0 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return err(format!("model.hidden {} must be a positive multiple of model.heads {}", self.hidden, self.heads));
        }
        if !self.hidden.is_multiple_of(4) {
            return err(format!("model.hidden {} must be divisible by 4", self.hidden));
        }
        if !self.text_channels.is_multiple_of(self.heads) || !self.text_channels.is_multiple_of(2) {
            return err(format!("model.text_channels {} must be even and divisible by heads", self.text_channels));
        }
        for (name, v) in [
            ("appearance_channels", self.appearance_channels),
            ("motion_channels", self.motion_channels),
            ("ffn_mult", self.ffn_mult),
            ("pool_size", self.pool_size),
            ("sampling_ratio", self.sampling_ratio),
        ] {
            if v == 0 {
                return err(format!("model.{name} must be positive"));
            }
        }
        for (name, v) in [("theta_t", self.theta_t), ("theta_s", self.theta_s), ("theta_product", self.theta_product)] {
            if !(0.0..=1.0).contains(&v) {
                return err(format!("model.{name} = {v} outside [0, 1]"));
            }
        }
        if !(0.0..=2.0).contains(&self.theta_sum) {
            return err(format!("model.theta_sum = {} outside [0, 2]", self.theta_sum));
        }
        Ok(())
    }
}

/// Loss weights, in the order start-KL, end-KL, temporal BCE, box L1,
/// box IoU, spatial BCE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub lambda_temporal: f64,
    pub lambda_l1: f64,
    pub lambda_iou: f64,
    pub lambda_spatial: f64,
    /// Gaussian smoothing of the start/end targets in frames; 0 is one-hot.
    pub temporal_target_sigma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_start: 10.0,
            lambda_end: 10.0,
            lambda_temporal: 1.0,
            lambda_l1: 5.0,
            lambda_iou: 3.0,
            lambda_spatial: 1.0,
            temporal_target_sigma: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_start,
            self.lambda_end,
            self.lambda_temporal,
            self.lambda_l1,
            self.lambda_iou,
            self.lambda_spatial,
            self.temporal_target_sigma,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("loss weights and sigma must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Learning rate of the visual and text backbones.
    pub lr_backbone: f64,
    /// Learning rate of everything else.
    pub lr_head: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    /// Linear warmup steps.
    pub warmup: usize,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 8,
            lr_backbone: 5e-4,
            lr_head: 1e-3,
            weight_decay: 1e-4,
            grad_clip: 0.1,
            warmup: 50,
            seed: 0,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        for (name, v) in [
            ("lr_backbone", self.lr_backbone),
            ("lr_head", self.lr_head),
            ("weight_decay", self.weight_decay),
            ("grad_clip", self.grad_clip),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("train.{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub synth: SynthConfig,
    /// Clips generated for training when `train_dir` is unset.
    pub n_train: usize,
    /// Clips generated for testing when `test_dir` is unset.
    pub n_test: usize,
    pub train_dir: Option<PathBuf>,
    pub test_dir: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { synth: SynthConfig::default(), n_train: 500, n_test: 100, train_dir: None, test_dir: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { batch_size: 16 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Parses TOML text. Keys may be written flat (`model.stages = 2`) or
    /// under `[model]` style tables.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        self.data.synth.validate()?;
        if self.eval.batch_size == 0 {
            return Err(Error::Config("eval.batch_size must be positive".into()));
        }
        Ok(())
    }
}
