//! Operational shell: optimizer, training, checkpoints, evaluation, sweeps
//! and attention dumps.

pub mod checkpoint;
pub mod dump;
pub mod eval;
pub mod optim;
pub mod sweep;
pub mod train;

pub use checkpoint::Checkpoint;
pub use dump::{attention_maps, dump_attention, AttentionMaps};
pub use eval::{evaluate_checkpoint, evaluate_model, write_report};
pub use optim::AdamW;
pub use sweep::{run_sweep, SweepAxis, SweepRow};
pub use train::{load_data, train, LogEntry, Trainer};
