use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use stvg::harness::{dump_attention, evaluate_checkpoint, sweep, write_report, Checkpoint, SweepAxis, Trainer};
use stvg::synth::build_dataset;
use stvg::{harness::train::TEST_SEED_OFFSET, Dataset, Model, RunConfig};

#[derive(Parser)]
#[command(name = "stvg", about = "Context-guided video grounding on synthetic moving shapes")]
struct Cli {
    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Accepted for scripts; every code path is single-threaded and
    /// deterministic already.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic dataset to disk.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: usize,
        /// Test clips use a separate generator seed.
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
    },
    /// Train a model and save a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training log, one JSON object per logged step.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Start from the parameters of this checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Let `--init` fill only the parameters both models share.
        #[arg(long)]
        allow_partial: bool,
    },
    /// Score a checkpoint and write the report JSON.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Dataset directory; defaults to the test clips of the checkpoint's
        /// own data section.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Train and evaluate every variant along one ablation axis.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        axis: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
    /// Write per-frame attention heatmaps of one clip.
    DumpAttention {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        clip: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Decode without instance context.
        #[arg(long)]
        no_context: bool,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn test_samples(cfg: &RunConfig, data: Option<&Path>) -> Result<Vec<stvg::Sample>> {
    Ok(match data {
        Some(d) => Dataset::load(d)?.samples,
        None => stvg::harness::load_data(&stvg::DataConfig { n_train: 0, ..cfg.data.clone() })?.1,
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Gen { config, out, n, split } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let mut synth = cfg.data.synth.clone();
            if let Split::Test = split {
                synth.seed = synth.seed.wrapping_add(TEST_SEED_OFFSET);
            }
            let m = build_dataset(&synth, n, &out)?;
            println!("wrote {} clips to {} (config {})", m.clip_ids.len(), out.display(), m.config_hash);
        }
        Cmd::Train { config, out, log, init, allow_partial } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let (train, _) = stvg::harness::load_data(&stvg::DataConfig { n_test: 0, ..cfg.data.clone() })?;
            let model = Model::new(&cfg.model, (&cfg.data.synth).into())?;
            let mut trainer = match init {
                Some(p) => {
                    let ck = Checkpoint::load(&p)?;
                    let params = ck.params_for(&model, allow_partial, cfg.train.seed)?;
                    Trainer::with_params(&model, &cfg, params)
                }
                None => Trainer::new(&model, &cfg),
            };
            let mut log_file = match &log {
                Some(p) => Some(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
                None => None,
            };
            let mut write_err = None;
            trainer.run(&train, |e| {
                println!("step {:>5}  loss {:.4}  grad {:.3}  lr x{:.3}", e.step, e.loss.total, e.grad_norm, e.lr_scale);
                if let Some(f) = log_file.as_mut() {
                    if let Err(err) = writeln!(f, "{}", serde_json::to_string(e).expect("log entry serializes")) {
                        write_err.get_or_insert(err);
                    }
                }
            })?;
            if let Some(e) = write_err {
                return Err(e).context("writing training log");
            }
            trainer.checkpoint().save(&out)?;
            println!("saved {}", out.display());
        }
        Cmd::Eval { ckpt, data, report } => {
            let ck = Checkpoint::load(&ckpt)?;
            let samples = test_samples(&ck.config, data.as_deref())?;
            let r = evaluate_checkpoint(&ck, &samples)?;
            write_report(&r, &report)?;
            println!(
                "m_tIoU {:.4}  m_vIoU {:.4}  vIoU@0.3 {:.4}  vIoU@0.5 {:.4}  ({} clips)",
                r.m_tiou,
                r.m_viou,
                r.viou_at(0.3).unwrap_or(0.0),
                r.viou_at(0.5).unwrap_or(0.0),
                r.n_samples
            );
        }
        Cmd::Sweep { config, axis, out, seeds } => {
            let cfg = load_config(config.as_deref(), None)?;
            let axis: SweepAxis = axis.parse()?;
            let seeds = match cli.seed {
                Some(s) => vec![s],
                None => seeds,
            };
            if seeds.is_empty() {
                bail!("no seeds given");
            }
            let (train, test) = stvg::harness::load_data(&cfg.data)?;
            let rows = sweep::run_sweep(&cfg, axis, &seeds, &train, &test, |r| {
                println!("{:<22} seed {:>3}  m_vIoU {:.4}  m_tIoU {:.4}", r.variant, r.seed.unwrap_or(0), r.m_viou, r.m_tiou);
            })?;
            sweep::write_csv(&rows, &out)?;
            println!("wrote {}", out.display());
        }
        Cmd::DumpAttention { ckpt, clip, out, data, no_context } => {
            let ck = Checkpoint::load(&ckpt)?;
            let samples = test_samples(&ck.config, data.as_deref())?;
            let sample = samples
                .iter()
                .find(|s| s.annotation.clip_id == clip)
                .with_context(|| format!("no clip {clip} in the dataset"))?;
            let model = ck.model()?;
            let params = ck.params_for(&model, false, ck.config.train.seed)?;
            let maps = dump_attention(&model, &params, sample, !no_context, &out)?;
            println!("wrote {} frames ({}x{}) to {}", maps.frames.len(), maps.h, maps.w, out.display());
        }
    }
    Ok(())
}
