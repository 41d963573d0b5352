//! Trains the context-guided model on in-memory synthetic clips, saves a
//! checkpoint and scores it on the held-out split.
//!
//!     cargo run --release --example train_toy -- --steps 300 --out toy.ckpt

use std::path::PathBuf;

use clap::Parser;
use stvg::harness::{evaluate_model, load_data, Trainer};
use stvg::{Model, ModelConfig, RunConfig};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    n_train: usize,
    #[arg(long, default_value_t = 50)]
    n_test: usize,
    /// Train the context-free baseline instead.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut cfg = RunConfig::default();
    cfg.train.steps = args.steps;
    cfg.train.seed = args.seed;
    cfg.train.log_every = (args.steps / 10).max(1);
    cfg.data.n_train = args.n_train;
    cfg.data.n_test = args.n_test;
    if args.baseline {
        cfg.model = ModelConfig::baseline();
    }
    let (train, test) = load_data(&cfg.data)?;
    let model = Model::new(&cfg.model, (&cfg.data.synth).into())?;
    println!("{} parameters, {} train clips", model.layout().numel(), train.len());

    let mut trainer = Trainer::new(&model, &cfg);
    trainer.run(&train, |e| {
        let l = &e.loss;
        println!(
            "step {:>4}  total {:7.3}  kl {:6.3}/{:6.3}  l1 {:6.3}  giou {:6.3}  grad {:7.2}",
            e.step, l.total, l.kl_start, l.kl_end, l.l1, l.iou, e.grad_norm
        );
    })?;

    let r = evaluate_model(&model, trainer.params(), &test, cfg.eval.batch_size)?;
    println!("test  m_tIoU {:.4}  m_vIoU {:.4}  vIoU@0.3 {:.3}", r.m_tiou, r.m_viou, r.viou_at(0.3).unwrap_or(0.0));
    if let Some(out) = args.out {
        trainer.checkpoint().save(&out)?;
        println!("saved {}", out.display());
    }
    Ok(())
}
