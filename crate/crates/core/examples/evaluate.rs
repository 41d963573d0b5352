//! Scores a saved checkpoint on a dataset directory (or on freshly generated
//! test clips) and writes the JSON report.
//!
//!     cargo run --release --example evaluate -- --ckpt toy.ckpt --report report.json

use std::path::PathBuf;

use clap::Parser;
use stvg::harness::{evaluate_checkpoint, load_data, write_report, Checkpoint};
use stvg::autograd::Graph;
use stvg::{Batch, DataConfig, Dataset, ForwardOptions, Sample};

#[derive(Parser)]
struct Args {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Show the worst clips.
    #[arg(long, default_value_t = 5)]
    worst: usize,
    /// Also report how many frames survive context filtering at each stage.
    #[arg(long)]
    kept: bool,
    /// Override the filter thresholds stored in the checkpoint.
    #[arg(long)]
    theta_t: Option<f64>,
    #[arg(long)]
    theta_s: Option<f64>,
}

/// Mean surviving frames per clip after each filtering stage, and the share
/// of clips where only the fallback frame was kept.
fn kept_stats(ck: &Checkpoint, samples: &[Sample]) -> anyhow::Result<Vec<(f64, f64)>> {
    let model = ck.model()?;
    let params = ck.params_for(&model, false, ck.config.train.seed)?;
    let mut sums: Vec<(f64, f64)> = Vec::new();
    for chunk in samples.chunks(ck.config.eval.batch_size.max(1)) {
        let items: Vec<_> = chunk.iter().map(|s| (&s.clip, &s.query)).collect();
        let mut g = Graph::<f32>::new();
        let p = params.bind(&mut g, false);
        let out = model.forward(&mut g, &p, &Batch::new(&items)?, ForwardOptions::default())?;
        let stages: Vec<_> = out.decoder.stages.iter().filter_map(|s| s.context.as_ref()).collect();
        sums.resize(stages.len(), (0.0, 0.0));
        for (acc, ctx) in sums.iter_mut().zip(stages) {
            for k in &ctx.kept {
                acc.0 += k.len() as f64;
                acc.1 += f64::from(u8::from(k.len() == 1));
            }
        }
    }
    let n = samples.len() as f64;
    Ok(sums.into_iter().map(|(a, b)| (a / n, b / n)).collect())
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut ck = Checkpoint::load(&args.ckpt)?;
    if let Some(t) = args.theta_t {
        ck.config.model.theta_t = t;
    }
    if let Some(t) = args.theta_s {
        ck.config.model.theta_s = t;
    }
    let samples = match &args.data {
        Some(d) => Dataset::load(d)?.samples,
        None => load_data(&DataConfig { n_train: 0, ..ck.config.data.clone() })?.1,
    };
    let r = evaluate_checkpoint(&ck, &samples)?;
    println!("checkpoint at step {}, {} clips", ck.step, r.n_samples);
    println!("m_tIoU {:.4}  m_vIoU {:.4}", r.m_tiou, r.m_viou);
    for (k, v) in &r.viou_at {
        println!("vIoU@{k} {v:.3}");
    }
    let mut clips = r.per_clip.clone();
    clips.sort_by(|a, b| a.viou.total_cmp(&b.viou));
    for c in clips.iter().take(args.worst) {
        println!("  {}  tIoU {:.3}  vIoU {:.3}", c.clip_id, c.tiou, c.viou);
    }
    if args.kept {
        for (k, (mean, single)) in kept_stats(&ck, &samples)?.iter().enumerate() {
            println!("context after stage {}: {mean:.2} frames kept on average, single frame in {:.0}% of clips", k + 1, 100.0 * single);
        }
    }
    if let Some(p) = &args.report {
        write_report(&r, p)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}
