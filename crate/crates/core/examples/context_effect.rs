//! Baseline vs context-guided decoding on the shipped synthetic task.
//!
//! Trains the context-free baseline, the unfiltered-context variant and the
//! full two-level model on the same data and seeds, then writes one CSV row
//! per run plus per-variant medians.
//!
//!     cargo run --release --example context_effect -- --out results/context_effect.csv

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use stvg::harness::sweep::{medians, run_variant, variants, write_csv, SweepAxis};
use stvg::harness::load_data;
use stvg::RunConfig;

#[derive(Parser)]
struct Args {
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Overrides `train.steps`.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "baseline,ICG,ICG+S+T")]
    variants: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "results/context_effect.csv")]
    out: PathBuf,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.steps {
        cfg.train.steps = s;
    }
    let (train, test) = load_data(&cfg.data)?;
    println!("{} train / {} test clips, {} steps", train.len(), test.len(), cfg.train.steps);
    let mut rows = Vec::new();
    let chosen: Vec<_> = variants(SweepAxis::IcgIcr, &cfg.model).into_iter().filter(|(l, _)| args.variants.contains(l)).collect();
    for &seed in &args.seeds {
        for (label, mc) in &chosen {
            let t = Instant::now();
            let row = run_variant(&cfg, SweepAxis::IcgIcr, label, mc, seed, &train, &test)?;
            println!(
                "{label:<8} seed {seed}  m_vIoU {:.4}  m_tIoU {:.4}  vIoU@0.5 {:.3}  ({:.0} s)",
                row.m_viou,
                row.m_tiou,
                row.viou_at_05,
                t.elapsed().as_secs_f64()
            );
            rows.push(row);
            let mut all = rows.clone();
            all.extend(medians(&rows));
            write_csv(&all, &args.out)?;
        }
    }
    for m in medians(&rows) {
        println!("median {:<8} m_vIoU {:.4}  m_tIoU {:.4}", m.variant, m.m_viou, m.m_tiou);
    }
    Ok(())
}
