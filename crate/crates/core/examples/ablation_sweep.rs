//! Trains every variant along one ablation axis and writes a CSV with one
//! row per run plus per-variant medians. Axes: icg_icr, theta_t, theta_s,
//! fusion, context_in_tdb, motion.
//!
//!     cargo run --release --example ablation_sweep -- --axis fusion --steps 300 --seeds 0

use std::path::PathBuf;

use clap::Parser;
use stvg::harness::sweep::{run_sweep, write_csv, SweepAxis};
use stvg::harness::load_data;
use stvg::RunConfig;

#[derive(Parser)]
struct Args {
    #[arg(long, default_value = "icg_icr")]
    axis: SweepAxis,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 200)]
    n_train: usize,
    #[arg(long, default_value_t = 50)]
    n_test: usize,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut cfg = RunConfig::default();
    cfg.train.steps = args.steps;
    cfg.data.n_train = args.n_train;
    cfg.data.n_test = args.n_test;
    let (train, test) = load_data(&cfg.data)?;
    let rows = run_sweep(&cfg, args.axis, &args.seeds, &train, &test, |r| {
        println!("{:<24} seed {}  m_vIoU {:.4}  m_tIoU {:.4}  {:.0} s", r.variant, r.seed.unwrap_or(0), r.m_viou, r.m_tiou, r.seconds);
    })?;
    write_csv(&rows, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
