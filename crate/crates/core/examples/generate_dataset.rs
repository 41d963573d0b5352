//! Writes a synthetic grounding dataset to disk and prints a few of its
//! queries, segments and boxes.
//!
//!     cargo run --release --example generate_dataset -- --out data/train --n 500

use std::path::PathBuf;

use clap::Parser;
use stvg::synth::{build_dataset, decode_tokens};
use stvg::{Dataset, SynthConfig};

#[derive(Parser)]
struct Args {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    distractors: Option<usize>,
    /// Probability of a mid-clip color shift per object.
    #[arg(long)]
    jitter: Option<f64>,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut cfg = SynthConfig { seed: args.seed, ..Default::default() };
    if let Some(d) = args.distractors {
        cfg.n_distractors = d;
    }
    if let Some(j) = args.jitter {
        cfg.jitter_prob = j;
    }
    let manifest = build_dataset(&cfg, args.n, &args.out)?;
    println!("{} clips in {} (config {})", manifest.clip_ids.len(), args.out.display(), &manifest.config_hash[..12]);

    let ds = Dataset::load(&args.out)?;
    for s in ds.samples.iter().take(5) {
        let a = &s.annotation;
        let first = a.boxes[0];
        println!(
            "{}  \"{}\"  frames {}..={}  first box cx {:.2} cy {:.2} w {:.2} h {:.2}",
            a.clip_id,
            decode_tokens(s.query.tokens()),
            a.segment.start,
            a.segment.end,
            first.cx,
            first.cy,
            first.w,
            first.h
        );
    }
    Ok(())
}
