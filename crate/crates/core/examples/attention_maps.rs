//! Prints the final spatial cross-attention of one clip as ASCII heatmaps,
//! with and without instance context, and optionally writes the PGM dump.
//!
//!     cargo run --release --example attention_maps -- --ckpt toy.ckpt --clip clip_00003

use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use stvg::harness::{attention_maps, dump_attention, load_data, AttentionMaps, Checkpoint, Trainer};
use stvg::{DataConfig, Model, RunConfig};

#[derive(Parser)]
struct Args {
    /// Trains a short model when omitted.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long, default_value = "clip_00000")]
    clip: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

const RAMP: &[u8] = b" .:-=+*#%@";

fn show(m: &AttentionMaps, f: usize) {
    let g = m.gray(f);
    for y in 0..m.h {
        let line: String = (0..m.w).map(|x| RAMP[g[y * m.w + x] as usize * (RAMP.len() - 1) / 255] as char).collect();
        println!("    |{line}|");
    }
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let (ck, model) = match &args.ckpt {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let m = ck.model()?;
            (ck, m)
        }
        None => {
            let mut cfg = RunConfig::default();
            cfg.train.steps = 100;
            cfg.data.n_train = 100;
            let (train, _) = load_data(&DataConfig { n_test: 0, ..cfg.data.clone() })?;
            let model = Model::new(&cfg.model, (&cfg.data.synth).into())?;
            let mut t = Trainer::new(&model, &cfg);
            t.run(&train, |_| {})?;
            (t.checkpoint(), model)
        }
    };
    let params = ck.params_for(&model, false, ck.config.train.seed)?;
    let test = load_data(&DataConfig { n_train: 0, ..ck.config.data.clone() })?.1;
    let sample = test.iter().find(|s| s.annotation.clip_id == args.clip).context("clip not in the test split")?;
    let gt = &sample.annotation;
    let with = attention_maps(&model, &params, sample, true)?;
    let without = attention_maps(&model, &params, sample, false)?;
    println!("{}: ground truth frames {}..={}, predicted {}..={}", gt.clip_id, gt.segment.start, gt.segment.end, with.segment.start, with.segment.end);
    for f in gt.segment.frames() {
        println!("frame {f}  target at ({:.2}, {:.2})", gt.box_at(f).unwrap().cx, gt.box_at(f).unwrap().cy);
        println!("  with context");
        show(&with, f);
        println!("  without context");
        show(&without, f);
    }
    if let Some(out) = &args.out {
        dump_attention(&model, &params, sample, true, out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
