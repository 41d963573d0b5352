//! Times forward and forward+backward passes of the default toy model on one
//! training batch.
//!
//!     cargo run --release --example step_throughput -- --reps 5

use std::time::Instant;

use clap::Parser;
use stvg::autograd::Graph;
use stvg::{generate_samples, Batch, ForwardOptions, InputShape, LossConfig, Model, ModelConfig, SynthConfig};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Time the context-free baseline instead.
    #[arg(long)]
    baseline: bool,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let synth = SynthConfig::default();
    let samples = generate_samples(&synth, args.batch, 0)?;
    let cfg = if args.baseline { ModelConfig::baseline() } else { ModelConfig::default() };
    let model = Model::new(&cfg, InputShape::from(&synth))?;
    let params = model.init_params::<f32>(0);
    println!("{} parameters", model.layout().numel());
    let items: Vec<_> = samples.iter().map(|s| (&s.clip, &s.query)).collect();
    let batch = Batch::new(&items)?;
    let gts: Vec<_> = samples.iter().map(|s| &s.annotation).collect();
    for _ in 0..args.reps {
        let t = Instant::now();
        let mut g = Graph::new();
        let p = params.bind(&mut g, true);
        let out = model.forward(&mut g, &p, &batch, ForwardOptions::default())?;
        let (loss, br) = model.loss(&mut g, &out, &gts, &LossConfig::default());
        let fwd = t.elapsed();
        let _grads = g.backward(loss);
        println!("forward {fwd:?}  with backward {:?}  loss {:.3}  tape {} nodes", t.elapsed(), br.total, g.len());
    }
    Ok(())
}
