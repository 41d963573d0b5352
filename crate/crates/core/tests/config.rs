use std::path::Path;

use stvg::{ModelConfig, RunConfig};

fn shipped(name: &str) -> RunConfig {
    RunConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn shipped_toy_profile_is_the_default() {
    assert_eq!(shipped("toy.toml"), RunConfig::default());
}

#[test]
fn shipped_baseline_only_drops_context() {
    assert_eq!(shipped("baseline.toml").model, ModelConfig::baseline());
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(RunConfig::from_toml("[model]\nstagez = 2\n").is_err());
    assert!(RunConfig::from_toml("[bogus]\nx = 1\n").is_err());
    assert!(RunConfig::from_toml("[train]\nbatch_size = 0\n").is_err());
}

#[test]
fn toml_round_trip() {
    let mut cfg = RunConfig::default();
    cfg.model.fusion = stvg::Fusion::Product;
    cfg.train.steps = 17;
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
}
