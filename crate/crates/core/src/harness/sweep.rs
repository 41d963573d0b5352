//! Ablation sweeps: train and evaluate a family of model variants on the
//! same data and seeds.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{Fusion, ModelConfig, RunConfig};
use crate::error::{Error, Result};
use crate::harness::eval::evaluate_model;
use crate::harness::train::Trainer;
use crate::model::Model;
use crate::synth::Sample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Context generation and each refinement level switched on in turn.
    IcgIcr,
    ThetaT,
    ThetaS,
    Fusion,
    ContextInTdb,
    Motion,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 6] =
        [SweepAxis::IcgIcr, SweepAxis::ThetaT, SweepAxis::ThetaS, SweepAxis::Fusion, SweepAxis::ContextInTdb, SweepAxis::Motion];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::IcgIcr => "icg_icr",
            SweepAxis::ThetaT => "theta_t",
            SweepAxis::ThetaS => "theta_s",
            SweepAxis::Fusion => "fusion",
            SweepAxis::ContextInTdb => "context_in_tdb",
            SweepAxis::Motion => "motion",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            let names: Vec<_> = SweepAxis::ALL.iter().map(|a| a.name()).collect();
            Error::Config(format!("unknown sweep axis {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// Labelled model variants along `axis`, derived from `base`.
pub fn variants(axis: SweepAxis, base: &ModelConfig) -> Vec<(String, ModelConfig)> {
    let ctx = ModelConfig { use_context: true, ..base.clone() };
    match axis {
        SweepAxis::IcgIcr => vec![
            ("baseline".into(), ModelConfig { use_context: false, ..base.clone() }),
            ("ICG".into(), ModelConfig { fusion: Fusion::TwoLevel, filter_temporal: false, filter_spatial: false, ..ctx.clone() }),
            ("ICG+T".into(), ModelConfig { fusion: Fusion::TwoLevel, filter_temporal: true, filter_spatial: false, ..ctx.clone() }),
            ("ICG+S".into(), ModelConfig { fusion: Fusion::TwoLevel, filter_temporal: false, filter_spatial: true, ..ctx.clone() }),
            ("ICG+S+T".into(), ModelConfig { fusion: Fusion::TwoLevel, filter_temporal: true, filter_spatial: true, ..ctx }),
        ],
        SweepAxis::ThetaT => {
            [0.3, 0.5, 0.7, 0.9].into_iter().map(|t| (format!("theta_t={t}"), ModelConfig { theta_t: t, ..ctx.clone() })).collect()
        }
        SweepAxis::ThetaS => {
            [0.4, 0.6, 0.8, 0.9].into_iter().map(|t| (format!("theta_s={t}"), ModelConfig { theta_s: t, ..ctx.clone() })).collect()
        }
        SweepAxis::Fusion => [("two_level", Fusion::TwoLevel), ("sum", Fusion::Sum), ("product", Fusion::Product)]
            .into_iter()
            .map(|(n, f)| (n.to_string(), ModelConfig { fusion: f, ..ctx.clone() }))
            .collect(),
        SweepAxis::ContextInTdb => vec![
            ("sdb_only".into(), ModelConfig { context_in_tdb: false, ..ctx.clone() }),
            ("sdb+tdb".into(), ModelConfig { context_in_tdb: true, ..ctx }),
        ],
        SweepAxis::Motion => vec![
            ("no_motion".into(), ModelConfig { use_motion: false, motion_context: false, ..ctx.clone() }),
            ("motion_encoder_only".into(), ModelConfig { use_motion: true, motion_context: false, ..ctx.clone() }),
            ("motion_everywhere".into(), ModelConfig { use_motion: true, motion_context: true, ..ctx }),
        ],
    }
}

/// One result line. `seed` is empty on the per-variant median rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub variant: String,
    pub seed: Option<u64>,
    pub m_tiou: f64,
    pub m_viou: f64,
    pub viou_at_03: f64,
    pub viou_at_05: f64,
    /// Wall time of training plus evaluation.
    pub seconds: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of every metric over the seeds of each variant, in first-seen
/// variant order.
pub fn medians(rows: &[SweepRow]) -> Vec<SweepRow> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows.iter().filter(|r| r.seed.is_some()) {
        if !names.contains(&r.variant.as_str()) {
            names.push(&r.variant);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let rs: Vec<&SweepRow> = rows.iter().filter(|r| r.variant == name && r.seed.is_some()).collect();
            let col = |f: fn(&SweepRow) -> f64| median(&mut rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            SweepRow {
                axis: rs[0].axis.clone(),
                variant: name.to_string(),
                seed: None,
                m_tiou: col(|r| r.m_tiou),
                m_viou: col(|r| r.m_viou),
                viou_at_03: col(|r| r.viou_at_03),
                viou_at_05: col(|r| r.viou_at_05),
                seconds: col(|r| r.seconds),
            }
        })
        .collect()
}

/// Trains one model variant with `seed` and evaluates it on `test`.
pub fn run_variant(
    base: &RunConfig,
    axis: SweepAxis,
    label: &str,
    model_cfg: &ModelConfig,
    seed: u64,
    train: &[Sample],
    test: &[Sample],
) -> Result<SweepRow> {
    let start = std::time::Instant::now();
    let mut cfg = base.clone();
    cfg.model = model_cfg.clone();
    cfg.train.seed = seed;
    cfg.validate()?;
    let model = Model::new(&cfg.model, (&cfg.data.synth).into())?;
    let mut t = Trainer::new(&model, &cfg);
    t.run(train, |_| {})?;
    let r = evaluate_model(&model, t.params(), test, cfg.eval.batch_size)?;
    Ok(SweepRow {
        axis: axis.name().into(),
        variant: label.into(),
        seed: Some(seed),
        m_tiou: r.m_tiou,
        m_viou: r.m_viou,
        viou_at_03: r.viou_at(0.3).unwrap_or(0.0),
        viou_at_05: r.viou_at(0.5).unwrap_or(0.0),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Every variant of `axis` on every seed, followed by the median rows.
pub fn run_sweep(
    base: &RunConfig,
    axis: SweepAxis,
    seeds: &[u64],
    train: &[Sample],
    test: &[Sample],
    mut on_row: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (label, mc) in variants(axis, &base.model) {
        for &seed in seeds {
            let row = run_variant(base, axis, &label, &mc, seed, train, test)?;
            on_row(&row);
            rows.push(row);
        }
    }
    let med = medians(&rows);
    rows.extend(med);
    Ok(rows)
}

pub fn write_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(crate::error::io_err(path))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}
