use std::path::Path;

use anyhow::{Context, Result};
use dsq_core::behavior::{SigmaReduction, TrainConfig};
use dsq_core::AnalysisConfig;
use serde::Deserialize;

use crate::args::{AnalyzeArgs, Format};

/// Keys accepted in a `--config` TOML file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub discount: Option<f64>,
    pub return_floor: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub sigma_reduction: Option<SigmaReduction>,
    pub jobs: Option<usize>,
    pub format: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

pub struct Resolved {
    pub analysis: AnalysisConfig,
    pub jobs: usize,
    pub format: Format,
}

/// Merges defaults, the config file and command-line flags, in increasing
/// precedence.
pub fn resolve(args: &AnalyzeArgs) -> Result<Resolved> {
    let t = &args.train;
    let file = match &t.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut train = TrainConfig::default();
    if let Some(v) = t.epochs.or(file.epochs) {
        train.epochs = v;
    }
    if let Some(v) = t.batch_size.or(file.batch_size) {
        train.batch_size = v;
    }
    if let Some(v) = t.learning_rate.or(file.learning_rate) {
        train.optimizer.learning_rate = v;
    }
    if let Some(v) = t.hidden.clone().or(file.hidden) {
        train.arch.hidden = v;
    }
    if let Some(v) = t.seed.or(file.seed) {
        train.seed = v;
    }
    let format = match (args.out.format, file.format.as_deref()) {
        (Some(f), _) => f,
        (None, None) => Format::Text,
        (None, Some(s)) => <Format as clap::ValueEnum>::from_str(s, true).map_err(|_| {
            anyhow::anyhow!("config: unknown format '{s}' (expected text, json or csv)")
        })?,
    };
    Ok(Resolved {
        analysis: AnalysisConfig {
            discount: t.discount.or(file.discount),
            return_floor: t.return_floor.or(file.return_floor),
            train,
            sigma_reduction: t
                .sigma_reduction
                .map(Into::into)
                .or(file.sigma_reduction)
                .unwrap_or_default(),
        },
        jobs: args.jobs.or(file.jobs).unwrap_or(1).max(1),
        format,
    })
}
