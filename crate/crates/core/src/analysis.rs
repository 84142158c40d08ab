//! Per-dataset indicator pipeline: returns and ERI, behavior fit and EAS,
//! and the coverage diagnostic.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{self, BehaviorPolicy, SigmaReduction, TrainConfig, TrainReport};
use crate::coverage::{coverage_ratio, CoverageResult};
use crate::dataset::Dataset;
use crate::error::{BehaviorError, DatasetError, ReturnsError};
use crate::io::{load_dataset, DatasetFormat};
use crate::ranking::IndicatorRecord;
use crate::returns::ReturnStats;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("returns: {0}")]
    Returns(#[from] ReturnsError),
    #[error("behavior fit: {0}")]
    Behavior(#[from] BehaviorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Overrides every dataset's own discount.
    pub discount: Option<f64>,
    /// Overrides every dataset's own return floor.
    pub return_floor: Option<f64>,
    pub train: TrainConfig,
    pub sigma_reduction: SigmaReduction,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            discount: None,
            return_floor: None,
            train: TrainConfig::default(),
            sigma_reduction: SigmaReduction::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSummary {
    pub discount: f64,
    pub floor: f64,
    pub floor_from_data: bool,
    pub mean_norm: f64,
    pub max_norm: f64,
    pub min_raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetAnalysis {
    pub record: IndicatorRecord,
    pub n_transitions: usize,
    pub n_trajectories: usize,
    pub returns: ReturnSummary,
    pub training: TrainReport,
    pub coverage: Option<CoverageResult>,
    pub deploy_cost: f64,
    pub fixed_cost: f64,
    pub warnings: Vec<String>,
}

/// An analysis together with the behavior policy it was computed from.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub analysis: DatasetAnalysis,
    pub policy: BehaviorPolicy,
}

pub fn analyze_dataset(
    dataset: &Dataset,
    config: &AnalysisConfig,
) -> Result<DatasetAnalysis, AnalysisError> {
    fit_and_analyze(dataset, config).map(|f| f.analysis)
}

pub fn fit_and_analyze(
    dataset: &Dataset,
    config: &AnalysisConfig,
) -> Result<Fitted, AnalysisError> {
    let mut warnings = Vec::new();
    let discount = config.discount.unwrap_or(dataset.meta().discount);
    let stats = ReturnStats::from_dataset(dataset, Some(discount), config.return_floor)?;
    if stats.floor_from_data {
        warnings.push(format!(
            "no return floor declared; using the observed minimum {} so the ERI denominator depends on in-sample data",
            stats.floor
        ));
    }

    let (policy, training) = behavior::train_behavior_policy(dataset, &config.train)?;
    let profile = behavior::action_stochasticity_profile(&policy, dataset, config.sigma_reduction);
    let eas = behavior::eas(&profile)?;
    if training.observed_action_bounds {
        warnings
            .push("no action ranges declared; actions normalized with observed extremes".into());
    }
    if !training.degenerate_action_dims.is_empty() {
        warnings.push(format!(
            "constant action dimensions {:?} mapped to 0 and left out of EAS",
            training.degenerate_action_dims
        ));
    }

    let coverage = coverage_ratio(dataset);
    match &coverage {
        None => warnings.push("no state ranges declared; coverage diagnostic unavailable".into()),
        Some(c) if !c.clipped_dims.is_empty() => warnings.push(format!(
            "observed states exceed the declared range in dimensions {:?}",
            c.clipped_dims
        )),
        Some(c) if !c.excluded_dims.is_empty() => warnings.push(format!(
            "zero-width declared state dimensions {:?} excluded from coverage",
            c.excluded_dims
        )),
        _ => {}
    }

    let analysis = DatasetAnalysis {
        record: IndicatorRecord {
            name: dataset.name().to_string(),
            eri: stats.eri,
            eas,
            coverage: coverage.as_ref().map(|c| c.ratio),
            tri: None,
            r_algo: None,
        },
        n_transitions: dataset.n_transitions(),
        n_trajectories: dataset.n_trajectories(),
        returns: ReturnSummary {
            discount,
            floor: stats.floor,
            floor_from_data: stats.floor_from_data,
            mean_norm: stats.mean_norm,
            max_norm: stats.max_norm,
            min_raw: stats.min_raw,
        },
        training,
        coverage,
        deploy_cost: dataset.meta().deploy_cost,
        fixed_cost: dataset.meta().fixed_cost,
        warnings,
    };
    Ok(Fitted { analysis, policy })
}

pub fn analyze_path(path: &Path, config: &AnalysisConfig) -> Result<Fitted, AnalysisError> {
    let dataset = load_dataset(path, DatasetFormat::from_path(path))?;
    fit_and_analyze(&dataset, config)
}

/// Analyzes every path with at most `jobs` concurrent training runs.
/// Results keep the input order; one failure does not stop the others.
pub fn analyze_paths(
    paths: &[PathBuf],
    config: &AnalysisConfig,
    jobs: usize,
) -> Vec<Result<Fitted, AnalysisError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| paths.par_iter().map(|p| analyze_path(p, config)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::PolicyArch;
    use crate::dataset::{DatasetMeta, DatasetParts};

    fn quick_config() -> AnalysisConfig {
        AnalysisConfig {
            train: TrainConfig {
                arch: PolicyArch {
                    hidden: vec![8],
                    ..Default::default()
                },
                epochs: 2,
                batch_size: 16,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn dataset(meta: DatasetMeta) -> Dataset {
        Dataset::new(DatasetParts {
            name: "w".into(),
            state_dim: 1,
            action_dim: 2,
            states: (0..6).map(|i| i as f32).collect(),
            actions: vec![0.1, 0.5, 0.2, 0.5, 0.3, 0.5, 0.4, 0.5, 0.5, 0.5, 0.6, 0.5],
            rewards: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            next_states: (1..7).map(|i| i as f32).collect(),
            episode_starts: vec![0, 3],
            meta,
        })
        .unwrap()
    }

    #[test]
    fn warnings_cover_fallbacks() {
        let a = analyze_dataset(&dataset(DatasetMeta::default()), &quick_config()).unwrap();
        let text = a.warnings.join("\n");
        assert!(text.contains("observed minimum"));
        assert!(text.contains("observed extremes"));
        assert!(text.contains("constant action dimensions [1]"));
        assert!(text.contains("coverage diagnostic unavailable"));
        assert_eq!(a.record.eri, (9.0 - 4.5) / 4.5);
        assert!(a.record.coverage.is_none());
        assert!(a.record.eas > 0.0);
    }

    #[test]
    fn floor_override_and_coverage() {
        let meta = DatasetMeta {
            state_min: Some(vec![0.0]),
            state_max: Some(vec![10.0]),
            action_min: Some(vec![-1.0, -1.0]),
            action_max: Some(vec![1.0, 1.0]),
            ..Default::default()
        };
        let mut cfg = quick_config();
        cfg.return_floor = Some(0.0);
        let a = analyze_dataset(&dataset(meta), &cfg).unwrap();
        assert!(a.warnings.is_empty(), "{:?}", a.warnings);
        assert_eq!(a.returns.floor, 0.0);
        assert_eq!(a.record.eri, (15.0 - 10.5) / 10.5);
        assert!((a.record.coverage.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bad_floor_is_a_dataset_error() {
        let mut cfg = quick_config();
        cfg.return_floor = Some(100.0);
        let err = analyze_dataset(&dataset(DatasetMeta::default()), &cfg).unwrap_err();
        assert!(matches!(
            err,
            AnalysisError::Returns(ReturnsError::FloorAboveMinimum { .. })
        ));
    }
}
