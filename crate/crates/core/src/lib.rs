//! Dataset-quality indicators for offline reinforcement learning.
//!
//! Per dataset: the Estimated Relative Return Improvement ([`returns`]),
//! the Estimated Action Stochasticity from a fitted behavior policy
//! ([`behavior`]), and a state-coverage diagnostic ([`coverage`]). Across
//! datasets: ranks, the Cumulative Optimality Indicator, and validation
//! against a reference ordering ([`ranking`]).

pub mod analysis;
pub mod behavior;
pub mod coverage;
pub mod dataset;
pub mod error;
pub mod io;
pub mod ranking;
pub mod report;
pub mod returns;
pub mod synth;

pub use analysis::{
    analyze_dataset, analyze_path, analyze_paths, fit_and_analyze, AnalysisConfig, DatasetAnalysis,
    Fitted,
};
pub use dataset::{Dataset, DatasetMeta, DatasetParts};
pub use error::{BehaviorError, DatasetError, RankingError, ReturnsError};
pub use ranking::{RankInputs, RankTable};
