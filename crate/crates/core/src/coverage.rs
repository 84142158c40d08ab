//! Hypercube state-coverage ratio.
//!
//! Diagnostic only: the ratio of the box spanned by observed state extremes
//! to the box spanned by the declared state ranges. It has not been found
//! to correlate with exploration or downstream performance, so it never
//! enters COI.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub observed_min: Vec<f64>,
    pub observed_max: Vec<f64>,
    /// Sum of log side lengths of the observed box.
    pub log_observed_volume: f64,
    /// Sum of log side lengths of the declared box.
    pub log_full_volume: f64,
    pub ratio: f64,
    /// Dimensions with zero declared width, left out of both volumes.
    pub excluded_dims: Vec<usize>,
    /// Dimensions whose observed values left the declared range and were
    /// clipped to it.
    pub clipped_dims: Vec<usize>,
}

/// Observed per-dimension state extremes.
pub fn observed_extremes(dataset: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let ds = dataset.state_dim();
    let mut lo = vec![f64::INFINITY; ds];
    let mut hi = vec![f64::NEG_INFINITY; ds];
    for row in dataset.states().chunks_exact(ds) {
        for (k, &v) in row.iter().enumerate() {
            lo[k] = lo[k].min(v as f64);
            hi[k] = hi[k].max(v as f64);
        }
    }
    (lo, hi)
}

/// `None` when the dataset declares no state ranges.
pub fn coverage_ratio(dataset: &Dataset) -> Option<CoverageResult> {
    let (declared_lo, declared_hi) = dataset.meta().state_range()?;
    let (observed_min, observed_max) = observed_extremes(dataset);
    let mut log_observed = 0.0;
    let mut log_full = 0.0;
    let mut excluded_dims = Vec::new();
    let mut clipped_dims = Vec::new();
    for k in 0..dataset.state_dim() {
        let full = declared_hi[k] - declared_lo[k];
        if full <= 0.0 {
            excluded_dims.push(k);
            continue;
        }
        let lo = observed_min[k].max(declared_lo[k]);
        let hi = observed_max[k].min(declared_hi[k]);
        if lo != observed_min[k] || hi != observed_max[k] {
            clipped_dims.push(k);
        }
        log_observed += (hi - lo).max(0.0).ln();
        log_full += full.ln();
    }
    let ratio = (log_observed - log_full).exp().clamp(0.0, 1.0);
    Some(CoverageResult {
        observed_min,
        observed_max,
        log_observed_volume: log_observed,
        log_full_volume: log_full,
        ratio,
        excluded_dims,
        clipped_dims,
    })
}
