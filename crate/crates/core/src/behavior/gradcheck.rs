//! Finite-difference audit of the analytic NLL gradient.
//!
//! Only the loss evaluation is shared with training; the derivative itself
//! comes from central differences.

use serde::{Deserialize, Serialize};

use super::network;
use super::{Batch, BehaviorPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub n_params: usize,
    /// Coordinates compared against the analytic gradient.
    pub n_checked: usize,
    /// Coordinates whose probes straddled a ReLU kink, where the loss is
    /// not differentiable.
    pub n_kinks: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub step: f64,
}

/// Relative error with an absolute floor on the denominator so that two
/// vanishing derivatives compare equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / scale
}

/// Compares every coordinate of [`BehaviorPolicy::nll_gradient`] with a
/// central difference of step `step`.
pub fn check_gradients(policy: &BehaviorPolicy, batch: &Batch, step: f64) -> GradCheckReport {
    let (_, analytic) = policy.nll_gradient(batch);
    let mut params = policy.params().to_vec();
    let pattern = |p: &[f64]| {
        network::activation_pattern(&policy.layout, &policy.arch, p, batch.inputs().view())
    };
    let base_pattern = pattern(&params);

    let mut report = GradCheckReport {
        n_params: params.len(),
        n_checked: 0,
        n_kinks: 0,
        max_rel_error: 0.0,
        worst_index: 0,
        step,
    };
    for i in 0..params.len() {
        let original = params[i];
        params[i] = original + step;
        let plus = policy.nll_with(batch, &params);
        let plus_pattern = pattern(&params);
        params[i] = original - step;
        let minus = policy.nll_with(batch, &params);
        let minus_pattern = pattern(&params);
        params[i] = original;

        if plus_pattern != base_pattern || minus_pattern != base_pattern {
            report.n_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        report.n_checked += 1;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    report
}
