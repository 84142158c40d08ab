//! Tanh-Gaussian behavior cloning and the estimated action stochasticity
//! (EAS).
//!
//! The behavior policy is `a = tanh(N(mu(phi(s)), sigma(phi(s))^2))`, where
//! `phi` is a ReLU MLP shared by the mean head and the log-std head. The fit
//! minimizes the mean negative log-likelihood of the dataset's normalized
//! actions. EAS is the mean of the predicted pre-tanh standard deviations
//! over all dataset states.

mod gradcheck;
mod network;
mod persist;
mod train;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::BehaviorError;

pub use gradcheck::{check_gradients, GradCheckReport};
pub use network::PolicyArch;
pub use persist::{load_policy, save_policy};
pub use train::{train_behavior_policy, AdamConfig, TrainConfig, TrainReport};

use network::Layout;

/// How per-dimension standard deviations are reduced to one value per
/// state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaReduction {
    #[default]
    Mean,
    Max,
}

/// A fitted tanh-Gaussian behavior policy.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorPolicy {
    arch: PolicyArch,
    layout: Layout,
    state_dim: usize,
    action_dim: usize,
    params: Vec<f64>,
    state_mean: Vec<f64>,
    state_scale: Vec<f64>,
    /// Action dimensions that were constant in the training data.
    degenerate_dims: Vec<usize>,
}

impl BehaviorPolicy {
    /// A policy with all parameters zero and identity input scaling.
    pub fn zeros(state_dim: usize, action_dim: usize, arch: PolicyArch) -> Self {
        let layout = Layout::new(state_dim, action_dim, &arch.hidden);
        Self {
            params: vec![0.0; layout.n_params()],
            layout,
            arch,
            state_dim,
            action_dim,
            state_mean: vec![0.0; state_dim],
            state_scale: vec![1.0; state_dim],
            degenerate_dims: Vec::new(),
        }
    }

    pub fn arch(&self) -> &PolicyArch {
        &self.arch
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn n_params(&self) -> usize {
        self.layout.n_params()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn degenerate_dims(&self) -> &[usize] {
        &self.degenerate_dims
    }

    /// Per-feature standardization applied before the first layer.
    pub fn set_input_scaling(&mut self, mean: Vec<f64>, scale: Vec<f64>) {
        assert_eq!(mean.len(), self.state_dim);
        assert_eq!(scale.len(), self.state_dim);
        self.state_mean = mean;
        self.state_scale = scale;
    }

    pub fn input_scaling(&self) -> (&[f64], &[f64]) {
        (&self.state_mean, &self.state_scale)
    }

    /// Flat parameter range (weights then biases) of the mean head.
    pub fn mean_head_range(&self) -> std::ops::Range<usize> {
        self.layout.mean_head.w..self.layout.mean_head.b + self.action_dim
    }

    pub fn log_std_head_range(&self) -> std::ops::Range<usize> {
        self.layout.log_std_head.w..self.layout.log_std_head.b + self.action_dim
    }

    /// Index of the first-layer weight connecting input `input` to unit
    /// `unit`.
    pub fn first_layer_weight_index(&self, input: usize, unit: usize) -> usize {
        let first = self.layout.layers().next().expect("at least one layer");
        first.w + input * first.fan_out + unit
    }

    pub(crate) fn standardize<'a, I>(&self, rows: I, n: usize) -> Array2<f64>
    where
        I: IntoIterator<Item = &'a [f32]>,
    {
        let mut out = Array2::<f64>::zeros((n, self.state_dim));
        for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
            for k in 0..self.state_dim {
                dst[k] = (src[k] as f64 - self.state_mean[k]) / self.state_scale[k];
            }
        }
        out
    }

    /// Predicted `(mu, log_sigma)` for one raw state.
    pub fn predict(&self, state: &[f32]) -> (Vec<f64>, Vec<f64>) {
        let x = self.standardize([state], 1);
        let fwd = network::forward(&self.layout, &self.arch, &self.params, x.view());
        (fwd.mean.row(0).to_vec(), fwd.log_std.row(0).to_vec())
    }

    /// Log density of a normalized action under the policy at `state`.
    pub fn log_prob(&self, state: &[f32], action_norm: &[f64]) -> Result<f64, BehaviorError> {
        if state.len() != self.state_dim || action_norm.len() != self.action_dim {
            return Err(BehaviorError::Precondition(format!(
                "expected state of length {} and action of length {}",
                self.state_dim, self.action_dim
            )));
        }
        let (mean, log_std) = self.predict(state);
        tanh_gaussian_log_prob(&mean, &log_std, action_norm)
    }

    /// Exact gradient of the batch mean NLL with respect to every parameter.
    pub fn nll_gradient(&self, batch: &Batch) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.n_params()];
        let loss = self.nll_gradient_into(batch, &self.params, &mut grad);
        (loss, grad)
    }

    pub(crate) fn nll_gradient_into(&self, batch: &Batch, params: &[f64], grad: &mut [f64]) -> f64 {
        network::loss_and_gradient(
            &self.layout,
            &self.arch,
            params,
            batch.inputs.view(),
            &batch.pre_tanh,
            &batch.log_jacobian,
            grad,
        )
    }

    /// Mean NLL of the batch under `params`.
    pub fn nll_with(&self, batch: &Batch, params: &[f64]) -> f64 {
        let fwd = network::forward(&self.layout, &self.arch, params, batch.inputs.view());
        network::row_nll(&fwd, &batch.pre_tanh, &batch.log_jacobian)
            .mean()
            .unwrap_or(0.0)
    }

    pub fn nll(&self, batch: &Batch) -> f64 {
        self.nll_with(batch, &self.params)
    }
}

/// Log density of the tanh-transformed diagonal Gaussian at `action`.
pub fn tanh_gaussian_log_prob(
    mean: &[f64],
    log_std: &[f64],
    action: &[f64],
) -> Result<f64, BehaviorError> {
    let mut total = 0.0;
    for (k, ((&mu, &ls), &a)) in mean.iter().zip(log_std).zip(action).enumerate() {
        if a.is_nan() || a.abs() >= 1.0 {
            return Err(BehaviorError::ActionOutOfRange { dim: k, value: a });
        }
        let z = (a.atanh() - mu) * (-ls).exp();
        total += -network::HALF_LN_2PI - ls - 0.5 * z * z - (1.0 - a * a).ln();
    }
    Ok(total)
}

/// A set of (state, normalized action) pairs prepared for a policy: states
/// standardized, actions mapped through `atanh`.
#[derive(Debug, Clone)]
pub struct Batch {
    inputs: Array2<f64>,
    pre_tanh: Array2<f64>,
    log_jacobian: Array1<f64>,
}

impl Batch {
    pub fn new(
        policy: &BehaviorPolicy,
        states: &[&[f32]],
        actions_norm: &[&[f64]],
    ) -> Result<Self, BehaviorError> {
        if states.len() != actions_norm.len() || states.is_empty() {
            return Err(BehaviorError::Precondition(format!(
                "batch needs matching non-empty state and action lists, got {} and {}",
                states.len(),
                actions_norm.len()
            )));
        }
        let n = states.len();
        let ad = policy.action_dim;
        if states.iter().any(|s| s.len() != policy.state_dim)
            || actions_norm.iter().any(|a| a.len() != ad)
        {
            return Err(BehaviorError::Precondition(
                "batch row has the wrong width".into(),
            ));
        }
        let inputs = policy.standardize(states.iter().copied(), n);
        let mut pre_tanh = Array2::<f64>::zeros((n, ad));
        let mut log_jacobian = Array1::<f64>::zeros(n);
        for (i, a) in actions_norm.iter().enumerate() {
            for (k, &v) in a.iter().enumerate() {
                if v.is_nan() || v.abs() >= 1.0 {
                    return Err(BehaviorError::ActionOutOfRange { dim: k, value: v });
                }
                pre_tanh[[i, k]] = v.atanh();
                log_jacobian[i] += (1.0 - v * v).ln();
            }
        }
        Ok(Self {
            inputs,
            pre_tanh,
            log_jacobian,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }
}

/// Predicted pre-tanh standard deviation for every state of `dataset`,
/// reduced over action dimensions. Dimensions that were constant during
/// training are left out of the reduction unless every dimension was.
pub fn action_stochasticity_profile(
    policy: &BehaviorPolicy,
    dataset: &Dataset,
    reduction: SigmaReduction,
) -> Vec<f64> {
    const CHUNK: usize = 2048;
    let n = dataset.n_transitions();
    let active: Vec<usize> = (0..policy.action_dim)
        .filter(|k| !policy.degenerate_dims.contains(k))
        .collect();
    let active = if active.is_empty() {
        (0..policy.action_dim).collect()
    } else {
        active
    };
    let mut profile = Vec::with_capacity(n);
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let x = policy.standardize((start..end).map(|i| dataset.state(i)), end - start);
        let fwd = network::forward(&policy.layout, &policy.arch, &policy.params, x.view());
        for row in fwd.log_std.rows() {
            let sigmas = active.iter().map(|&k| row[k].exp());
            let value = match reduction {
                SigmaReduction::Mean => sigmas.sum::<f64>() / active.len() as f64,
                SigmaReduction::Max => sigmas.fold(f64::NEG_INFINITY, f64::max),
            };
            profile.push(value);
        }
    }
    profile
}

/// Arithmetic mean of a stochasticity profile.
pub fn eas(profile: &[f64]) -> Result<f64, BehaviorError> {
    if profile.is_empty() {
        return Err(BehaviorError::EmptyProfile);
    }
    Ok(profile.iter().sum::<f64>() / profile.len() as f64)
}
