use ndarray::{Array1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Layout;
use super::{Batch, BehaviorPolicy, PolicyArch};
use crate::dataset::Dataset;
use crate::error::BehaviorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(config: AdamConfig, n: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: PolicyArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
    /// Log-std produced by the untrained policy.
    pub initial_log_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: PolicyArch::default(),
            epochs: 50,
            batch_size: 256,
            optimizer: AdamConfig::default(),
            seed: 0,
            initial_log_std: -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean mini-batch NLL of each epoch.
    pub epoch_nll: Vec<f64>,
    /// Mean NLL over the full dataset after training.
    pub final_nll: f64,
    pub epochs_run: usize,
    pub seed: u64,
    pub degenerate_action_dims: Vec<usize>,
    /// Action normalization used observed extremes instead of declared ranges.
    pub observed_action_bounds: bool,
}

fn init_params(
    layout: &Layout,
    arch: &PolicyArch,
    initial_log_std: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut params = vec![0.0; layout.n_params()];
    for layer in layout.layers() {
        let bound = 1.0 / (layer.fan_in.max(1) as f64).sqrt();
        for p in &mut params[layer.w..layer.b + layer.fan_out] {
            *p = rng.random_range(-bound..bound);
        }
    }
    let head = &layout.log_std_head;
    let bias = arch.unsquash_log_std(initial_log_std);
    for p in &mut params[head.b..head.b + head.fan_out] {
        *p = bias;
    }
    params
}

fn input_statistics(dataset: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let ds = dataset.state_dim();
    let n = dataset.n_transitions() as f64;
    let mut mean = vec![0.0; ds];
    for row in dataset.states().chunks_exact(ds) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; ds];
    for row in dataset.states().chunks_exact(ds) {
        for k in 0..ds {
            let d = row[k] as f64 - mean[k];
            var[k] += d * d;
        }
    }
    let scale = var
        .into_iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Fits the tanh-Gaussian behavior policy by mini-batch Adam on the mean
/// negative log-likelihood. Deterministic for a fixed seed.
pub fn train_behavior_policy(
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(BehaviorPolicy, TrainReport), BehaviorError> {
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(BehaviorError::Precondition(
            "epochs and batch_size must be >= 1".into(),
        ));
    }
    let lo = config.arch.log_std_min;
    let hi = config.arch.log_std_max;
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less)
        || !(lo..=hi).contains(&config.initial_log_std)
    {
        return Err(BehaviorError::Precondition(format!(
            "initial log-std {} must lie within the clamp range [{lo}, {hi}]",
            config.initial_log_std
        )));
    }
    let n = dataset.n_transitions();
    let normalized = dataset.normalize_actions();

    let mut policy = BehaviorPolicy::zeros(
        dataset.state_dim(),
        dataset.action_dim(),
        config.arch.clone(),
    );
    let (mean, scale) = input_statistics(dataset);
    policy.set_input_scaling(mean, scale);
    policy.degenerate_dims = normalized.degenerate_dims.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    policy.params = init_params(
        &policy.layout,
        &policy.arch,
        config.initial_log_std,
        &mut rng,
    );

    let states: Vec<&[f32]> = (0..n).map(|i| dataset.state(i)).collect();
    let actions: Vec<&[f64]> = (0..n).map(|i| normalized.row(i)).collect();
    let full = Batch::new(&policy, &states, &actions)?;

    let mut optimizer = Adam::new(config.optimizer, policy.n_params());
    let mut grad = vec![0.0; policy.n_params()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_nll = Vec::with_capacity(config.epochs);
    let mut params = std::mem::take(&mut policy.params);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = full.select(idx);
            let loss = policy.nll_gradient_into(&batch, &params, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(BehaviorError::NonFiniteLoss {
                    epoch,
                    step,
                    learning_rate: config.optimizer.learning_rate,
                });
            }
            total += loss * idx.len() as f64;
            optimizer.update(&mut params, &grad);
        }
        epoch_nll.push(total / n as f64);
    }
    policy.params = params;

    let final_nll = (0..n)
        .step_by(4096)
        .map(|start| {
            let idx: Vec<usize> = (start..(start + 4096).min(n)).collect();
            policy.nll(&full.select(&idx)) * idx.len() as f64
        })
        .sum::<f64>()
        / n as f64;

    let report = TrainReport {
        epochs_run: epoch_nll.len(),
        epoch_nll,
        final_nll,
        seed: config.seed,
        degenerate_action_dims: normalized.degenerate_dims,
        observed_action_bounds: normalized.observed_bounds,
    };
    Ok((policy, report))
}

impl Batch {
    fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            inputs: self.inputs.select(Axis(0), idx),
            pre_tanh: self.pre_tanh.select(Axis(0), idx),
            log_jacobian: Array1::from_iter(idx.iter().map(|&i| self.log_jacobian[i])),
        }
    }
}
