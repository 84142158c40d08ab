//! Synthetic datasets with known action stochasticity.
//!
//! Actions are `tanh(mean_fn(s) + sigma * eps)` with standard normal `eps`;
//! states follow a bounded linear-Gaussian rule driven by the actions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetMeta, DatasetParts};
use crate::error::DatasetError;

/// States are clipped to `[-STATE_BOUND, STATE_BOUND]`.
pub const STATE_BOUND: f64 = 3.0;
const STATE_DECAY: f64 = 0.8;
const ACTION_GAIN: f64 = 0.2;
const STATE_NOISE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanFn {
    Zero,
    /// `0.5 * s[k mod state_dim]` for action dimension `k`.
    Linear,
    /// `sin(2 * s[k mod state_dim])`.
    Sinusoidal,
}

impl MeanFn {
    pub fn eval(self, state: &[f64], k: usize) -> f64 {
        let s = state[k % state.len()];
        match self {
            MeanFn::Zero => 0.0,
            MeanFn::Linear => 0.5 * s,
            MeanFn::Sinusoidal => (2.0 * s).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardFn {
    /// `-sum_k (pre_tanh_k - mean_k)^2`: the squared deviation from the
    /// behavior mean.
    ActionQuadratic,
    /// Mean of the state coordinates.
    StateLinear,
}

/// A second behavior policy with its own noise level, chosen per trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub sigma_alt: f64,
    /// Probability that a trajectory uses `sigma_alt`.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub name: Option<String>,
    pub state_dim: usize,
    pub action_dim: usize,
    pub n_trajectories: usize,
    pub trajectory_length: usize,
    pub mean_fn: MeanFn,
    pub sigma_true: f64,
    pub reward_fn: RewardFn,
    pub mixture: Option<Mixture>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            name: None,
            state_dim: 3,
            action_dim: 1,
            n_trajectories: 100,
            trajectory_length: 200,
            mean_fn: MeanFn::Linear,
            sigma_true: 0.3,
            reward_fn: RewardFn::StateLinear,
            mixture: None,
            seed: 0,
        }
    }
}

/// Clamp range of the behavior policy's log-std, which bounds the sigma
/// values a fit can represent.
const SIGMA_RANGE: (f64, f64) = (-5.0, 2.0);

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidMeta(m));
        if self.state_dim == 0
            || self.action_dim == 0
            || self.n_trajectories == 0
            || self.trajectory_length == 0
        {
            return bad("synthetic dimensions and counts must be >= 1".into());
        }
        let (lo, hi) = (SIGMA_RANGE.0.exp(), SIGMA_RANGE.1.exp());
        let mut sigmas = vec![self.sigma_true];
        if let Some(m) = self.mixture {
            if !(0.0..=1.0).contains(&m.fraction) {
                return bad(format!(
                    "mixture fraction {} must lie in [0, 1]",
                    m.fraction
                ));
            }
            sigmas.push(m.sigma_alt);
        }
        for s in sigmas {
            // Tolerate rounding at the floor so `exp(-5)` itself is accepted.
            if !(s >= lo * (1.0 - 1e-12) && s <= hi) {
                return bad(format!("sigma {s} must lie within [{lo:.6}, {hi:.4}]"));
            }
        }
        Ok(())
    }

    pub fn n_transitions(&self) -> usize {
        self.n_trajectories * self.trajectory_length
    }

    fn default_name(&self) -> String {
        format!("synth-sigma{}-seed{}", self.sigma_true, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sigma_true: f64,
    pub mixture: Option<Mixture>,
    /// Standard deviation of the generator's own pre-tanh noise draws.
    pub empirical_pre_tanh_std: f64,
    /// Expected undiscounted trajectory return.
    pub analytic_mean_return: f64,
    /// Number of trajectories generated with `sigma_alt`.
    pub alt_trajectories: usize,
}

pub fn generate(config: &SynthConfig) -> Result<(Dataset, GroundTruth), DatasetError> {
    config.validate()?;
    let (ds, da, len) = (
        config.state_dim,
        config.action_dim,
        config.trajectory_length,
    );
    let n = config.n_transitions();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut parts = DatasetParts {
        name: config.name.clone().unwrap_or_else(|| config.default_name()),
        state_dim: ds,
        action_dim: da,
        states: Vec::with_capacity(n * ds),
        actions: Vec::with_capacity(n * da),
        rewards: Vec::with_capacity(n),
        next_states: Vec::with_capacity(n * ds),
        episode_starts: (0..config.n_trajectories).map(|t| t * len).collect(),
        meta: DatasetMeta {
            state_min: Some(vec![-STATE_BOUND; ds]),
            state_max: Some(vec![STATE_BOUND; ds]),
            action_min: Some(vec![-1.0; da]),
            action_max: Some(vec![1.0; da]),
            return_floor: match config.reward_fn {
                RewardFn::StateLinear => Some(-STATE_BOUND * len as f64),
                RewardFn::ActionQuadratic => None,
            },
            ..Default::default()
        },
    };

    let (mut noise_sum, mut noise_sq) = (0.0, 0.0);
    let mut alt_trajectories = 0;
    let mut state = vec![0.0f64; ds];
    for _ in 0..config.n_trajectories {
        let sigma = match config.mixture {
            Some(m) if rng.random_bool(m.fraction) => {
                alt_trajectories += 1;
                m.sigma_alt
            }
            _ => config.sigma_true,
        };
        for s in state.iter_mut() {
            *s = rng.random_range(-1.0..1.0);
        }
        for _ in 0..len {
            let mut deviation = 0.0;
            let mut action_mean = 0.0;
            parts.states.extend(state.iter().map(|&s| s as f32));
            for k in 0..da {
                let m = config.mean_fn.eval(&state, k);
                let eps: f64 = rng.sample(StandardNormal);
                let noise = sigma * eps;
                noise_sum += noise;
                noise_sq += noise * noise;
                deviation += noise * noise;
                let a = (m + noise).tanh();
                action_mean += a;
                parts.actions.push(a as f32);
            }
            action_mean /= da as f64;
            let reward = match config.reward_fn {
                RewardFn::ActionQuadratic => -deviation,
                RewardFn::StateLinear => state.iter().sum::<f64>() / ds as f64,
            };
            parts.rewards.push(reward as f32);
            for s in state.iter_mut() {
                let xi: f64 = rng.sample(StandardNormal);
                *s = (STATE_DECAY * *s + ACTION_GAIN * action_mean + STATE_NOISE * xi)
                    .clamp(-STATE_BOUND, STATE_BOUND);
            }
            parts.next_states.extend(state.iter().map(|&s| s as f32));
        }
    }

    let draws = (n * da) as f64;
    let noise_mean = noise_sum / draws;
    let empirical_pre_tanh_std = (noise_sq / draws - noise_mean * noise_mean).max(0.0).sqrt();
    let analytic_mean_return = match config.reward_fn {
        RewardFn::ActionQuadratic => {
            let var = match config.mixture {
                Some(m) => {
                    (1.0 - m.fraction) * config.sigma_true.powi(2)
                        + m.fraction * m.sigma_alt.powi(2)
                }
                None => config.sigma_true.powi(2),
            };
            -(da as f64) * var * len as f64
        }
        // The dynamics, the initial state law and every mean function are
        // symmetric under s -> -s, so every state coordinate has mean zero.
        RewardFn::StateLinear => 0.0,
    };

    let truth = GroundTruth {
        sigma_true: config.sigma_true,
        mixture: config.mixture,
        empirical_pre_tanh_std,
        analytic_mean_return,
        alt_trajectories,
    };
    Ok((Dataset::new(parts)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::returns::trajectory_returns;

    fn config(sigma: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            sigma_true: sigma,
            seed,
            n_trajectories: 100,
            trajectory_length: 200,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (a, _) = generate(&config(0.3, 9)).unwrap();
        let (b, _) = generate(&config(0.3, 9)).unwrap();
        assert_eq!(a, b);
        crate::io::save_portable(&a, &dir.path().join("a.json")).unwrap();
        crate::io::save_portable(&b, &dir.path().join("b.json")).unwrap();
        let ba = std::fs::read(dir.path().join("a.bin")).unwrap();
        let bb = std::fs::read(dir.path().join("b.bin")).unwrap();
        assert_eq!(ba, bb);
        let (c, _) = generate(&config(0.3, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_noise_std_matches_sigma() {
        for sigma in [0.1, 0.3, 0.6] {
            let (d, truth) = generate(&config(sigma, 1)).unwrap();
            assert_eq!(d.n_transitions(), 20_000);
            let rel = (truth.empirical_pre_tanh_std - sigma).abs() / sigma;
            assert!(
                rel < 0.02,
                "sigma {sigma}: empirical {}",
                truth.empirical_pre_tanh_std
            );
        }
    }

    #[test]
    fn output_passes_validation_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            state_dim: 4,
            action_dim: 2,
            mean_fn: MeanFn::Sinusoidal,
            reward_fn: RewardFn::ActionQuadratic,
            n_trajectories: 5,
            trajectory_length: 7,
            ..Default::default()
        };
        let (d, _) = generate(&cfg).unwrap();
        assert_eq!(d.segment_trajectories().len(), 5);
        let path = dir.path().join("s.json");
        crate::io::save_portable(&d, &path).unwrap();
        assert_eq!(crate::io::load_portable(&path).unwrap(), d);
        let csv = dir.path().join("s.csv");
        crate::io::save_csv(&d, &csv).unwrap();
        assert_eq!(crate::io::load_csv(&csv).unwrap(), d);
    }

    #[test]
    fn action_quadratic_mean_return_is_analytic() {
        let cfg = SynthConfig {
            reward_fn: RewardFn::ActionQuadratic,
            action_dim: 2,
            n_trajectories: 400,
            trajectory_length: 50,
            sigma_true: 0.5,
            ..Default::default()
        };
        let (d, truth) = generate(&cfg).unwrap();
        let returns = trajectory_returns(&d, 1.0);
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        assert!((truth.analytic_mean_return - (-25.0)).abs() < 1e-12);
        // Standard error of the mean is about 0.25 here.
        assert!((mean - truth.analytic_mean_return).abs() < 1.5, "{mean}");
    }

    #[test]
    fn state_linear_mean_return_is_near_zero() {
        let (d, truth) = generate(&config(0.3, 4)).unwrap();
        let returns = trajectory_returns(&d, 1.0);
        let m = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / m;
        let sd = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        assert_eq!(truth.analytic_mean_return, 0.0);
        assert!(mean.abs() < 4.0 * sd / m.sqrt(), "mean {mean}, sd {sd}");
        assert_eq!(d.meta().return_floor, Some(-600.0));
    }

    #[test]
    fn rejects_invalid_configs() {
        for cfg in [
            SynthConfig {
                sigma_true: 0.0,
                ..Default::default()
            },
            SynthConfig {
                sigma_true: 10.0,
                ..Default::default()
            },
            SynthConfig {
                state_dim: 0,
                ..Default::default()
            },
            SynthConfig {
                mixture: Some(Mixture {
                    sigma_alt: 0.2,
                    fraction: 1.5,
                }),
                ..Default::default()
            },
        ] {
            assert!(generate(&cfg).is_err(), "{cfg:?}");
        }
        let floor = SynthConfig {
            sigma_true: (-5f64).exp(),
            ..Default::default()
        };
        assert!(floor.validate().is_ok());
    }

    #[test]
    fn mixture_assigns_alternate_policy() {
        let cfg = SynthConfig {
            mixture: Some(Mixture {
                sigma_alt: 0.6,
                fraction: 0.5,
            }),
            sigma_true: 0.1,
            ..Default::default()
        };
        let (_, truth) = generate(&cfg).unwrap();
        assert!(truth.alt_trajectories > 30 && truth.alt_trajectories < 70);
        assert!(truth.empirical_pre_tanh_std > 0.1 && truth.empirical_pre_tanh_std < 0.6);
    }
}
