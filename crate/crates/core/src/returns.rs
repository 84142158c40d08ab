//! Trajectory returns and the estimated relative return improvement (ERI).

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::ReturnsError;

/// `sum_t discount^t * r_t`, with `t` counted from the start of the
/// trajectory. Accumulates in `f64`.
pub fn discounted_return<I>(rewards: I, discount: f64) -> Result<f64, ReturnsError>
where
    I: IntoIterator,
    I::Item: Into<f64>,
{
    let mut total = 0.0;
    let mut weight = 1.0;
    let mut len = 0usize;
    for r in rewards {
        total += weight * r.into();
        weight *= discount;
        len += 1;
    }
    if len == 0 {
        return Err(ReturnsError::EmptyTrajectory);
    }
    Ok(total)
}

/// Discounted return of every trajectory in `dataset`.
pub fn trajectory_returns(dataset: &Dataset, discount: f64) -> Vec<f64> {
    let rewards = dataset.rewards();
    dataset
        .segment_trajectories()
        .into_iter()
        .map(|range| {
            discounted_return(rewards[range].iter().copied(), discount)
                .expect("segments are non-empty")
        })
        .collect()
}

/// Shifts returns by `floor` so that they are bounded below by zero.
pub fn normalize_returns(returns: &[f64], floor: f64) -> Result<Vec<f64>, ReturnsError> {
    returns
        .iter()
        .enumerate()
        .map(|(trajectory, &value)| {
            let shifted = value - floor;
            if shifted < 0.0 {
                Err(ReturnsError::FloorAboveMinimum {
                    trajectory,
                    value,
                    floor,
                })
            } else {
                Ok(shifted)
            }
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `(max - mean) / mean` over floor-normalized returns.
pub fn eri(normalized: &[f64]) -> Result<f64, ReturnsError> {
    if normalized.is_empty() {
        return Err(ReturnsError::NoTrajectories);
    }
    let mean = mean(normalized);
    if mean <= 0.0 {
        return Err(ReturnsError::Degenerate(mean));
    }
    let max = normalized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((max - mean) / mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub returns: Vec<f64>,
    pub normalized_returns: Vec<f64>,
    pub floor: f64,
    /// The floor is the in-sample minimum because none was declared.
    pub floor_from_data: bool,
    pub mean_norm: f64,
    pub max_norm: f64,
    pub min_raw: f64,
    pub eri: f64,
}

impl ReturnStats {
    /// Builds the statistics from raw returns. Without a declared floor the
    /// observed minimum is used.
    pub fn from_returns(returns: Vec<f64>, floor: Option<f64>) -> Result<Self, ReturnsError> {
        if returns.is_empty() {
            return Err(ReturnsError::NoTrajectories);
        }
        let min_raw = returns.iter().copied().fold(f64::INFINITY, f64::min);
        let (floor, floor_from_data) = match floor {
            Some(f) => (f, false),
            None => (min_raw, true),
        };
        let normalized_returns = normalize_returns(&returns, floor)?;
        let eri = eri(&normalized_returns)?;
        Ok(Self {
            mean_norm: mean(&normalized_returns),
            max_norm: normalized_returns
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
            min_raw,
            eri,
            floor,
            floor_from_data,
            returns,
            normalized_returns,
        })
    }

    /// Uses the dataset's own discount and floor unless overridden.
    pub fn from_dataset(
        dataset: &Dataset,
        discount: Option<f64>,
        floor: Option<f64>,
    ) -> Result<Self, ReturnsError> {
        let discount = discount.unwrap_or(dataset.meta().discount);
        let floor = floor.or(dataset.meta().return_floor);
        Self::from_returns(trajectory_returns(dataset, discount), floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetMeta, DatasetParts};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return([1.0, 2.0, 3.0], 1.0).unwrap(), 6.0);
        assert_eq!(discounted_return([1.0, 1.0, 1.0], 0.5).unwrap(), 1.75);
        assert_eq!(discounted_return([5.0], 0.3).unwrap(), 5.0);
        assert_eq!(
            discounted_return(Vec::<f64>::new(), 1.0),
            Err(ReturnsError::EmptyTrajectory)
        );
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize_returns(&[-300.0, -100.0], -350.0).unwrap(),
            vec![50.0, 250.0]
        );
        assert_eq!(
            normalize_returns(&[10.0, 20.0], 0.0).unwrap(),
            vec![10.0, 20.0]
        );
        let err = normalize_returns(&[0.0, -400.0], -350.0).unwrap_err();
        assert!(matches!(
            err,
            ReturnsError::FloorAboveMinimum { trajectory: 1, .. }
        ));
        assert!(err.to_string().contains("floor above observed minimum"));
    }

    #[test]
    fn eri_examples() {
        assert_eq!(eri(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(eri(&[10.0, 10.0, 40.0]).unwrap(), 1.0);
        assert!(matches!(eri(&[0.0, 0.0]), Err(ReturnsError::Degenerate(_))));
    }

    /// Max and mean in one pass, written independently of `eri`.
    fn eri_oracle(xs: &[f64]) -> f64 {
        let (mut max, mut sum) = (xs[0], 0.0);
        for &x in xs {
            if x > max {
                max = x;
            }
            sum += x;
        }
        let mean = sum / xs.len() as f64;
        (max - mean) / mean
    }

    #[test]
    fn eri_matches_single_pass_oracle_on_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let returns: Vec<f64> = (0..1000)
            .map(|_| {
                if rng.random_bool(0.3) {
                    rng.random_range(200.0..400.0)
                } else {
                    rng.random_range(10.0..60.0)
                }
            })
            .collect();
        let got = eri(&returns).unwrap();
        let want = eri_oracle(&returns);
        assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
    }

    #[test]
    fn stats_fall_back_to_observed_floor() {
        let s = ReturnStats::from_returns(vec![-5.0, 5.0, 15.0], None).unwrap();
        assert!(s.floor_from_data);
        assert_eq!(s.floor, -5.0);
        assert_eq!(s.normalized_returns, vec![0.0, 10.0, 20.0]);
        assert_eq!(s.mean_norm, 10.0);
        assert_eq!(s.eri, 1.0);
    }

    #[test]
    fn stats_from_dataset_uses_meta() {
        let d = Dataset::new(DatasetParts {
            name: "x".into(),
            state_dim: 1,
            action_dim: 1,
            states: vec![0.0; 5],
            actions: vec![0.0; 5],
            rewards: vec![1.0, 1.0, 2.0, 2.0, 2.0],
            next_states: vec![0.0; 5],
            episode_starts: vec![0, 2],
            meta: DatasetMeta {
                return_floor: Some(0.0),
                discount: 0.5,
                ..Default::default()
            },
        })
        .unwrap();
        let s = ReturnStats::from_dataset(&d, None, None).unwrap();
        assert_eq!(s.returns, vec![1.5, 3.5]);
        assert!(!s.floor_from_data);
        let s = ReturnStats::from_dataset(&d, Some(1.0), Some(-1.0)).unwrap();
        assert_eq!(s.returns, vec![2.0, 6.0]);
        assert_eq!(s.normalized_returns, vec![3.0, 7.0]);
    }

    proptest! {
        #[test]
        fn undiscounted_equals_plain_sum(rs in proptest::collection::vec(-1e3f64..1e3, 1..500)) {
            let got = discounted_return(rs.iter().copied(), 1.0).unwrap();
            let plain: f64 = rs.iter().sum();
            prop_assert!((got - plain).abs() <= 1e-9 * plain.abs().max(1.0));
        }

        #[test]
        fn eri_is_scale_invariant(
            xs in proptest::collection::vec(0.0f64..100.0, 1..50),
            c in 1e-3f64..1e3,
        ) {
            prop_assume!(xs.iter().sum::<f64>() > 1e-6);
            let base = eri(&xs).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            let got = eri(&scaled).unwrap();
            prop_assert!((got - base).abs() <= 1e-9 * base.max(1.0));
        }

        #[test]
        fn reward_shift_with_floor_shift_keeps_eri(
            trajs in proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, 1..20), 1..10),
            shift in -50.0f64..50.0,
        ) {
            // With gamma = 1, adding `shift` to every reward moves a
            // trajectory's return by shift * len, so only equal lengths keep
            // a common floor. Pad every trajectory to the same length.
            let len = trajs.iter().map(Vec::len).max().unwrap();
            let trajs: Vec<Vec<f64>> = trajs.into_iter().map(|mut t| { t.resize(len, 0.0); t }).collect();
            let returns: Vec<f64> = trajs.iter().map(|t| discounted_return(t.iter().copied(), 1.0).unwrap()).collect();
            prop_assume!(returns.iter().sum::<f64>() > 1e-6);
            let base = ReturnStats::from_returns(returns, Some(-1e-9)).unwrap().eri;
            let shifted: Vec<f64> = trajs
                .iter()
                .map(|t| discounted_return(t.iter().map(|r| r + shift), 1.0).unwrap())
                .collect();
            let got = ReturnStats::from_returns(shifted, Some(shift * len as f64 - 1e-9)).unwrap().eri;
            prop_assert!((got - base).abs() <= 1e-6 * base.max(1.0), "{} vs {}", got, base);
        }
    }
}
