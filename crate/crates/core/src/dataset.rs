//! Offline RL datasets: flat transition arrays, trajectory boundaries and
//! the domain-knowledge metadata that goes with them.
//!
//! A [`Dataset`] is validated once at construction and is immutable
//! afterwards, so it can be shared read-only between parallel analyses.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;

/// Half-width of the margin kept between normalized actions and the
/// `tanh` asymptotes.
pub const ACTION_EPS: f64 = 1e-6;

/// Per-dataset metadata: declared ranges, deployment costs and the
/// normalization floor for returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_max: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_max: Option<Vec<f64>>,
    /// Lower bound on trajectory returns. When absent, the observed minimum
    /// return of the dataset is used instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_floor: Option<f64>,
    /// Task-specific deployment cost.
    #[serde(default)]
    pub deploy_cost: f64,
    /// Fixed development cost incurred by every selected dataset.
    #[serde(default)]
    pub fixed_cost: f64,
    #[serde(default = "default_discount")]
    pub discount: f64,
}

fn default_discount() -> f64 {
    1.0
}

impl Default for DatasetMeta {
    fn default() -> Self {
        Self {
            state_min: None,
            state_max: None,
            action_min: None,
            action_max: None,
            return_floor: None,
            deploy_cost: 0.0,
            fixed_cost: 0.0,
            discount: default_discount(),
        }
    }
}

impl DatasetMeta {
    /// Declared state ranges, if both ends are present.
    pub fn state_range(&self) -> Option<(&[f64], &[f64])> {
        match (&self.state_min, &self.state_max) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => None,
        }
    }

    /// Declared action ranges, if both ends are present.
    pub fn action_range(&self) -> Option<(&[f64], &[f64])> {
        match (&self.action_min, &self.action_max) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => None,
        }
    }

    pub fn validate(&self, state_dim: usize, action_dim: usize) -> Result<(), DatasetError> {
        let meta = |msg: String| DatasetError::InvalidMeta(msg);
        check_range("state", &self.state_min, &self.state_max, state_dim)?;
        check_range("action", &self.action_min, &self.action_max, action_dim)?;
        if let Some(floor) = self.return_floor {
            if !floor.is_finite() {
                return Err(meta(format!("return_floor must be finite, got {floor}")));
            }
        }
        for (label, cost) in [
            ("deploy_cost", self.deploy_cost),
            ("fixed_cost", self.fixed_cost),
        ] {
            if !(cost.is_finite() && cost >= 0.0) {
                return Err(meta(format!("{label} must be finite and >= 0, got {cost}")));
            }
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(meta(format!(
                "discount must lie in (0, 1], got {}",
                self.discount
            )));
        }
        Ok(())
    }
}

fn check_range(
    label: &str,
    lo: &Option<Vec<f64>>,
    hi: &Option<Vec<f64>>,
    dim: usize,
) -> Result<(), DatasetError> {
    let (lo, hi) = match (lo, hi) {
        (None, None) => return Ok(()),
        (Some(lo), Some(hi)) => (lo, hi),
        _ => {
            return Err(DatasetError::InvalidMeta(format!(
                "{label}_min and {label}_max must be given together"
            )))
        }
    };
    for (field, v) in [("min", lo), ("max", hi)] {
        if v.len() != dim {
            return Err(DatasetError::DimensionMismatch {
                field: format!("{label}_{field}"),
                expected: dim,
                found: v.len(),
            });
        }
    }
    for (k, (&a, &b)) in lo.iter().zip(hi).enumerate() {
        if !a.is_finite() || !b.is_finite() {
            return Err(DatasetError::InvalidMeta(format!(
                "{label} range for dimension {k} is not finite"
            )));
        }
        // Zero-width ranges are tolerated here; the consumers flag them.
        if a > b {
            return Err(DatasetError::InvalidMeta(format!(
                "{label}_min[{k}] = {a} exceeds {label}_max[{k}] = {b}"
            )));
        }
    }
    Ok(())
}

/// A validated offline RL dataset.
///
/// Matrices are stored row-major in single precision, matching the on-disk
/// format. All numerical work on them widens to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f32>,
    actions: Vec<f32>,
    rewards: Vec<f32>,
    next_states: Vec<f32>,
    episode_starts: Vec<usize>,
    meta: DatasetMeta,
}

/// Raw arrays used to build a [`Dataset`].
#[derive(Debug, Clone, Default)]
pub struct DatasetParts {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f32>,
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
    pub next_states: Vec<f32>,
    pub episode_starts: Vec<usize>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(parts: DatasetParts) -> Result<Self, DatasetError> {
        let DatasetParts {
            name,
            state_dim,
            action_dim,
            states,
            actions,
            rewards,
            next_states,
            episode_starts,
            meta,
        } = parts;

        if state_dim == 0 {
            return Err(DatasetError::Empty("state_dim must be >= 1"));
        }
        if action_dim == 0 {
            return Err(DatasetError::Empty("action_dim must be >= 1"));
        }
        let n = rewards.len();
        if n == 0 {
            return Err(DatasetError::Empty("dataset has no transitions"));
        }
        for (field, data, width) in [
            ("states", &states, state_dim),
            ("actions", &actions, action_dim),
            ("next_states", &next_states, state_dim),
        ] {
            if data.len() != n * width {
                return Err(DatasetError::DimensionMismatch {
                    field: field.to_string(),
                    expected: n * width,
                    found: data.len(),
                });
            }
        }
        for (field, data, width) in [
            ("states", &states, state_dim),
            ("actions", &actions, action_dim),
            ("rewards", &rewards, 1),
            ("next_states", &next_states, state_dim),
        ] {
            if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    field: field.to_string(),
                    row: pos / width,
                    col: pos % width,
                });
            }
        }
        validate_episode_starts(&episode_starts, n)?;
        meta.validate(state_dim, action_dim)?;

        Ok(Self {
            name,
            state_dim,
            action_dim,
            states,
            actions,
            rewards,
            next_states,
            episode_starts,
            meta,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn n_transitions(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_trajectories(&self) -> usize {
        self.episode_starts.len()
    }

    pub fn states(&self) -> &[f32] {
        &self.states
    }

    pub fn actions(&self) -> &[f32] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f32] {
        &self.rewards
    }

    pub fn next_states(&self) -> &[f32] {
        &self.next_states
    }

    pub fn episode_starts(&self) -> &[usize] {
        &self.episode_starts
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn state(&self, i: usize) -> &[f32] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn action(&self, i: usize) -> &[f32] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    /// Returns a copy with the given metadata, re-validated.
    pub fn with_meta(mut self, meta: DatasetMeta) -> Result<Self, DatasetError> {
        meta.validate(self.state_dim, self.action_dim)?;
        self.meta = meta;
        Ok(self)
    }

    pub fn into_parts(self) -> DatasetParts {
        DatasetParts {
            name: self.name,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            states: self.states,
            actions: self.actions,
            rewards: self.rewards,
            next_states: self.next_states,
            episode_starts: self.episode_starts,
            meta: self.meta,
        }
    }

    /// Half-open row ranges of each trajectory, in order. The ranges are
    /// disjoint and cover `0..n_transitions`.
    pub fn segment_trajectories(&self) -> Vec<Range<usize>> {
        let n = self.n_transitions();
        self.episode_starts
            .iter()
            .enumerate()
            .map(|(k, &start)| {
                let end = self.episode_starts.get(k + 1).copied().unwrap_or(n);
                start..end
            })
            .collect()
    }

    /// Per-dimension action bounds: declared when available, otherwise the
    /// observed extremes. The flag is `true` for the observed fallback.
    pub fn action_bounds(&self) -> (Vec<f64>, Vec<f64>, bool) {
        if let Some((lo, hi)) = self.meta.action_range() {
            return (lo.to_vec(), hi.to_vec(), false);
        }
        let mut lo = vec![f64::INFINITY; self.action_dim];
        let mut hi = vec![f64::NEG_INFINITY; self.action_dim];
        for row in self.actions.chunks_exact(self.action_dim) {
            for (k, &a) in row.iter().enumerate() {
                lo[k] = lo[k].min(a as f64);
                hi[k] = hi[k].max(a as f64);
            }
        }
        (lo, hi, true)
    }

    /// Maps every action dimension affinely from `[min, max]` onto `[-1, 1]`
    /// and clips to `[-1 + ACTION_EPS, 1 - ACTION_EPS]`.
    ///
    /// Degenerate dimensions (`min == max`) map to the constant 0 and are
    /// listed in the result.
    pub fn normalize_actions(&self) -> NormalizedActions {
        let (lo, hi, observed) = self.action_bounds();
        let degenerate: Vec<usize> = (0..self.action_dim).filter(|&k| hi[k] <= lo[k]).collect();
        let bound = 1.0 - ACTION_EPS;
        let values = self
            .actions
            .chunks_exact(self.action_dim)
            .flat_map(|row| {
                let (lo, hi) = (&lo, &hi);
                row.iter().enumerate().map(move |(k, &a)| {
                    if hi[k] <= lo[k] {
                        0.0
                    } else {
                        let mid = 0.5 * (hi[k] + lo[k]);
                        let half = 0.5 * (hi[k] - lo[k]);
                        ((a as f64 - mid) / half).clamp(-bound, bound)
                    }
                })
            })
            .collect();
        NormalizedActions {
            action_dim: self.action_dim,
            values,
            degenerate_dims: degenerate,
            observed_bounds: observed,
        }
    }
}

fn validate_episode_starts(starts: &[usize], n: usize) -> Result<(), DatasetError> {
    match starts.first() {
        None => {
            return Err(DatasetError::EpisodeStarts(
                "episode_starts is empty".into(),
            ))
        }
        Some(&s) if s != 0 => {
            return Err(DatasetError::EpisodeStarts(format!(
                "episode_starts[0] must be 0, got {s}"
            )))
        }
        _ => {}
    }
    for (i, w) in starts.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(DatasetError::EpisodeStarts(format!(
                "episode_starts must be strictly increasing: entry {} = {} follows {}",
                i + 1,
                w[1],
                w[0]
            )));
        }
    }
    if let Some(&last) = starts.last() {
        if last >= n {
            return Err(DatasetError::EpisodeStarts(format!(
                "episode start {last} is out of bounds for {n} transitions"
            )));
        }
    }
    Ok(())
}

/// Actions mapped into the open interval `(-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedActions {
    pub action_dim: usize,
    /// Row-major, `n_transitions x action_dim`.
    pub values: Vec<f64>,
    pub degenerate_dims: Vec<usize>,
    /// Bounds were taken from the observed data rather than metadata.
    pub observed_bounds: bool,
}

impl NormalizedActions {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.action_dim..(i + 1) * self.action_dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small(episode_starts: Vec<usize>, n: usize) -> DatasetParts {
        DatasetParts {
            name: "t".into(),
            state_dim: 1,
            action_dim: 1,
            states: (0..n).map(|i| i as f32).collect(),
            actions: vec![0.0; n],
            rewards: vec![1.0; n],
            next_states: (1..=n).map(|i| i as f32).collect(),
            episode_starts,
            meta: DatasetMeta::default(),
        }
    }

    #[test]
    fn segments_single_episode() {
        let d = Dataset::new(small(vec![0], 5)).unwrap();
        assert_eq!(d.segment_trajectories(), vec![0..5]);
    }

    #[test]
    fn segments_multiple_episodes() {
        let d = Dataset::new(small(vec![0, 2, 3], 6)).unwrap();
        assert_eq!(d.segment_trajectories(), vec![0..2, 2..3, 3..6]);
    }

    #[test]
    fn rejects_bad_episode_starts() {
        for starts in [vec![0, 0, 3], vec![1, 3], vec![0, 4, 2], vec![0, 6], vec![]] {
            let err = Dataset::new(small(starts.clone(), 6)).unwrap_err();
            assert!(
                matches!(err, DatasetError::EpisodeStarts(_)),
                "{starts:?}: {err}"
            );
        }
    }

    #[test]
    fn rejects_non_finite_with_location() {
        let mut parts = small(vec![0], 3);
        parts.rewards[2] = f32::NAN;
        let err = Dataset::new(parts).unwrap_err();
        assert!(err.to_string().contains("non-finite value"));
        assert!(matches!(err, DatasetError::NonFinite { row: 2, .. }));
    }

    #[test]
    fn rejects_length_mismatch() {
        let mut parts = small(vec![0], 3);
        parts.states.pop();
        assert!(matches!(
            Dataset::new(parts).unwrap_err(),
            DatasetError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn rejects_bad_meta() {
        let mut parts = small(vec![0], 3);
        parts.meta.discount = 0.0;
        assert!(Dataset::new(parts).is_err());
        let mut parts = small(vec![0], 3);
        parts.meta.action_min = Some(vec![1.0]);
        parts.meta.action_max = Some(vec![0.0]);
        assert!(Dataset::new(parts).is_err());
        let mut parts = small(vec![0], 3);
        parts.meta.deploy_cost = -1.0;
        assert!(Dataset::new(parts).is_err());
    }

    fn with_actions(actions: Vec<f32>, range: Option<(f64, f64)>) -> Dataset {
        let n = actions.len();
        let mut parts = small(vec![0], n);
        parts.actions = actions;
        if let Some((lo, hi)) = range {
            parts.meta.action_min = Some(vec![lo]);
            parts.meta.action_max = Some(vec![hi]);
        }
        Dataset::new(parts).unwrap()
    }

    #[test]
    fn normalize_boundaries_and_midpoint() {
        let d = with_actions(vec![-2.0, 0.0, 2.0, 1.0], Some((-2.0, 2.0)));
        let n = d.normalize_actions();
        assert_eq!(n.values[0], -1.0 + ACTION_EPS);
        assert_eq!(n.values[1], 0.0);
        assert_eq!(n.values[2], 1.0 - ACTION_EPS);
        assert!((n.values[3] - 0.5).abs() < 1e-12);
        assert!(!n.observed_bounds);
        assert!(n.degenerate_dims.is_empty());
    }

    #[test]
    fn normalize_falls_back_to_observed_range() {
        let d = with_actions(vec![1.0, 3.0, 2.0], None);
        let n = d.normalize_actions();
        assert!(n.observed_bounds);
        assert_eq!(n.values, vec![-1.0 + ACTION_EPS, 1.0 - ACTION_EPS, 0.0]);
    }

    #[test]
    fn normalize_flags_constant_column() {
        let d = with_actions(vec![0.7; 4], None);
        let n = d.normalize_actions();
        assert_eq!(n.values, vec![0.0; 4]);
        assert_eq!(n.degenerate_dims, vec![0]);
    }
}
