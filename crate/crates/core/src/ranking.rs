//! Ranks, the combined offline indicator (COI), Spearman validation against
//! the true relative improvement (TRI), half-split selection and the
//! meta-return payoff.
//!
//! Rank convention throughout: ranks are `0..n`, and the highest indicator
//! value receives rank `n - 1`.

use serde::{Deserialize, Serialize};

use crate::error::RankingError;

/// COI score weight of the ERI rank; the EAS rank has weight 1.
pub const COI_ERI_WEIGHT: usize = 2;

/// Ground-truth relative improvement `(r_algo - mean) / mean`, both on the
/// same floor-normalized scale.
pub fn tri(r_algo_norm: f64, mean_data_norm: f64) -> Result<f64, RankingError> {
    if mean_data_norm == 0.0 {
        return Err(RankingError::ZeroMean);
    }
    Ok((r_algo_norm - mean_data_norm) / mean_data_norm)
}

/// Ranks plus the groups of positions that were tied and resolved by the
/// tie-break rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranks {
    pub ranks: Vec<usize>,
    pub ties: Vec<Vec<usize>>,
}

fn ranks_from_order(order: &[usize]) -> Vec<usize> {
    let mut ranks = vec![0; order.len()];
    for (rank, &i) in order.iter().enumerate() {
        ranks[i] = rank;
    }
    ranks
}

fn tie_groups<T: PartialEq>(order: &[usize], key: impl Fn(usize) -> T) -> Vec<Vec<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && key(order[end]) == key(order[start]) {
            end += 1;
        }
        if end - start > 1 {
            let mut g = order[start..end].to_vec();
            g.sort_unstable();
            groups.push(g);
        }
        start = end;
    }
    groups
}

/// Ascending ranks; exact ties are broken by lexicographic name order.
pub fn rank_values<S: AsRef<str>>(values: &[f64], names: &[S]) -> Result<Ranks, RankingError> {
    if values.len() != names.len() {
        return Err(RankingError::LengthMismatch(values.len(), names.len()));
    }
    if values.is_empty() {
        return Err(RankingError::TooFew {
            needed: 1,
            found: 0,
        });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(RankingError::NonFinite {
            name: names[i].as_ref().to_string(),
            value: values[i],
        });
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .total_cmp(&values[b])
            .then_with(|| names[a].as_ref().cmp(names[b].as_ref()))
            .then(a.cmp(&b))
    });
    Ok(Ranks {
        ties: tie_groups(&order, |i| values[i].to_bits()),
        ranks: ranks_from_order(&order),
    })
}

fn check_permutation(ranks: &[usize]) -> Result<(), RankingError> {
    let n = ranks.len();
    let mut seen = vec![false; n];
    for &r in ranks {
        if r >= n || std::mem::replace(&mut seen[r], true) {
            return Err(RankingError::NotPermutation(n));
        }
    }
    Ok(())
}

/// `2 * eri_rank + eas_rank` for each dataset.
pub fn coi_scores(eri_ranks: &[usize], eas_ranks: &[usize]) -> Vec<usize> {
    eri_ranks
        .iter()
        .zip(eas_ranks)
        .map(|(&e, &s)| COI_ERI_WEIGHT * e + s)
        .collect()
}

/// Ranks of the weighted score `2 * eri_rank + eas_rank`. Equal scores go
/// to the dataset with the higher EAS rank, then by name.
pub fn coi_combine<S: AsRef<str>>(
    eri_ranks: &[usize],
    eas_ranks: &[usize],
    names: &[S],
) -> Result<Ranks, RankingError> {
    if eri_ranks.len() != eas_ranks.len() {
        return Err(RankingError::LengthMismatch(
            eri_ranks.len(),
            eas_ranks.len(),
        ));
    }
    if names.len() != eri_ranks.len() {
        return Err(RankingError::LengthMismatch(eri_ranks.len(), names.len()));
    }
    check_permutation(eri_ranks)?;
    check_permutation(eas_ranks)?;
    let scores = coi_scores(eri_ranks, eas_ranks);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .cmp(&scores[b])
            .then(eas_ranks[a].cmp(&eas_ranks[b]))
            .then_with(|| names[a].as_ref().cmp(names[b].as_ref()))
    });
    Ok(Ranks {
        ties: tie_groups(&order, |i| scores[i]),
        ranks: ranks_from_order(&order),
    })
}

/// Spearman's rho for two tie-free rank permutations:
/// `1 - 6 * sum(d^2) / (n * (n^2 - 1))`.
pub fn spearman_rho(a: &[usize], b: &[usize]) -> Result<f64, RankingError> {
    if a.len() != b.len() {
        return Err(RankingError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(RankingError::TooFew {
            needed: 2,
            found: n,
        });
    }
    check_permutation(a)?;
    check_permutation(b)?;
    let d2: u64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u64;
            d * d
        })
        .sum();
    let n = n as f64;
    Ok(1.0 - 6.0 * d2 as f64 / (n * (n * n - 1.0)))
}

/// Top-half membership: the top half holds the `ceil(n / 2)` highest ranks.
pub fn in_top_half(rank: usize, n: usize) -> bool {
    rank >= n / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSplit {
    /// Whether each dataset's predicted half matches its true half.
    pub correct: Vec<bool>,
    pub hits: usize,
    pub fraction: f64,
    pub top_size: usize,
}

pub fn half_split(predicted: &[usize], truth: &[usize]) -> Result<HalfSplit, RankingError> {
    if predicted.len() != truth.len() {
        return Err(RankingError::LengthMismatch(predicted.len(), truth.len()));
    }
    let n = predicted.len();
    if n == 0 {
        return Err(RankingError::TooFew {
            needed: 1,
            found: 0,
        });
    }
    check_permutation(predicted)?;
    check_permutation(truth)?;
    let correct: Vec<bool> = predicted
        .iter()
        .zip(truth)
        .map(|(&p, &t)| in_top_half(p, n) == in_top_half(t, n))
        .collect();
    let hits = correct.iter().filter(|&&c| c).count();
    Ok(HalfSplit {
        fraction: hits as f64 / n as f64,
        top_size: n - n / 2,
        hits,
        correct,
    })
}

/// `sum_{t=0}^{horizon} discount^t * delta_r - (deploy_cost + fixed_cost)`.
pub fn meta_return(
    delta_r: f64,
    deploy_cost: f64,
    fixed_cost: f64,
    horizon: u32,
    discount: f64,
) -> f64 {
    let mut weight = 1.0;
    let mut total = 0.0;
    for _ in 0..=horizon {
        total += weight * delta_r;
        weight *= discount;
    }
    total - (deploy_cost + fixed_cost)
}

/// Indicator values of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRecord {
    pub name: String,
    pub eri: f64,
    pub eas: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tri: Option<f64>,
    /// Algorithm return in task units, when ground truth was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_algo: Option<f64>,
}

/// Indicator values (or precomputed ranks) for a set of datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankInputs {
    pub names: Vec<String>,
    pub eri: Vec<f64>,
    pub eas: Vec<f64>,
    /// TRI values, when ground truth is known.
    pub tri: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanRow {
    pub eri: f64,
    pub eas: f64,
    pub coi: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieNote {
    pub column: String,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub names: Vec<String>,
    pub eri_ranks: Vec<usize>,
    pub eas_ranks: Vec<usize>,
    pub coi_scores: Vec<usize>,
    pub coi_ranks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tri_ranks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman: Option<SpearmanRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_split: Option<HalfSplit>,
    pub ties: Vec<TieNote>,
}

impl RankInputs {
    pub fn from_records(records: &[IndicatorRecord]) -> Self {
        let tri = records.iter().map(|r| r.tri).collect::<Option<Vec<f64>>>();
        Self {
            names: records.iter().map(|r| r.name.clone()).collect(),
            eri: records.iter().map(|r| r.eri).collect(),
            eas: records.iter().map(|r| r.eas).collect(),
            tri,
        }
    }
}

impl RankTable {
    pub fn build(inputs: &RankInputs) -> Result<Self, RankingError> {
        let names = &inputs.names;
        let n = names.len();
        if n < 2 {
            return Err(RankingError::TooFew {
                needed: 2,
                found: n,
            });
        }
        let mut ties = Vec::new();
        let mut note = |column: &str, r: &Ranks| {
            for g in &r.ties {
                ties.push(TieNote {
                    column: column.to_string(),
                    names: g.iter().map(|&i| names[i].clone()).collect(),
                });
            }
        };
        let eri = rank_values(&inputs.eri, names)?;
        note("eri", &eri);
        let eas = rank_values(&inputs.eas, names)?;
        note("eas", &eas);
        let coi = coi_combine(&eri.ranks, &eas.ranks, names)?;
        note("coi", &coi);
        let tri = match &inputs.tri {
            Some(values) => {
                let r = rank_values(values, names)?;
                note("tri", &r);
                Some(r.ranks)
            }
            None => None,
        };
        let (spearman, half) = match &tri {
            Some(t) => (
                Some(SpearmanRow {
                    eri: spearman_rho(&eri.ranks, t)?,
                    eas: spearman_rho(&eas.ranks, t)?,
                    coi: spearman_rho(&coi.ranks, t)?,
                }),
                Some(half_split(&coi.ranks, t)?),
            ),
            None => (None, None),
        };
        Ok(Self {
            names: names.clone(),
            coi_scores: coi_scores(&eri.ranks, &eas.ranks),
            eri_ranks: eri.ranks,
            eas_ranks: eas.ranks,
            coi_ranks: coi.ranks,
            tri_ranks: tri,
            spearman,
            half_split: half,
            ties,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Spearman coefficients over the datasets flagged in `keep`. Every
    /// column is re-ranked among the kept datasets before correlating.
    pub fn subset_spearman(&self, keep: &[bool]) -> Result<SpearmanRow, RankingError> {
        if keep.len() != self.len() {
            return Err(RankingError::LengthMismatch(keep.len(), self.len()));
        }
        let tri = self.tri_ranks.as_ref().ok_or(RankingError::TooFew {
            needed: 2,
            found: 0,
        })?;
        let names: Vec<&str> = self
            .names
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(n, _)| n.as_str())
            .collect();
        let rerank = |col: &[usize]| -> Result<Vec<usize>, RankingError> {
            let vals: Vec<f64> = col
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(&r, _)| r as f64)
                .collect();
            Ok(rank_values(&vals, &names)?.ranks)
        };
        let t = rerank(tri)?;
        Ok(SpearmanRow {
            eri: spearman_rho(&rerank(&self.eri_ranks)?, &t)?,
            eas: spearman_rho(&rerank(&self.eas_ranks)?, &t)?,
            coi: spearman_rho(&rerank(&self.coi_ranks)?, &t)?,
        })
    }

    /// Dataset indices ordered from the highest COI rank down.
    pub fn by_coi_desc(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.coi_ranks[b].cmp(&self.coi_ranks[a]));
        idx
    }

    /// The `k` datasets with the highest COI ranks, best first.
    pub fn select_top(&self, k: usize) -> Result<Vec<usize>, RankingError> {
        if k > self.len() {
            return Err(RankingError::SelectionTooLarge { k, n: self.len() });
        }
        Ok(self.by_coi_desc().into_iter().take(k).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i:02}")).collect()
    }

    #[test]
    fn tri_examples() {
        assert_eq!(tri(5.0, 5.0).unwrap(), 0.0);
        assert_eq!(tri(10.0, 5.0).unwrap(), 1.0);
        assert!(tri(2.0, 5.0).unwrap() < 0.0);
        assert_eq!(tri(1.0, 0.0), Err(RankingError::ZeroMean));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(
            rank_values(&[0.5, 0.1, 0.9], &names(3)).unwrap().ranks,
            vec![1, 0, 2]
        );
        assert_eq!(rank_values(&[3.0], &names(1)).unwrap().ranks, vec![0]);
        assert!(matches!(
            rank_values(&[1.0, f64::NAN], &names(2)),
            Err(RankingError::NonFinite { .. })
        ));
    }

    #[test]
    fn ties_break_by_name_and_are_reported() {
        let n = vec!["b".to_string(), "a".to_string(), "c".to_string()];
        let r = rank_values(&[1.0, 1.0, 0.0], &n).unwrap();
        assert_eq!(r.ranks, vec![2, 1, 0]);
        assert_eq!(r.ties, vec![vec![0, 1]]);
    }

    #[test]
    fn coi_of_identical_ranks_is_identity() {
        let r = vec![3, 0, 2, 1, 4];
        assert_eq!(coi_combine(&r, &r, &names(5)).unwrap().ranks, r);
    }

    #[test]
    fn coi_score_tie_prefers_higher_eas_rank() {
        // Scores: 2*1+0 = 2 and 2*0+2 = 2.
        let c = coi_combine(&[1, 0, 2], &[0, 2, 1], &names(3)).unwrap();
        assert_eq!(c.ranks, vec![0, 1, 2]);
        assert_eq!(c.ties, vec![vec![0, 1]]);
    }

    #[test]
    fn coi_rejects_bad_input() {
        assert!(matches!(
            coi_combine(&[0, 1], &[0], &names(2)),
            Err(RankingError::LengthMismatch(..))
        ));
        assert!(matches!(
            coi_combine(&[0, 0], &[0, 1], &names(2)),
            Err(RankingError::NotPermutation(2))
        ));
    }

    #[test]
    fn spearman_extremes() {
        let a = vec![0, 1, 2, 3, 4];
        let rev: Vec<usize> = a.iter().rev().copied().collect();
        assert_eq!(spearman_rho(&a, &a).unwrap(), 1.0);
        assert_eq!(spearman_rho(&a, &rev).unwrap(), -1.0);
        assert!(spearman_rho(&[0], &[0]).is_err());
        assert!(spearman_rho(&[0, 1], &[1, 1]).is_err());
        assert!(spearman_rho(&[0, 1], &[0, 1, 2]).is_err());
    }

    #[test]
    fn half_split_examples() {
        let t = vec![0, 1, 2, 3];
        assert_eq!(half_split(&t, &t).unwrap().hits, 4);
        assert_eq!(half_split(&[3, 2, 1, 0], &t).unwrap().hits, 0);
        // Odd n: top half holds ceil(5 / 2) = 3 ranks.
        let h = half_split(&[0, 1, 2, 3, 4], &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(h.top_size, 3);
        assert!(in_top_half(2, 5) && !in_top_half(1, 5));
    }

    #[test]
    fn meta_return_examples() {
        assert_eq!(meta_return(0.0, 2.0, 3.0, 10, 0.9), -5.0);
        assert_eq!(meta_return(1.0, 2.0, 3.0, 9, 1.0), 5.0);
        assert_eq!(meta_return(2.0, 0.0, 0.0, 2, 0.5), 3.5);
    }

    #[test]
    fn table_requires_two_datasets() {
        let inputs = RankInputs {
            names: names(1),
            eri: vec![1.0],
            eas: vec![1.0],
            tri: None,
        };
        let err = RankTable::build(&inputs).unwrap_err();
        assert_eq!(err.to_string(), "ranking requires >= 2 datasets, got 1");
    }

    #[test]
    fn selection_orders_by_coi() {
        let inputs = RankInputs {
            names: names(4),
            eri: vec![0.1, 0.4, 0.3, 0.2],
            eas: vec![0.1, 0.4, 0.3, 0.2],
            tri: None,
        };
        let t = RankTable::build(&inputs).unwrap();
        assert_eq!(t.select_top(2).unwrap(), vec![1, 2]);
        assert_eq!(t.select_top(4).unwrap(), vec![1, 2, 3, 0]);
        assert!(matches!(
            t.select_top(5),
            Err(RankingError::SelectionTooLarge { .. })
        ));
    }
}
