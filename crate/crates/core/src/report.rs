//! Analysis reports, ground-truth and fixture files, and rank-table
//! rendering (text, CSV, JSON).

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AnalysisConfig, AnalysisError, DatasetAnalysis};
use crate::error::RankingError;
use crate::ranking::{self, meta_return, RankInputs, RankTable, SpearmanRow, TieNote};

pub const RANK_CONVENTION: &str =
    "ranks run 0..n-1; the highest indicator value gets rank n-1 (higher is better)";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed {kind} file: {message}")]
    Parse { kind: &'static str, message: String },
    #[error("ground truth does not match the report: missing {missing:?}, unknown {unknown:?}")]
    GroundTruthMismatch {
        missing: Vec<String>,
        unknown: Vec<String>,
    },
    #[error(transparent)]
    Ranking(#[from] RankingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Ok { analysis: Box<DatasetAnalysis> },
    Error { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub source: String,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tool_version: String,
    pub generated_at: String,
    pub config: AnalysisConfig,
    pub conventions: Vec<String>,
    pub datasets: Vec<DatasetEntry>,
}

impl AnalysisReport {
    pub fn new(
        config: AnalysisConfig,
        generated_at: String,
        results: Vec<(String, Result<DatasetAnalysis, AnalysisError>)>,
    ) -> Self {
        let datasets = results
            .into_iter()
            .map(|(source, r)| DatasetEntry {
                source,
                outcome: match r {
                    Ok(a) => Outcome::Ok {
                        analysis: Box::new(a),
                    },
                    Err(e) => Outcome::Error {
                        error: e.to_string(),
                    },
                },
            })
            .collect();
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            generated_at,
            config,
            conventions: vec![
                RANK_CONVENTION.to_string(),
                "EAS is the mean predicted pre-tanh standard deviation in normalized action space".into(),
                "coverage is a diagnostic only (found uncorrelated with performance) and never enters COI".into(),
                "COI ranks the score 2*rank(ERI) + rank(EAS); equal scores favor the higher EAS rank".into(),
            ],
            datasets,
        }
    }

    pub fn analyses(&self) -> impl Iterator<Item = &DatasetAnalysis> {
        self.datasets.iter().filter_map(|d| match &d.outcome {
            Outcome::Ok { analysis } => Some(analysis.as_ref()),
            Outcome::Error { .. } => None,
        })
    }

    pub fn n_failed(&self) -> usize {
        self.datasets
            .iter()
            .filter(|d| matches!(d.outcome, Outcome::Error { .. }))
            .count()
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        serde_json::from_str(text).map_err(|e| ReportError::Parse {
            kind: "report",
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Indicator values of the successful analyses, with TRI filled in from
    /// `ground_truth` when given. Ground-truth returns are in raw task units
    /// and are shifted by each dataset's floor.
    pub fn rank_inputs(
        &self,
        ground_truth: Option<&[GroundTruthRow]>,
    ) -> Result<RankInputs, ReportError> {
        let analyses: Vec<&DatasetAnalysis> = self.analyses().collect();
        let names: Vec<String> = analyses.iter().map(|a| a.record.name.clone()).collect();
        let tri = match ground_truth {
            None => None,
            Some(rows) => {
                let lookup: HashMap<&str, f64> =
                    rows.iter().map(|r| (r.name.as_str(), r.r_algo)).collect();
                let known: BTreeSet<&str> = names.iter().map(String::as_str).collect();
                let missing: Vec<String> = names
                    .iter()
                    .filter(|n| !lookup.contains_key(n.as_str()))
                    .cloned()
                    .collect();
                let unknown: Vec<String> = rows
                    .iter()
                    .filter(|r| !known.contains(r.name.as_str()))
                    .map(|r| r.name.clone())
                    .collect();
                if !missing.is_empty() || !unknown.is_empty() {
                    return Err(ReportError::GroundTruthMismatch { missing, unknown });
                }
                let values = analyses
                    .iter()
                    .map(|a| {
                        let r_algo = lookup[a.record.name.as_str()];
                        ranking::tri(r_algo - a.returns.floor, a.returns.mean_norm)
                    })
                    .collect::<Result<Vec<f64>, _>>()?;
                Some(values)
            }
        };
        Ok(RankInputs {
            names,
            eri: analyses.iter().map(|a| a.record.eri).collect(),
            eas: analyses.iter().map(|a| a.record.eas).collect(),
            tri,
        })
    }
}

impl AnalysisReport {
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => self.to_json(),
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Text => self.to_text(),
        }
    }

    fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "name",
            "source",
            "status",
            "eri",
            "eas",
            "coverage",
            "return_floor",
            "floor_from_data",
            "mean_norm",
            "max_norm",
            "n_transitions",
            "n_trajectories",
            "final_nll",
            "error",
        ])
        .expect("in-memory");
        for d in &self.datasets {
            let record: Vec<String> = match &d.outcome {
                Outcome::Ok { analysis: a } => vec![
                    a.record.name.clone(),
                    d.source.clone(),
                    "ok".into(),
                    a.record.eri.to_string(),
                    a.record.eas.to_string(),
                    a.record.coverage.map(|c| c.to_string()).unwrap_or_default(),
                    a.returns.floor.to_string(),
                    a.returns.floor_from_data.to_string(),
                    a.returns.mean_norm.to_string(),
                    a.returns.max_norm.to_string(),
                    a.n_transitions.to_string(),
                    a.n_trajectories.to_string(),
                    a.training.final_nll.to_string(),
                    String::new(),
                ],
                Outcome::Error { error } => {
                    let mut r = vec![String::new(), d.source.clone(), "error".into()];
                    r.extend(vec![String::new(); 10]);
                    r.push(error.clone());
                    r
                }
            };
            w.write_record(&record).expect("in-memory");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    fn to_text(&self) -> String {
        let analyses: Vec<&DatasetAnalysis> = self.analyses().collect();
        let width = analyses
            .iter()
            .map(|a| a.record.name.len())
            .max()
            .unwrap_or(7)
            .max(7);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>10}  {:>10}  {:>12}",
            "dataset", "ERI", "EAS", "return floor"
        );
        for a in &analyses {
            let mark = if a.returns.floor_from_data { "*" } else { "" };
            let _ = writeln!(
                out,
                "{:<width$}  {:>10.4}  {:>10.4}  {:>12}",
                a.record.name,
                a.record.eri,
                a.record.eas,
                format!("{:.4}{mark}", a.returns.floor)
            );
        }
        if analyses.iter().any(|a| a.returns.floor_from_data) {
            let _ = writeln!(out, "* floor taken from the observed minimum return");
        }
        let _ = writeln!(
            out,
            "\ndiagnostics (state coverage; not correlated with exploration or performance, never part of COI)"
        );
        for a in &analyses {
            let coverage = match &a.coverage {
                Some(c) => format!("{:.4}", c.ratio),
                None => "unavailable (no declared state ranges)".into(),
            };
            let _ = writeln!(out, "{:<width$}  coverage {coverage}", a.record.name);
        }
        for d in &self.datasets {
            if let Outcome::Error { error } = &d.outcome {
                let _ = writeln!(out, "failed: {}: {error}", d.source);
            }
        }
        if analyses.len() >= 2 {
            let inputs = self.rank_inputs(None).expect("no ground truth involved");
            if let Ok(table) = RankTable::build(&inputs) {
                out.push('\n');
                out.push_str(&RankView::new(table).render(OutputFormat::Text));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub name: String,
    pub r_algo: f64,
}

fn read_file(path: &Path) -> Result<String, ReportError> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| ReportError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    Ok(text)
}

fn parse_csv<T: for<'de> Deserialize<'de>>(
    text: &str,
    kind: &'static str,
) -> Result<Vec<T>, ReportError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| ReportError::Parse {
            kind,
            message: e.to_string(),
        })
}

/// CSV `name,r_algo`.
pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruthRow>, ReportError> {
    let rows: Vec<GroundTruthRow> = parse_csv(text, "ground-truth")?;
    if let Some(r) = rows.iter().find(|r| !r.r_algo.is_finite()) {
        return Err(ReportError::Parse {
            kind: "ground-truth",
            message: format!("r_algo for {} is not finite", r.name),
        });
    }
    Ok(rows)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthRow>, ReportError> {
    parse_ground_truth(&read_file(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRow {
    pub name: String,
    pub eri_rank: usize,
    pub eas_rank: usize,
    #[serde(default)]
    pub tri_rank: Option<usize>,
}

/// CSV `name,eri_rank,eas_rank[,tri_rank]`: precomputed ranks that bypass
/// training. TRI is used only if every row has it.
pub fn parse_fixtures(text: &str) -> Result<RankInputs, ReportError> {
    let rows: Vec<FixtureRow> = parse_csv(text, "fixtures")?;
    Ok(fixture_inputs(&rows))
}

pub fn fixture_inputs(rows: &[FixtureRow]) -> RankInputs {
    RankInputs {
        names: rows.iter().map(|r| r.name.clone()).collect(),
        eri: rows.iter().map(|r| r.eri_rank as f64).collect(),
        eas: rows.iter().map(|r| r.eas_rank as f64).collect(),
        tri: rows.iter().map(|r| r.tri_rank.map(|t| t as f64)).collect(),
    }
}

pub fn read_fixtures(path: &Path) -> Result<RankInputs, ReportError> {
    parse_fixtures(&read_file(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSpearman {
    pub label: String,
    #[serde(flatten)]
    pub rho: SpearmanRow,
}

/// A rank table with any extra subset correlation rows, as rendered by the
/// `rank` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankView {
    pub convention: String,
    pub table: RankTable,
    pub subsets: Vec<LabeledSpearman>,
}

impl RankView {
    pub fn new(table: RankTable) -> Self {
        Self {
            convention: RANK_CONVENTION.to_string(),
            table,
            subsets: Vec::new(),
        }
    }

    /// Adds the Spearman row computed without datasets whose name starts
    /// with `prefix`.
    pub fn exclude_prefix(&mut self, prefix: &str) -> Result<(), ReportError> {
        let keep: Vec<bool> = self
            .table
            .names
            .iter()
            .map(|n| !n.starts_with(prefix))
            .collect();
        let rho = self.table.subset_spearman(&keep)?;
        self.subsets.push(LabeledSpearman {
            label: format!("without '{prefix}*' (remaining datasets re-ranked)"),
            rho,
        });
        Ok(())
    }

    /// Row order for display: by TRI rank when known, else by COI rank,
    /// best first.
    fn display_order(&self) -> Vec<usize> {
        let t = &self.table;
        let key = t.tri_ranks.as_ref().unwrap_or(&t.coi_ranks);
        let mut idx: Vec<usize> = (0..t.len()).collect();
        idx.sort_by(|&a, &b| key[b].cmp(&key[a]));
        idx
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => serde_json::to_string_pretty(self).expect("serializes"),
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Text => self.to_text(),
        }
    }

    fn to_csv(&self) -> String {
        let t = &self.table;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "name",
            "eri_rank",
            "eas_rank",
            "coi_score",
            "coi_rank",
            "tri_rank",
            "coi_half_correct",
        ])
        .expect("in-memory");
        for i in self.display_order() {
            let tri = t
                .tri_ranks
                .as_ref()
                .map(|r| r[i].to_string())
                .unwrap_or_default();
            let half = t
                .half_split
                .as_ref()
                .map(|h| h.correct[i].to_string())
                .unwrap_or_default();
            w.write_record([
                t.names[i].clone(),
                t.eri_ranks[i].to_string(),
                t.eas_ranks[i].to_string(),
                t.coi_scores[i].to_string(),
                t.coi_ranks[i].to_string(),
                tri,
                half,
            ])
            .expect("in-memory");
        }
        let mut out = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
        if let Some(rho) = &t.spearman {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["statistic", "eri", "eas", "coi"])
                .expect("in-memory");
            let rows = std::iter::once(("spearman_rho_to_tri".to_string(), rho)).chain(
                self.subsets
                    .iter()
                    .map(|s| (format!("spearman_rho_to_tri {}", s.label), &s.rho)),
            );
            for (label, r) in rows {
                w.write_record([
                    label,
                    r.eri.to_string(),
                    r.eas.to_string(),
                    r.coi.to_string(),
                ])
                .expect("in-memory");
            }
            out.push('\n');
            out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"));
        }
        out
    }

    fn to_text(&self) -> String {
        let t = &self.table;
        let width = t.names.iter().map(|n| n.len()).max().unwrap_or(7).max(7);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>4}  {:>4}  {:>5}  {:>4}",
            "dataset", "ERI", "EAS", "COI", "TRI"
        );
        let mut printed_split = false;
        for i in self.display_order() {
            let tri = t.tri_ranks.as_ref().map(|r| r[i]);
            if let Some(tr) = tri {
                if !printed_split && !ranking::in_top_half(tr, t.len()) {
                    let _ = writeln!(out, "{}", "-".repeat(width + 25));
                    printed_split = true;
                }
            }
            let mark = match &t.half_split {
                Some(h) if h.correct[i] => "*",
                _ => " ",
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:>4}  {:>4}  {:>4}{}  {:>4}",
                t.names[i],
                t.eri_ranks[i],
                t.eas_ranks[i],
                t.coi_ranks[i],
                mark,
                tri.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            );
        }
        if let Some(rho) = &t.spearman {
            let _ = writeln!(
                out,
                "\nSpearman rho to TRI: ERI {:.2}  EAS {:.2}  COI {:.2}",
                rho.eri, rho.eas, rho.coi
            );
            for s in &self.subsets {
                let _ = writeln!(
                    out,
                    "  {}: ERI {:.2}  EAS {:.2}  COI {:.2}",
                    s.label, s.rho.eri, s.rho.eas, s.rho.coi
                );
            }
        }
        if let Some(h) = &t.half_split {
            let _ = writeln!(
                out,
                "COI places {}/{} datasets in the correct TRI half (* marks correct)",
                h.hits,
                t.len()
            );
        }
        for tie in &t.ties {
            let _ = writeln!(out, "note: {}", tie_message(tie));
        }
        let _ = writeln!(out, "convention: {}", self.convention);
        out
    }
}

pub fn tie_message(tie: &TieNote) -> String {
    let names = tie.names.join(", ");
    if tie.column == "coi" {
        format!("equal COI scores for {names}; ordered by EAS rank")
    } else {
        format!(
            "tied {} values for {names}; ordered by name",
            tie.column.to_uppercase()
        )
    }
}

/// Assumed improvement per deployment step used for payoff annotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaRModel {
    /// The same absolute improvement for every dataset.
    Constant(f64),
    /// The given fraction of the gap between the best and the mean
    /// normalized trajectory return.
    GapFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub horizon: u32,
    pub discount: f64,
    pub delta_r: DeltaRModel,
    /// Replaces every dataset's fixed cost when set.
    pub fixed_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub name: String,
    pub coi_rank: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tri_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta_return: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub selected: Vec<SelectionEntry>,
    pub n_candidates: usize,
}

/// Per-dataset payoff inputs, keyed by name.
#[derive(Debug, Clone, Default)]
pub struct PayoffInputs {
    pub deploy_cost: HashMap<String, f64>,
    pub fixed_cost: HashMap<String, f64>,
    /// `max_norm - mean_norm` of each dataset.
    pub return_gap: HashMap<String, f64>,
}

impl PayoffInputs {
    pub fn from_report(report: &AnalysisReport) -> Self {
        let mut p = Self::default();
        for a in report.analyses() {
            let name = a.record.name.clone();
            p.deploy_cost.insert(name.clone(), a.deploy_cost);
            p.fixed_cost.insert(name.clone(), a.fixed_cost);
            p.return_gap
                .insert(name, a.returns.max_norm - a.returns.mean_norm);
        }
        p
    }
}

/// Top `k` datasets by COI rank, optionally annotated with the meta-return
/// under `costs`. Without `k`, a cost model selects every dataset with a
/// non-negative meta-return, in COI order.
pub fn select(
    table: &RankTable,
    k: Option<usize>,
    costs: Option<(&CostModel, &PayoffInputs)>,
) -> Result<Selection, ReportError> {
    let order = match k {
        Some(k) => table.select_top(k)?,
        None => table.by_coi_desc(),
    };
    let mut selected = Vec::new();
    for i in order {
        let name = &table.names[i];
        let (delta_r, payoff) = match costs {
            Some((model, inputs)) => {
                let delta = match model.delta_r {
                    DeltaRModel::Constant(v) => Some(v),
                    DeltaRModel::GapFraction(f) => inputs.return_gap.get(name).map(|g| f * g),
                };
                let payoff = delta.map(|d| {
                    meta_return(
                        d,
                        inputs.deploy_cost.get(name).copied().unwrap_or(0.0),
                        model
                            .fixed_cost
                            .or_else(|| inputs.fixed_cost.get(name).copied())
                            .unwrap_or(0.0),
                        model.horizon,
                        model.discount,
                    )
                });
                (delta, payoff)
            }
            None => (None, None),
        };
        if k.is_none() && payoff.is_some_and(|p| p < 0.0) {
            continue;
        }
        selected.push(SelectionEntry {
            name: name.clone(),
            coi_rank: table.coi_ranks[i],
            tri_rank: table.tri_ranks.as_ref().map(|t| t[i]),
            delta_r,
            meta_return: payoff,
        });
    }
    Ok(Selection {
        selected,
        n_candidates: table.len(),
    })
}

impl Selection {
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => serde_json::to_string_pretty(self).expect("serializes"),
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["name", "coi_rank", "tri_rank", "delta_r", "meta_return"])
                    .expect("in-memory");
                for e in &self.selected {
                    let opt = |v: Option<String>| v.unwrap_or_default();
                    w.write_record([
                        e.name.clone(),
                        e.coi_rank.to_string(),
                        opt(e.tri_rank.map(|v| v.to_string())),
                        opt(e.delta_r.map(|v| v.to_string())),
                        opt(e.meta_return.map(|v| v.to_string())),
                    ])
                    .expect("in-memory");
                }
                String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
            }
            OutputFormat::Text => {
                let mut out = format!(
                    "selected {} of {} datasets (best COI first)\n",
                    self.selected.len(),
                    self.n_candidates
                );
                for (pos, e) in self.selected.iter().enumerate() {
                    let _ = write!(out, "{:>3}. {}  (COI rank {}", pos + 1, e.name, e.coi_rank);
                    if let Some(t) = e.tri_rank {
                        let _ = write!(out, ", TRI rank {t}");
                    }
                    if let Some(m) = e.meta_return {
                        let _ = write!(out, ", meta-return {m:.4}");
                    }
                    out.push_str(")\n");
                }
                out
            }
        }
    }
}
