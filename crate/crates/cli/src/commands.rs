use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dsq_core::analysis::analyze_paths;
use dsq_core::behavior::{
    check_gradients, load_policy, save_policy, train_behavior_policy, Batch, BehaviorPolicy,
    PolicyArch, TrainConfig,
};
use dsq_core::io::{load_dataset, save_csv, save_portable, DatasetFormat};
use dsq_core::ranking::{RankInputs, RankTable};
use dsq_core::report::{
    self, AnalysisReport, CostModel, DeltaRModel, Outcome, OutputFormat, PayoffInputs, RankView,
};
use dsq_core::synth::{self, Mixture, SynthConfig};
use dsq_core::Dataset;
use serde::Serialize;

use crate::args::{
    AnalyzeArgs, CheckGradientsArgs, DeltaModel, Format, GenSynthArgs, OutputArgs, RankArgs,
    SelectArgs, SourceArgs,
};
use crate::config;

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Partial,
    Failed,
}

/// Writes to stdout; a closed pipe on the reading side is not an error.
fn print_stdout(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    let newline: &[u8] = if text.ends_with('\n') { b"" } else { b"\n" };
    match stdout
        .write_all(text.as_bytes())
        .and_then(|_| stdout.write_all(newline))
        .and_then(|_| stdout.flush())
    {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e).context("writing to stdout"),
        _ => Ok(()),
    }
}

fn emit(out: &OutputArgs, text: &str) -> Result<()> {
    match &out.output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => print_stdout(text),
    }
}

fn format_of(out: &OutputArgs) -> OutputFormat {
    out.format.unwrap_or(Format::Text).into()
}

fn timestamp(pinned: Option<&str>) -> Result<String> {
    match pinned {
        Some(ts) => {
            chrono::DateTime::parse_from_rfc3339(ts)
                .with_context(|| format!("--pin-timestamp '{ts}' is not an RFC 3339 timestamp"))?;
            Ok(ts.to_string())
        }
        None => Ok(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
    }
}

pub fn analyze(args: &AnalyzeArgs) -> Result<Status> {
    let resolved = config::resolve(args)?;
    let generated_at = timestamp(args.pin_timestamp.as_deref())?;
    let results = analyze_paths(&args.paths, &resolved.analysis, resolved.jobs);

    if let Some(dir) = &args.save_policies {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for fitted in results.iter().flatten() {
            let path = dir.join(format!("{}.policy.json", fitted.analysis.record.name));
            save_policy(&fitted.policy, &path)
                .with_context(|| format!("saving {}", path.display()))?;
        }
    }

    let entries = args
        .paths
        .iter()
        .zip(results)
        .map(|(p, r)| (p.display().to_string(), r.map(|f| f.analysis)))
        .collect();
    let report = AnalysisReport::new(resolved.analysis, generated_at, entries);
    for d in &report.datasets {
        match &d.outcome {
            Outcome::Ok { analysis } => {
                for w in &analysis.warnings {
                    eprintln!("warning: {}: {w}", analysis.record.name);
                }
            }
            Outcome::Error { error } => eprintln!("error: {}: {error}", d.source),
        }
    }

    emit(&args.out, &report.render(resolved.format.into()))?;

    let failed = report.n_failed();
    Ok(if failed == 0 {
        Status::Ok
    } else if failed < report.datasets.len() {
        Status::Partial
    } else {
        eprintln!("error: no dataset could be analyzed");
        Status::Failed
    })
}

fn load_report(path: &Path) -> Result<AnalysisReport> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading report {}", path.display()))?;
    let report = AnalysisReport::from_json(&text)
        .with_context(|| format!("parsing report {}", path.display()))?;
    let failed = report.n_failed();
    if failed > 0 {
        eprintln!("warning: skipping {failed} dataset(s) that failed analysis");
    }
    Ok(report)
}

/// Rank inputs and, for reports, the payoff inputs of each dataset.
fn load_source(src: &SourceArgs) -> Result<(RankInputs, Option<PayoffInputs>)> {
    if let Some(path) = &src.fixtures {
        let inputs = report::read_fixtures(path)
            .with_context(|| format!("reading fixtures {}", path.display()))?;
        return Ok((inputs, None));
    }
    let path = src.report.as_ref().expect("clap enforces a source");
    let report = load_report(path)?;
    let gt = match &src.ground_truth {
        Some(p) => Some(
            report::read_ground_truth(p)
                .with_context(|| format!("reading ground truth {}", p.display()))?,
        ),
        None => None,
    };
    let inputs = report.rank_inputs(gt.as_deref())?;
    Ok((inputs, Some(PayoffInputs::from_report(&report))))
}

pub fn rank(args: &RankArgs) -> Result<Status> {
    let (inputs, _) = load_source(&args.source)?;
    let table = RankTable::build(&inputs)?;
    let mut view = RankView::new(table);
    if !args.exclude_prefix.is_empty() && view.table.tri_ranks.is_none() {
        bail!("--exclude-prefix needs TRI ranks (ground truth or a tri_rank fixture column)");
    }
    for prefix in &args.exclude_prefix {
        view.exclude_prefix(prefix)?;
    }
    let format = format_of(&args.out);
    if format != OutputFormat::Text {
        for tie in &view.table.ties {
            eprintln!("note: {}", report::tie_message(tie));
        }
    }
    emit(&args.out, &view.render(format))?;
    Ok(Status::Ok)
}

pub fn select(args: &SelectArgs) -> Result<Status> {
    let (inputs, payoff) = load_source(&args.source)?;
    let table = RankTable::build(&inputs)?;
    let model = match (args.horizon, args.delta_r) {
        (Some(horizon), Some(value)) => Some(CostModel {
            horizon,
            discount: args.payoff_discount,
            delta_r: match args.delta_model {
                DeltaModel::Constant => DeltaRModel::Constant(value),
                DeltaModel::GapFraction => DeltaRModel::GapFraction(value),
            },
            fixed_cost: args.fixed_cost,
        }),
        _ => None,
    };
    if args.k.is_none() && model.is_none() {
        bail!("select needs -k <count> or a cost model (--horizon with --delta-r)");
    }
    if matches!(args.delta_model, DeltaModel::GapFraction) && payoff.is_none() && model.is_some() {
        bail!("--delta-model gap-fraction needs an analysis report, not fixtures");
    }
    let payoff = payoff.unwrap_or_default();
    let selection = report::select(&table, args.k, model.as_ref().map(|m| (m, &payoff)))?;
    emit(&args.out, &selection.render(format_of(&args.out)))?;
    Ok(Status::Ok)
}

pub fn gen_synth(args: &GenSynthArgs) -> Result<Status> {
    let config = SynthConfig {
        name: args.name.clone(),
        state_dim: args.state_dim,
        action_dim: args.action_dim,
        n_trajectories: args.trajectories,
        trajectory_length: args.length,
        mean_fn: args.mean_fn.into(),
        sigma_true: args.sigma,
        reward_fn: args.reward.into(),
        mixture: match (args.mixture_sigma, args.mixture_fraction) {
            (Some(sigma_alt), Some(fraction)) => Some(Mixture {
                sigma_alt,
                fraction,
            }),
            _ => None,
        },
        seed: args.seed,
    };
    let (dataset, truth) = synth::generate(&config)?;
    match DatasetFormat::from_path(&args.output) {
        DatasetFormat::Csv => save_csv(&dataset, &args.output)?,
        DatasetFormat::PortableBinary => save_portable(&dataset, &args.output)?,
    }
    #[derive(Serialize)]
    struct Written<'a> {
        path: String,
        name: &'a str,
        n_transitions: usize,
        config: &'a SynthConfig,
        ground_truth: &'a synth::GroundTruth,
    }
    let summary = Written {
        path: args.output.display().to_string(),
        name: dataset.name(),
        n_transitions: dataset.n_transitions(),
        config: &config,
        ground_truth: &truth,
    };
    print_stdout(&serde_json::to_string_pretty(&summary)?)?;
    Ok(Status::Ok)
}

fn audit_dataset(args: &CheckGradientsArgs) -> Result<Dataset> {
    match &args.dataset {
        Some(p) => Ok(load_dataset(p, DatasetFormat::from_path(p))
            .with_context(|| format!("loading {}", p.display()))?),
        None => {
            let cfg = SynthConfig {
                action_dim: 2,
                n_trajectories: 4,
                trajectory_length: 50,
                seed: args.seed,
                ..Default::default()
            };
            Ok(synth::generate(&cfg)?.0)
        }
    }
}

pub fn check_gradients_cmd(args: &CheckGradientsArgs) -> Result<Status> {
    if args.transitions == 0 {
        bail!("--transitions must be >= 1");
    }
    let dataset = audit_dataset(args)?;
    let policy: BehaviorPolicy = match &args.policy {
        Some(p) => load_policy(p).with_context(|| format!("loading policy {}", p.display()))?,
        None => {
            let mut train = TrainConfig {
                epochs: args.epochs.max(1),
                batch_size: 64,
                seed: args.seed,
                ..Default::default()
            };
            if let Some(h) = &args.hidden {
                train.arch = PolicyArch {
                    hidden: h.clone(),
                    ..train.arch
                };
            }
            train_behavior_policy(&dataset, &train)?.0
        }
    };
    if policy.state_dim() != dataset.state_dim() || policy.action_dim() != dataset.action_dim() {
        bail!(
            "policy expects {}-d states and {}-d actions, dataset has {} and {}",
            policy.state_dim(),
            policy.action_dim(),
            dataset.state_dim(),
            dataset.action_dim()
        );
    }
    let n = dataset.n_transitions();
    let take = args.transitions.min(n);
    let rows: Vec<usize> = (0..take).map(|i| i * n / take).collect();
    let actions = dataset.normalize_actions();
    let states: Vec<&[f32]> = rows.iter().map(|&i| dataset.state(i)).collect();
    let acts: Vec<&[f64]> = rows.iter().map(|&i| actions.row(i)).collect();
    let batch = Batch::new(&policy, &states, &acts)?;
    let report = check_gradients(&policy, &batch, args.step);
    let pass = report.max_rel_error < args.tolerance;

    let text = match format_of(&args.out) {
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                #[serde(flatten)]
                report: &'a dsq_core::behavior::GradCheckReport,
                tolerance: f64,
                pass: bool,
            }
            serde_json::to_string_pretty(&Out { report: &report, tolerance: args.tolerance, pass })?
        }
        OutputFormat::Csv => format!(
            "n_params,n_checked,n_kinks,max_rel_error,worst_index,step,tolerance,pass\n{},{},{},{},{},{},{},{}\n",
            report.n_params,
            report.n_checked,
            report.n_kinks,
            report.max_rel_error,
            report.worst_index,
            report.step,
            args.tolerance,
            pass
        ),
        OutputFormat::Text => format!(
            "checked {} of {} parameters on {} transitions ({} skipped at ReLU kinks)\n\
             max relative error {:.3e} at parameter {} (tolerance {:e}): {}\n",
            report.n_checked,
            report.n_params,
            batch.len(),
            report.n_kinks,
            report.max_rel_error,
            report.worst_index,
            args.tolerance,
            if pass { "PASS" } else { "FAIL" }
        ),
    };
    emit(&args.out, &text)?;
    Ok(if pass { Status::Ok } else { Status::Failed })
}
