use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Value};
use uala_core::agent::{
    default_base_mode, run_episodes, write_trajectory_log, Agent, EpisodeOutput, EpisodeRecord, RunMonitor, Strategy,
};
use uala_core::calibration::{
    build_calibration_set, compare_groups, escalations_non_increasing, estimate_threshold, multi_inference_threshold,
    quantile, sweep_calibration_sizes, sweep_quantiles, CalibrationProfile, CalibrationSet, GroupStats, SweepEval,
};
use uala_core::canonical::to_canonical_string;
use uala_core::eval::{aggregate, load_dataset, write_items, Dataset, QAItem, RunReport, Sampling};
use uala_core::uncertainty::Method;

use crate::config::{Mode, RunConfig};
use crate::{AnalyzeArgs, CalibrateArgs, DatasetArgs, ReportArgs, RunArgs, SweepArgs, UsageError};

pub const TRAJECTORY_LOG: &str = "trajectories.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

fn canonical<T: Serialize>(v: &T) -> String {
    to_canonical_string(v).expect("serialisable")
}

fn calibration_set(cfg: &RunConfig, agent: &Agent) -> anyhow::Result<CalibrationSet<f64>> {
    let items = cfg.train_items()?;
    let estimator = cfg.calibration_estimator();
    if estimator == Method::VerbalComplement {
        return Err(UsageError("verbal confidence is not calibrated; set confidence_threshold instead".into()).into());
    }
    let source = cfg.base_mode.unwrap_or_else(|| default_base_mode(items.first().map_or(Dataset::HotpotQa, |i| i.dataset)));
    let set = build_calibration_set(&items, source, estimator, cfg.workers, |item| {
        agent.calibration_outcome(item, estimator, cfg.weight_scope)
    })?;
    Ok(set)
}

fn profile_from(cfg: &RunConfig, set: &CalibrationSet<f64>) -> anyhow::Result<CalibrationProfile<f64>> {
    let mut profile = if set.estimator == Method::MultiInference {
        multi_inference_threshold(set)?
    } else {
        estimate_threshold(set, cfg.threshold)?
    };
    profile.weight_scope = cfg.weight_scope;
    Ok(profile)
}

pub fn calibrate(a: &CalibrateArgs) -> anyhow::Result<()> {
    let cfg = a.common.resolve()?;
    if !matches!(cfg.mode, Mode::UalaS | Mode::UalaM) {
        return Err(UsageError(format!("calibration applies to uala-s and uala-m, not {:?}", cfg.mode)).into());
    }
    let out = match (&a.out, &cfg.profile) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => cfg.resolve(p),
        (None, None) => return Err(UsageError("no profile path: pass --out or set `profile`".into()).into()),
    };
    let dump = a.dump.clone().unwrap_or_else(|| out.with_extension("set.json"));
    let (agent, _) = cfg.agent(None, None)?;
    let set = calibration_set(&cfg, &agent)?;
    let mut profile = profile_from(&cfg, &set)?;
    profile.dataset_id = cfg.train.as_ref().map(|d| d.path.display().to_string());
    profile.save(&out).with_context(|| format!("writing {}", out.display()))?;
    std::fs::write(&dump, canonical(&set) + "\n").with_context(|| format!("writing {}", dump.display()))?;
    println!("calibration set size: {}", set.len());
    println!("estimator: {}", profile.estimator);
    println!("tau: {}", profile.tau);
    println!("profile: {}", out.display());
    Ok(())
}

/// The provenance header echoed as the first trajectory-log line.
pub fn run_header(cfg: &RunConfig, strategy: &Strategy) -> Value {
    json!({"config": cfg, "method": strategy.label(), "strategy": strategy})
}

/// Trajectory log plus report files in `out`; returns the report.
pub fn write_run_outputs(out: &Path, header: &Value, outputs: &[EpisodeOutput]) -> anyhow::Result<RunReport> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let log = out.join(TRAJECTORY_LOG);
    write_trajectory_log(&log, Some(header), outputs.iter().map(|o| (&o.record, o.steps.as_slice())))
        .with_context(|| format!("writing {}", log.display()))?;
    let records: Vec<EpisodeRecord> = outputs.iter().map(|o| o.record.clone()).collect();
    let report = aggregate(&records).ok_or_else(|| anyhow::anyhow!("the run has no episodes"))?;
    std::fs::write(out.join(REPORT_JSON), report.to_canonical_json() + "\n")?;
    std::fs::write(out.join(REPORT_TEXT), report.to_table())?;
    Ok(report)
}

pub fn execute(
    cfg: &RunConfig,
    agent: &Agent,
    items: &[QAItem],
    strategy: &Strategy,
    monitor: Option<&RunMonitor>,
) -> anyhow::Result<Vec<EpisodeOutput>> {
    if items.is_empty() {
        return Err(anyhow::anyhow!("the evaluation split is empty"));
    }
    Ok(run_episodes(agent, items, strategy, cfg.workers, monitor)?)
}

pub fn run(a: &RunArgs) -> anyhow::Result<()> {
    let cfg = a.common.resolve()?;
    if cfg.oracle == uala_core::agent::OracleMode::Interactive {
        return Err(UsageError("the interactive oracle needs `uala serve`".into()).into());
    }
    let strategy = cfg.strategy()?;
    let items = cfg.items()?;
    let (agent, recorders) = cfg.agent(a.record_completions.as_deref(), a.record_tools.as_deref())?;
    let outputs = execute(&cfg, &agent, &items, &strategy, None)?;
    recorders.save()?;
    let report = write_run_outputs(&a.out, &run_header(&cfg, &strategy), &outputs)?;
    print!("{}", report.to_table());
    Ok(())
}

#[derive(Serialize)]
struct SweepOutput<R> {
    kind: &'static str,
    method: String,
    calibration_size: usize,
    rows: Vec<R>,
    #[serde(skip_serializing_if = "Option::is_none")]
    escalations_non_increasing: Option<bool>,
}

pub fn sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let cfg = a.common.resolve()?;
    if cfg.mode != Mode::UalaS {
        return Err(UsageError("threshold sweeps apply to uala-s".into()).into());
    }
    if cfg.oracle == uala_core::agent::OracleMode::Interactive {
        return Err(UsageError("sweeps cannot wait on an interactive oracle".into()).into());
    }
    if a.qs.is_empty() || a.qs.iter().any(|q| !(*q > 0.0 && *q < 1.0)) || a.qs.windows(2).any(|w| w[0] > w[1]) {
        return Err(UsageError("--qs must be ascending values in (0, 1)".into()).into());
    }
    let items = cfg.items()?;
    let (agent, _) = cfg.agent(None, None)?;
    let set: CalibrationSet<f64> = match &a.calibration {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .map_err(|e| UsageError(format!("calibration dump {}: {e}", p.display())))?,
        None => calibration_set(&cfg, &agent)?,
    };
    if set.estimator == Method::MultiInference {
        return Err(UsageError("multi-inference thresholds are fixed at the calibration mean".into()).into());
    }
    let evaluate = |profile: &CalibrationProfile<f64>| -> anyhow::Result<SweepEval> {
        let mut profile = profile.clone();
        profile.weight_scope = cfg.weight_scope;
        let strategy = Strategy::Uala { profile, backoff: cfg.backoff, oracle: cfg.oracle };
        let outputs = execute(&cfg, &agent, &items, &strategy, None)?;
        let records: Vec<EpisodeRecord> = outputs.into_iter().map(|o| o.record).collect();
        let report = aggregate(&records).expect("non-empty run");
        Ok(SweepEval {
            escalations: report.stage1_escalated,
            metric: report.em,
            tool_calls: report.tool_calls as usize,
        })
    };
    let method = format!("uala-s/{}", set.estimator);
    let (json, table) = if a.sizes.is_empty() {
        let rows = sweep_quantiles(&set, &a.qs, evaluate)?;
        let monotone = escalations_non_increasing(&rows);
        let mut t = format!("{:>6} {:>12} {:>11} {:>8} {:>10}\n", "q", "tau", "escalations", "EM", "tool calls");
        for r in &rows {
            let _ = writeln!(t, "{:>6} {:>12.6} {:>11} {:>8.1} {:>10}", r.q, r.tau, r.escalations, r.metric, r.tool_calls);
        }
        let _ = writeln!(t, "escalations non-increasing in q: {}", if monotone { "yes" } else { "no" });
        let out = SweepOutput {
            kind: "quantile",
            method,
            calibration_size: set.len(),
            rows,
            escalations_non_increasing: Some(monotone),
        };
        (canonical(&out), t)
    } else {
        let rows = sweep_calibration_sizes(&set, &a.sizes, cfg.threshold, cfg.seed, evaluate)?;
        let mut t = format!("{:>6} {:>6} {:>12} {:>11} {:>8} {:>10}\n", "size", "used", "tau", "escalations", "EM", "tool calls");
        for r in &rows {
            let _ = writeln!(
                t,
                "{:>6} {:>6} {:>12.6} {:>11} {:>8.1} {:>10}",
                r.requested_size, r.set_size, r.tau, r.escalations, r.metric, r.tool_calls
            );
        }
        let out = SweepOutput { kind: "size", method, calibration_size: set.len(), rows, escalations_non_increasing: None };
        (canonical(&out), t)
    };
    if let Some(p) = &a.out {
        std::fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    print!("{table}");
    Ok(())
}

/// Episode records from one or more trajectory logs, in file order.
pub fn read_records(paths: &[PathBuf]) -> anyhow::Result<Vec<EpisodeRecord>> {
    let mut records = Vec::new();
    for path in paths {
        let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut v: Value = serde_json::from_str(&line)
                .map_err(|e| UsageError(format!("{}:{}: {e}", path.display(), n + 1)))?;
            if v.get("kind").and_then(Value::as_str) == Some("episode") {
                let r = serde_json::from_value(v["record"].take())
                    .map_err(|e| UsageError(format!("{}:{}: {e}", path.display(), n + 1)))?;
                records.push(r);
            }
        }
    }
    Ok(records)
}

pub fn report(a: &ReportArgs) -> anyhow::Result<()> {
    let records = read_records(&a.logs)?;
    let report = aggregate(&records).ok_or_else(|| anyhow::anyhow!("no episode records in the given logs"))?;
    if a.json {
        println!("{}", report.summary_json());
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

/// Five-number summary plus mean, ready for a box plot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let q = |p| quantile(values, p).expect("non-empty, p in (0, 1)");
        Some(Self {
            n: values.len(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: values.iter().sum::<f64>() / values.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAnalysis {
    pub dataset: Dataset,
    pub estimator: Method,
    pub correct: Option<Distribution>,
    pub incorrect: Option<Distribution>,
    pub stats: GroupStats,
}

/// Base-answer uncertainty split by correctness, one group per dataset and estimator.
pub fn analyze_records(records: &[EpisodeRecord]) -> anyhow::Result<Vec<GroupAnalysis>> {
    type Group = (Dataset, Method, Vec<f64>, Vec<f64>);
    let mut groups: BTreeMap<(&str, &str), Group> = BTreeMap::new();
    for r in records {
        let (Some(u), Some(correct)) = (&r.base_uncertainty, r.base_em_correct) else { continue };
        let g = groups
            .entry((r.dataset.as_str(), u.method.as_str()))
            .or_insert_with(|| (r.dataset, u.method, Vec::new(), Vec::new()));
        if correct {
            g.2.push(u.value);
        } else {
            g.3.push(u.value);
        }
    }
    if groups.is_empty() {
        return Err(anyhow::anyhow!("no episodes with a scored base answer"));
    }
    groups
        .into_values()
        .map(|(dataset, estimator, correct, incorrect)| {
            let stats = compare_groups(&correct, &incorrect).with_context(|| format!("{dataset} / {estimator}"))?;
            Ok(GroupAnalysis {
                dataset,
                estimator,
                correct: Distribution::of(&correct),
                incorrect: Distribution::of(&incorrect),
                stats,
            })
        })
        .collect()
}

fn analysis_table(groups: &[GroupAnalysis]) -> String {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let mut t = String::new();
    let _ = writeln!(
        t,
        "{:<11} {:<19} {:<9} {:>5} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "dataset", "estimator", "group", "n", "min", "q1", "median", "q3", "max", "mean"
    );
    for g in groups {
        for (name, d) in [("correct", &g.correct), ("incorrect", &g.incorrect)] {
            if let Some(d) = d {
                let _ = writeln!(
                    t,
                    "{:<11} {:<19} {:<9} {:>5} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                    g.dataset.as_str(),
                    g.estimator.as_str(),
                    name,
                    d.n,
                    d.min,
                    d.q1,
                    d.median,
                    d.q3,
                    d.max,
                    d.mean
                );
            }
        }
        let s = &g.stats;
        let _ = writeln!(
            t,
            "  mean diff {:.4}  t {}  df {}  p {}  d {}{}",
            s.mean_diff,
            opt(s.t_statistic),
            opt(s.degrees_of_freedom),
            opt(s.p_value),
            opt(s.cohens_d),
            if s.degenerate { "  (zero variance)" } else { "" }
        );
    }
    t
}

pub fn analyze(a: &AnalyzeArgs) -> anyhow::Result<()> {
    let records = read_records(&a.logs)?;
    let groups = analyze_records(&records)?;
    let json = canonical(&json!({ "groups": groups }));
    if let Some(p) = &a.out {
        std::fs::write(p, json.clone() + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    if a.json {
        println!("{json}");
    } else {
        print!("{}", analysis_table(&groups));
    }
    Ok(())
}

pub fn dataset(a: &DatasetArgs) -> anyhow::Result<()> {
    let sampling = Sampling { seed: a.seed, count: a.count, per_task: a.per_task };
    let items = load_dataset(&a.input, a.kind, sampling)?;
    write_items(&a.output, &items)?;
    println!("{} items written to {}", items.len(), a.output.display());
    Ok(())
}
