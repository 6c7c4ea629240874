//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use uala_core::agent::{grammar_for, AnswerSource, Outcome, PromptSet};
use uala_core::calibration::{compare_groups, escalations_non_increasing, quantile, should_escalate, SweepRow};
use uala_core::eval::{normalize_answer, Dataset, RunReport};
use uala_core::tools::{parse_action, render_action};
use uala_core::uncertainty::{
    estimate_free_form_scoped, estimate_multi_inference, estimate_single_token, softmax_over_sequence, Method,
    WeightScope,
};

type Check = fn() -> Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn uala(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_uala")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("uala {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn run_fixture(config: &Path, out: &Path) -> Result<RunReport, String> {
    uala(&["run", "-c", &config.display().to_string(), "-o", &out.display().to_string()])?;
    let text = std::fs::read_to_string(out.join("report.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

#[derive(Deserialize)]
struct FreeFormCase {
    logprobs: Vec<f64>,
    softmax: Vec<f64>,
    minimum: f64,
    average: f64,
    normalised_product: f64,
    log_sum: f64,
    entropy: f64,
    single_token: f64,
}

#[derive(Deserialize)]
struct MultiCase {
    primary: String,
    samples: Vec<String>,
    value: f64,
}

#[derive(Deserialize)]
struct EstimatorOracle {
    free_form: Vec<FreeFormCase>,
    multi_inference: Vec<MultiCase>,
}

fn estimator_correctness() -> Result<String, String> {
    let o: EstimatorOracle =
        serde_json::from_str(include_str!("../../core/tests/data/estimator_oracle.json")).map_err(|e| e.to_string())?;
    ensure(o.free_form.len() == 1000, format!("{} free-form cases, expected 1000", o.free_form.len()))?;
    let start = Instant::now();
    let mut worst = 0.0f64;
    for c in &o.free_form {
        let z = softmax_over_sequence(&c.logprobs).map_err(|e| e.to_string())?;
        for (a, b) in z.as_slice().iter().zip(&c.softmax) {
            worst = worst.max((a - b).abs());
        }
        for (m, want) in [
            (Method::Minimum, c.minimum),
            (Method::Average, c.average),
            (Method::NormalisedProduct, c.normalised_product),
            (Method::LogSum, c.log_sum),
            (Method::Entropy, c.entropy),
        ] {
            let got = estimate_free_form_scoped(&c.logprobs, m, WeightScope::Sequence).map_err(|e| e.to_string())?;
            worst = worst.max((got.value - want).abs());
        }
        let single = estimate_single_token(c.logprobs[0]).map_err(|e| e.to_string())?;
        worst = worst.max((single.value - c.single_token).abs());
    }
    for c in &o.multi_inference {
        let u = estimate_multi_inference::<f64, _, _>(&c.primary, &c.samples, normalize_answer)
            .map_err(|e| e.to_string())?;
        worst = worst.max((u.value - c.value).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-9, format!("worst |delta| {worst:e} exceeds 1e-9"))?;
    ensure(secs < 5.0, format!("took {secs:.2} s"))?;
    Ok(format!(
        "{} free-form + {} multi-inference cases, worst |delta| {worst:.1e}, {secs:.2} s",
        o.free_form.len(),
        o.multi_inference.len()
    ))
}

fn random_logprobs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| -rng.random_range(0.0..12.0)).collect()
}

fn algebraic_identities() -> Result<String, String> {
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let est = |lps: &[f64], m| estimate_free_form_scoped(lps, m, WeightScope::Sequence).unwrap().value;
    let cases = 1000;
    for i in 0..cases {
        let n = rng.random_range(1..=40);
        let lps = random_logprobs(&mut rng, n);
        let ln_n = (n as f64).ln();
        ensure((est(&lps, Method::Average) - ln_n).abs() <= TOL, format!("case {i}: Average != ln n"))?;
        let (ls, np) = (est(&lps, Method::LogSum), est(&lps, Method::NormalisedProduct));
        ensure((ls - n as f64 * np).abs() <= TOL * ls.max(1.0), format!("case {i}: LogSum != n * NormalisedProduct"))?;
        let h = est(&lps, Method::Entropy);
        ensure(h <= ln_n + TOL, format!("case {i}: Entropy above ln n"))?;
        let spread = lps.iter().copied().fold(f64::NEG_INFINITY, f64::max) - lps.iter().copied().fold(f64::INFINITY, f64::min);
        if spread > 1e-3 {
            ensure(h < ln_n, format!("case {i}: non-uniform input reached ln n"))?;
        }
        let uniform = vec![lps[0]; n];
        ensure((est(&uniform, Method::Entropy) - ln_n).abs() <= TOL, format!("case {i}: uniform Entropy != ln n"))?;
        let c = -rng.random_range(0.0..20.0);
        let shifted: Vec<f64> = lps.iter().map(|p| p + c).collect();
        let (a, b) = (softmax_over_sequence(&lps).unwrap(), softmax_over_sequence(&shifted).unwrap());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            ensure((x - y).abs() <= TOL, format!("case {i}: softmax not shift invariant"))?;
        }
    }
    Ok(format!("{cases} random sequences, tolerance {TOL:e}"))
}

fn monotone_transform_routing() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let est = |lps: &[f64], m| estimate_free_form_scoped(lps, m, WeightScope::Sequence).unwrap().value;
    let pairs = 500;
    let mut mismatches = 0usize;
    let mut routed = 0usize;
    for _ in 0..pairs {
        let n = rng.random_range(1..=16);
        let q = rng.random_range(0.05..0.95);
        let cal: Vec<Vec<f64>> = (0..rng.random_range(5..40)).map(|_| random_logprobs(&mut rng, n)).collect();
        let test: Vec<Vec<f64>> = (0..rng.random_range(5..40)).map(|_| random_logprobs(&mut rng, n)).collect();
        let tau = |m| quantile(&cal.iter().map(|l| est(l, m)).collect::<Vec<_>>(), q).unwrap();
        let (tau_ls, tau_np) = (tau(Method::LogSum), tau(Method::NormalisedProduct));
        for lps in &test {
            let a = should_escalate(est(lps, Method::LogSum), tau_ls);
            let b = should_escalate(est(lps, Method::NormalisedProduct), tau_np);
            mismatches += usize::from(a != b);
            routed += 1;
        }
    }
    ensure(mismatches == 0, format!("{mismatches} mismatches over {routed} routed answers"))?;
    Ok(format!("{pairs} calibration/test pairs, {routed} answers, 0 mismatches"))
}

#[derive(Deserialize)]
struct SweepFile {
    rows: Vec<SweepRow<f64>>,
    escalations_non_increasing: bool,
}

fn quantile_monotonicity() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let source = fixtures().join("hotpot-mini-20/source");
    let mut counts = Vec::new();
    for (name, extra) in [("dump", Some("profile.set.json")), ("train", None)] {
        let out = dir.path().join(format!("{name}.json"));
        let mut args = vec![
            "sweep".to_string(),
            "-c".into(),
            source.join("config.json").display().to_string(),
            "--qs".into(),
            "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9".into(),
            "-o".into(),
            out.display().to_string(),
        ];
        if let Some(d) = extra {
            args.extend(["--calibration".into(), source.join(d).display().to_string()]);
        }
        uala(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
        let sweep: SweepFile =
            serde_json::from_str(&std::fs::read_to_string(&out).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure(sweep.rows.len() == 9, "expected nine rows")?;
        ensure(escalations_non_increasing(&sweep.rows), format!("{name}: escalations increase with q"))?;
        ensure(sweep.escalations_non_increasing, format!("{name}: reported check disagrees"))?;
        ensure(
            sweep.rows.first().unwrap().escalations > sweep.rows.last().unwrap().escalations,
            format!("{name}: tool use does not decrease over the sweep"),
        )?;
        counts = sweep.rows.iter().map(|r| r.escalations).collect();
    }
    Ok(format!("hotpot-mini-20 escalations over q = 0.1..0.9: {counts:?}"))
}

fn control_flow_fidelity() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = run_fixture(&fixtures().join("figure1/config.json"), dir.path())?;
    let by_id = |id: &str| report.records.iter().find(|r| r.id == id).ok_or(format!("episode {id} missing"));
    let outcomes = |id: &str| -> Result<Vec<Outcome>, String> { Ok(by_id(id)?.decisions.iter().map(|d| d.outcome).collect()) };

    let a = by_id("a")?;
    ensure(a.answer_source == Some(AnswerSource::Base) && a.tool_calls == 0, "(a) is not a stage-1 accept without tools")?;
    ensure(outcomes("a")? == [Outcome::Accept], "(a) decisions differ")?;
    ensure(a.final_answer.as_deref() == Some("Richard Nixon") && a.em_correct, "(a) answer differs")?;

    let b = by_id("b")?;
    ensure(b.answer_source == Some(AnswerSource::Tool) && b.tool_calls == 2, "(b) is not a tool-stage accept")?;
    ensure(outcomes("b")? == [Outcome::Escalate, Outcome::Accept], "(b) decisions differ")?;
    ensure(b.final_answer.as_deref() == Some("The Saimaa Gesture") && b.em_correct, "(b) answer differs")?;

    let c = by_id("c")?;
    ensure(c.answer_source == Some(AnswerSource::Oracle), "(c) did not reach the oracle")?;
    ensure(outcomes("c")? == [Outcome::Escalate, Outcome::Escalate], "(c) decisions differ")?;
    ensure(c.tool_answer.as_deref() == Some("director and screenwriter"), "(c) tool answer differs")?;
    ensure(c.em_correct, "(c) is not correct with the simulated oracle")?;
    Ok("(a) Base/0 tools, (b) Tool/2 tools, (c) Oracle with em_correct = true".into())
}

fn accounting() -> Result<String, String> {
    let bundle = fixtures().join("hotpot-mini-20");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = run_fixture(&bundle.join("config.json"), dir.path())?;
    let got = std::fs::read(dir.path().join("report.json")).map_err(|e| e.to_string())?;
    let want = std::fs::read(bundle.join("expected_report.json")).map_err(|e| e.to_string())?;
    ensure(got == want, "report differs from expected_report.json")?;
    ensure(report.n_items == 20, format!("{} episodes", report.n_items))?;
    for r in &report.records {
        ensure((r.tool_calls >= 1) == r.stage1_escalated(), format!("{}: tool use and stage-1 escalation disagree", r.id))?;
        if r.base_answer.is_some() {
            ensure(r.final_answer.is_some(), format!("{}: backoff left no final answer", r.id))?;
        }
    }
    let backoffs = report.records.iter().filter(|r| r.answer_source == Some(AnswerSource::Backoff)).count();
    Ok(format!(
        "EM {:.1}, {} tool calls, {} output tokens byte-identical; {} stage-1 escalations, {backoffs} backoffs",
        report.em, report.tool_calls, report.output_tokens, report.stage1_escalated
    ))
}

#[derive(Deserialize)]
struct StatsCase {
    correct: Vec<f64>,
    incorrect: Vec<f64>,
    mean_diff: f64,
    t: f64,
    p: f64,
    d: f64,
}

fn statistics() -> Result<String, String> {
    let cases: Vec<StatsCase> =
        serde_json::from_str(include_str!("../../core/tests/data/stats_oracle.json")).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (i, c) in cases.iter().enumerate() {
        let s = compare_groups(&c.correct, &c.incorrect).map_err(|e| e.to_string())?;
        let (t, p, d) = (s.t_statistic.ok_or("no t")?, s.p_value.ok_or("no p")?, s.cohens_d.ok_or("no d")?);
        for (got, want) in [(t, c.t), (p, c.p), (d, c.d), (s.mean_diff, c.mean_diff)] {
            ensure((got - want).abs() <= 1e-6, format!("case {i}: {got} vs reference {want}"))?;
            worst = worst.max((got - want).abs());
        }
    }
    let g = [0.3, 0.9, 1.4, 0.2, 0.7];
    let same = compare_groups(&g, &g).map_err(|e| e.to_string())?;
    ensure(same.cohens_d == Some(0.0), "identical groups give d != 0")?;
    Ok(format!("{} reference cases, worst |delta| {worst:.1e}; identical groups d = 0", cases.len()))
}

fn prompt_round_trips() -> Result<String, String> {
    let mut lines = 0;
    for ds in [Dataset::HotpotQa, Dataset::StrategyQa, Dataset::Mmlu] {
        let grammar = grammar_for(ds);
        for line in PromptSet::for_dataset(ds).react.lines() {
            let Some(rest) = line.strip_prefix("Action") else { continue };
            let Some((_, action)) = rest.split_once(':') else { continue };
            let action = action.trim();
            let parsed = parse_action(line, grammar).map_err(|e| format!("{ds}: {e}"))?;
            let rendered = render_action(&parsed, grammar);
            ensure(rendered == action, format!("{ds}: `{action}` re-rendered as `{rendered}`"))?;
            lines += 1;
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = run_fixture(&fixtures().join("colorado/config.json"), dir.path())?;
    let r = &report.records[0];
    ensure(r.final_answer.as_deref() == Some("1,800 to 7,000 ft"), format!("Colorado answer {:?}", r.final_answer))?;
    ensure(r.tool_calls == 5, format!("{lines} exemplar actions round-trip; Colorado episode made {} tool calls, expected 5", r.tool_calls))?;
    Ok(format!("{lines} exemplar actions round-trip; Colorado gives \"1,800 to 7,000 ft\" with 5 tool calls"))
}

fn determinism() -> Result<String, String> {
    let mut compared = 0;
    for config in ["hotpot-mini-20/config.json", "hotpot-mini-20/source/config.json", "figure1/config.json"] {
        let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
        run_fixture(&fixtures().join(config), a.path())?;
        run_fixture(&fixtures().join(config), b.path())?;
        for f in ["trajectories.jsonl", "report.json", "report.txt"] {
            let x = std::fs::read(a.path().join(f)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.path().join(f)).map_err(|e| e.to_string())?;
            ensure(x == y, format!("{config}: {f} differs between runs"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} output files byte-identical across repeated runs"))
}

fn main() {
    let checks: [(&str, Check); 9] = [
        ("estimator correctness", estimator_correctness),
        ("algebraic identities", algebraic_identities),
        ("monotone-transform routing equivalence", monotone_transform_routing),
        ("quantile monotonicity", quantile_monotonicity),
        ("control-flow fidelity", control_flow_fidelity),
        ("accounting", accounting),
        ("statistics", statistics),
        ("prompt/parse round-trips", prompt_round_trips),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
