use std::cell::Cell;
use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::extract::{extract_answer, score_answer, working_text, ExtractedAnswer};
use super::oracle::{EscalationQueue, EscalationView, OracleMode};
use super::prompts::{default_base_mode, grammar_for, PromptSet};
use super::react::{run_react, sampled_finish, FinishSite};
use super::record::{
    AnswerSource, DecisionStage, EpisodeRecord, Outcome, RoutingDecision, Step, StepStage,
};
use super::{AgentError, PromptMode};
use crate::calibration::{BaseOutcome, CalibrationProfile};
use crate::eval::{exact_match, normalize_answer, QAItem};
use crate::gateway::{CallStage, Completion, CompletionRequest, Gateway, GatewayError, RequestTag};
use crate::tools::{SnippetPriority, ToolBackend, ToolError, ToolSession, ToolStats};
use crate::uncertainty::{
    estimate_multi_inference, parse_verbal_confidence, verbal_uncertainty, Method, Uncertainty, UncertaintyError,
    WeightScope,
};

const BASE_STOP: [&str; 2] = ["\nQuestion:", "\n\n"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Overrides the per-dataset base prompt mode.
    pub base_mode: Option<PromptMode>,
    pub max_steps: u32,
    /// Sample count for multi-inference scoring and self-consistency.
    pub samples: u32,
    pub sample_temperature: f64,
    pub max_tokens: u32,
    pub oracle_timeout_secs: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            base_mode: None,
            max_steps: 7,
            samples: 9,
            sample_temperature: 0.7,
            max_tokens: 256,
            oracle_timeout_secs: 600,
        }
    }
}

/// What an episode does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Standard,
    Cot,
    SelfConsistency,
    React {
        backoff: bool,
    },
    /// Single-inference when the profile's estimator is a token-level one,
    /// multi-inference when it is [`Method::MultiInference`].
    Uala {
        profile: CalibrationProfile<f64>,
        backoff: bool,
        oracle: OracleMode,
    },
    /// Gate on a verbalised confidence: escalate when it is below the threshold.
    Verbal {
        confidence_threshold: f64,
        backoff: bool,
        oracle: OracleMode,
    },
}

impl Strategy {
    pub fn label(&self) -> String {
        let suffix = |backoff: bool, oracle: OracleMode| {
            let mut s = String::new();
            if backoff {
                s.push_str("+backoff");
            }
            if oracle != OracleMode::Off {
                s.push_str("+oracle");
            }
            s
        };
        match self {
            Strategy::Standard => "standard".into(),
            Strategy::Cot => "cot".into(),
            Strategy::SelfConsistency => "self_consistency".into(),
            Strategy::React { backoff } => format!("react{}", suffix(*backoff, OracleMode::Off)),
            Strategy::Uala { profile, backoff, oracle } => {
                let base = if profile.estimator == Method::MultiInference { "uala-m" } else { "uala-s" };
                format!("{base}{}", suffix(*backoff, *oracle))
            }
            Strategy::Verbal { backoff, oracle, .. } => format!("verbal{}", suffix(*backoff, *oracle)),
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        match self {
            Strategy::Uala { profile, .. } => {
                if profile.estimator == Method::VerbalComplement {
                    return Err(AgentError::Config("verbal confidence uses the verbal strategy, not a profile".into()));
                }
                if !(profile.tau.is_finite() && profile.tau >= 0.0) {
                    return Err(AgentError::Config(format!("threshold {} is not a finite uncertainty", profile.tau)));
                }
            }
            Strategy::Verbal { confidence_threshold: t, .. } if !(*t > 0.0 && *t < 1.0) => {
                return Err(AgentError::Config(format!("confidence threshold {t} must lie in (0, 1)")));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn oracle(&self) -> OracleMode {
        match self {
            Strategy::Uala { oracle, .. } | Strategy::Verbal { oracle, .. } => *oracle,
            _ => OracleMode::Off,
        }
    }
}

/// Per-episode view of the gateway that also counts this episode's output tokens.
pub(crate) struct EpisodeCtx<'a> {
    pub id: &'a str,
    gateway: &'a Gateway,
    tokens: Cell<u64>,
}

impl<'a> EpisodeCtx<'a> {
    fn new(id: &'a str, gateway: &'a Gateway) -> Self {
        Self { id, gateway, tokens: Cell::new(0) }
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<Completion, AgentError> {
        let c = self.gateway.complete(req).map_err(|e| self.gateway_error(e))?;
        self.tokens.set(self.tokens.get() + c.output_token_count);
        Ok(c)
    }

    fn sample_batch(&self, req: &CompletionRequest) -> Result<Vec<Completion>, AgentError> {
        let out = self.gateway.sample_batch(req).map_err(|e| self.gateway_error(e))?;
        self.tokens.set(self.tokens.get() + out.iter().map(|c| c.output_token_count).sum::<u64>());
        Ok(out)
    }

    fn gateway_error(&self, source: GatewayError) -> AgentError {
        AgentError::Gateway { episode: self.id.to_string(), source }
    }

    pub fn tool(&self, source: ToolError) -> AgentError {
        AgentError::Tool { episode: self.id.to_string(), source }
    }

    pub fn uncertainty(&self, source: UncertaintyError) -> AgentError {
        AgentError::Uncertainty { episode: self.id.to_string(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutput {
    pub record: EpisodeRecord,
    pub steps: Vec<Step>,
}

/// How the two gates score answers.
enum Gate<'p> {
    Single(&'p CalibrationProfile<f64>),
    Multi(&'p CalibrationProfile<f64>),
    Verbal(f64),
}

/// Episode state accumulated while the stages run.
struct Draft {
    steps: Vec<Step>,
    decisions: Vec<RoutingDecision>,
    base: Option<ExtractedAnswer>,
    base_uncertainty: Option<Uncertainty<f64>>,
    tool: Option<ExtractedAnswer>,
    tool_uncertainty: Option<Uncertainty<f64>>,
    tool_calls: u32,
    events: Vec<String>,
    final_answer: Option<(String, AnswerSource)>,
}

impl Draft {
    fn new() -> Self {
        Self {
            steps: Vec::new(),
            decisions: Vec::new(),
            base: None,
            base_uncertainty: None,
            tool: None,
            tool_uncertainty: None,
            tool_calls: 0,
            events: Vec::new(),
            final_answer: None,
        }
    }

    fn finish_with(&mut self, answer: Option<&ExtractedAnswer>, source: AnswerSource) {
        self.final_answer = answer.map(|a| (a.text.clone(), source));
    }

    fn scoring_event(&mut self, stage: &str, u: Option<&Uncertainty<f64>>) {
        if let Some(u) = u {
            if u.method == Method::SingleToken {
                self.events.push(format!("{stage} answer scored on the single-token path"));
            }
        }
    }
}

/// The agent: a gateway, a tool backend and the loop settings.
pub struct Agent {
    gateway: Gateway,
    tools: Arc<dyn ToolBackend>,
    tool_stats: Arc<ToolStats>,
    snippets: SnippetPriority,
    config: AgentConfig,
    escalations: Option<Arc<EscalationQueue>>,
}

impl Agent {
    pub fn new(gateway: Gateway, tools: Arc<dyn ToolBackend>) -> Self {
        Self {
            gateway,
            tools,
            tool_stats: Arc::new(ToolStats::default()),
            snippets: SnippetPriority::default(),
            config: AgentConfig::default(),
            escalations: None,
        }
    }

    pub fn with_config(mut self, config: AgentConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_snippet_priority(mut self, priority: SnippetPriority) -> Self {
        self.snippets = priority;
        self
    }

    pub fn with_escalations(mut self, queue: Arc<EscalationQueue>) -> Self {
        self.escalations = Some(queue);
        self
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// Run-wide tool-call counters.
    pub fn tool_stats(&self) -> &ToolStats {
        &self.tool_stats
    }

    pub fn base_mode(&self, item: &QAItem) -> PromptMode {
        self.config.base_mode.unwrap_or_else(|| default_base_mode(item.dataset))
    }

    fn base_request(&self, item: &QAItem, prompt: String) -> CompletionRequest {
        CompletionRequest::greedy(prompt, RequestTag::new(&item.id, CallStage::Base))
            .with_stop(BASE_STOP)
            .with_max_tokens(self.config.max_tokens)
    }

    fn sampled(&self, req: &CompletionRequest, step: u32) -> CompletionRequest {
        let mut s = req.clone().sampled(self.config.sample_temperature, self.config.samples.max(1));
        s.tag = RequestTag::new(req.tag.episode.clone(), CallStage::Sampling).step(step).attempt(req.tag.attempt);
        s
    }

    /// Greedy Standard/CoT (or verbal) generation and its extracted answer.
    fn base(
        &self,
        ctx: &EpisodeCtx<'_>,
        req: &CompletionRequest,
        draft: &mut Draft,
    ) -> Result<(Option<ExtractedAnswer>, Completion), AgentError> {
        let c = ctx.complete(req)?;
        let answer = extract_answer(&c).map_err(|e| ctx.uncertainty(e))?;
        let mut step = Step::new(StepStage::Base, 0);
        step.generation = Some(c.text.clone());
        step.answer = answer.as_ref().map(|a| a.text.clone());
        draft.steps.push(step);
        Ok((answer, c))
    }

    /// Sampled answers for `req`; unparsable samples become `None`.
    fn sample_answers(
        &self,
        ctx: &EpisodeCtx<'_>,
        req: &CompletionRequest,
        step: u32,
        extract: impl Fn(&str) -> Option<String>,
        draft: &mut Draft,
    ) -> Result<Vec<Option<String>>, AgentError> {
        let batch = ctx.sample_batch(&self.sampled(req, step))?;
        let mut out = Vec::with_capacity(batch.len());
        for (i, c) in batch.iter().enumerate() {
            let answer = extract(&working_text(c));
            let mut s = Step::new(StepStage::Sampling, i as u32);
            s.generation = Some(c.text.clone());
            s.answer = answer.clone();
            draft.steps.push(s);
            out.push(answer);
        }
        Ok(out)
    }

    fn multi_uncertainty(
        &self,
        ctx: &EpisodeCtx<'_>,
        primary: &str,
        samples: &[Option<String>],
    ) -> Result<Uncertainty<f64>, AgentError> {
        let texts: Vec<&str> = samples.iter().map(|s| s.as_deref().unwrap_or("")).collect();
        estimate_multi_inference(primary, &texts, normalize_answer).map_err(|e| ctx.uncertainty(e))
    }

    fn score(
        &self,
        ctx: &EpisodeCtx<'_>,
        answer: &ExtractedAnswer,
        profile: &CalibrationProfile<f64>,
    ) -> Result<Option<Uncertainty<f64>>, AgentError> {
        answer
            .scored
            .as_ref()
            .map(|s| score_answer(s, profile.estimator, profile.weight_scope))
            .transpose()
            .map_err(|e| ctx.uncertainty(e))
    }

    /// Run one question under `strategy`.
    pub fn run_episode(&self, item: &QAItem, strategy: &Strategy) -> Result<EpisodeOutput, AgentError> {
        let ctx = EpisodeCtx::new(&item.id, &self.gateway);
        let mut draft = Draft::new();
        let prompts = PromptSet::for_dataset(item.dataset);
        match strategy {
            Strategy::Standard | Strategy::Cot => {
                let mode = if *strategy == Strategy::Standard { PromptMode::Standard } else { PromptMode::Cot };
                let req = self.base_request(item, prompts.base_prompt(mode, item));
                let (answer, _) = self.base(&ctx, &req, &mut draft)?;
                draft.finish_with(answer.as_ref(), AnswerSource::Base);
                draft.base = answer;
            }
            Strategy::SelfConsistency => {
                let req = self.base_request(item, prompts.base_prompt(self.base_mode(item), item));
                let extract = |t: &str| answer_text(t);
                let samples = self.sample_answers(&ctx, &req, 0, extract, &mut draft)?;
                if let Some(winner) = majority(&samples) {
                    draft.final_answer = Some((winner, AnswerSource::Base));
                }
            }
            Strategy::React { backoff } => {
                let mut session = self.session(item);
                let outcome = run_react(&ctx, &prompts, item, &mut session, self.config.max_steps, self.config.max_tokens)?;
                draft.tool_calls = outcome.tool_calls;
                draft.steps.extend(outcome.steps);
                draft.tool = outcome.answer;
                if draft.tool.is_some() {
                    let tool = draft.tool.clone();
                    draft.finish_with(tool.as_ref(), AnswerSource::Tool);
                } else if *backoff {
                    let req = self.base_request(item, prompts.base_prompt(self.base_mode(item), item));
                    let (answer, _) = self.base(&ctx, &req, &mut draft)?;
                    draft.finish_with(answer.as_ref(), AnswerSource::Backoff);
                    draft.base = answer;
                }
            }
            Strategy::Uala { profile, backoff, oracle } => {
                let gate = if profile.estimator == Method::MultiInference { Gate::Multi(profile) } else { Gate::Single(profile) };
                self.run_gated(&ctx, item, &prompts, gate, *backoff, *oracle, &mut draft)?;
            }
            Strategy::Verbal { confidence_threshold, backoff, oracle } => {
                self.run_gated(&ctx, item, &prompts, Gate::Verbal(*confidence_threshold), *backoff, *oracle, &mut draft)?;
            }
        }
        Ok(self.finalize(item, strategy, draft, ctx.tokens.get()))
    }

    fn session(&self, item: &QAItem) -> ToolSession {
        ToolSession::new(self.tools.clone(), grammar_for(item.dataset))
            .with_priority(self.snippets.clone())
            .with_stats(self.tool_stats.clone())
    }

    #[allow(clippy::too_many_arguments)]
    fn run_gated(
        &self,
        ctx: &EpisodeCtx<'_>,
        item: &QAItem,
        prompts: &PromptSet,
        gate: Gate<'_>,
        backoff: bool,
        oracle: OracleMode,
        draft: &mut Draft,
    ) -> Result<(), AgentError> {
        // Stage 1: base answer.
        let first = match gate {
            Gate::Single(profile) => {
                let req = self.base_request(item, prompts.base_prompt(self.base_mode(item), item));
                let (answer, _) = self.base(ctx, &req, draft)?;
                let u = match &answer {
                    Some(a) => self.score(ctx, a, profile)?,
                    None => None,
                };
                draft.scoring_event("base", u.as_ref());
                draft.base = answer;
                RoutingDecision::gate(DecisionStage::Base, u, profile.tau)
            }
            Gate::Multi(profile) => {
                let req = self.base_request(item, prompts.base_prompt(self.base_mode(item), item));
                let (answer, _) = self.base(ctx, &req, draft)?;
                let u = match &answer {
                    Some(a) => {
                        let samples = self.sample_answers(ctx, &req, 0, answer_text, draft)?;
                        Some(self.multi_uncertainty(ctx, &a.text, &samples)?)
                    }
                    None => None,
                };
                draft.base = answer;
                RoutingDecision::gate(DecisionStage::Base, u, profile.tau)
            }
            Gate::Verbal(threshold) => {
                let req = self.base_request(item, prompts.verbal_prompt(item));
                let (answer, c) = self.base(ctx, &req, draft)?;
                let text = working_text(&c);
                let confident = answer.is_some() && parse_verbal_confidence(&text).is_ok_and(|p| p >= threshold);
                if parse_verbal_confidence(&text).is_err() {
                    draft.events.push("verbalised confidence unparsable; escalated".into());
                }
                draft.base = answer;
                RoutingDecision {
                    stage: DecisionStage::Base,
                    uncertainty: Some(verbal_uncertainty(&text)),
                    tau: 1.0 - threshold,
                    outcome: if confident { Outcome::Accept } else { Outcome::Escalate },
                }
            }
        };
        draft.base_uncertainty = first.uncertainty;
        draft.decisions.push(first);
        if !first.escalated() {
            let base = draft.base.clone();
            draft.finish_with(base.as_ref(), AnswerSource::Base);
            return Ok(());
        }

        // Stage 2: tool loop.
        let mut session = self.session(item);
        let outcome = run_react(ctx, prompts, item, &mut session, self.config.max_steps, self.config.max_tokens)?;
        draft.tool_calls = outcome.tool_calls;
        draft.steps.extend(outcome.steps);
        draft.tool = outcome.answer;

        let tau = first.tau;
        let tool = draft.tool.clone();
        let second = match (&tool, &gate) {
            (None, _) => Some(RoutingDecision::gate(DecisionStage::Tool, None, tau)),
            (Some(_), Gate::Verbal(_)) => None,
            (Some(a), Gate::Single(profile)) => {
                let u = self.score(ctx, a, profile)?;
                draft.scoring_event("tool", u.as_ref());
                Some(RoutingDecision::gate(DecisionStage::Tool, u, tau))
            }
            (Some(a), Gate::Multi(_)) => {
                let site = outcome.finish.as_ref().expect("a tool answer comes from a Finish step");
                let u = self.resample_finish(ctx, item, a, site, draft)?;
                Some(RoutingDecision::gate(DecisionStage::Tool, Some(u), tau))
            }
        };
        if let Some(d) = second {
            draft.tool_uncertainty = d.uncertainty;
            draft.decisions.push(d);
        }
        match (&tool, second) {
            (Some(_), None) => draft.finish_with(tool.as_ref(), AnswerSource::Tool),
            (Some(_), Some(d)) if !d.escalated() => draft.finish_with(tool.as_ref(), AnswerSource::Tool),
            (Some(_), Some(_)) => self.consult_oracle(item, oracle, tau, draft, tool.as_ref())?,
            (None, _) => {
                let base = draft.base.clone();
                if backoff && base.is_some() {
                    draft.finish_with(base.as_ref(), AnswerSource::Backoff);
                } else if oracle != OracleMode::Off {
                    self.consult_oracle(item, oracle, tau, draft, None)?;
                }
            }
        }
        Ok(())
    }

    /// Re-sample the step that produced `Finish` and score the tool answer by
    /// disagreement with it.
    fn resample_finish(
        &self,
        ctx: &EpisodeCtx<'_>,
        item: &QAItem,
        answer: &ExtractedAnswer,
        site: &FinishSite,
        draft: &mut Draft,
    ) -> Result<Uncertainty<f64>, AgentError> {
        let grammar = grammar_for(item.dataset);
        let extract = |t: &str| sampled_finish(t, site, grammar);
        let samples = self.sample_answers(ctx, &site.request, site.request.tag.step, extract, draft)?;
        self.multi_uncertainty(ctx, &answer.text, &samples)
    }

    /// Stage 3. With the oracle off the tool answer (possibly none) stands.
    fn consult_oracle(
        &self,
        item: &QAItem,
        oracle: OracleMode,
        tau: f64,
        draft: &mut Draft,
        fallback: Option<&ExtractedAnswer>,
    ) -> Result<(), AgentError> {
        let answer = match oracle {
            OracleMode::Off => None,
            OracleMode::Simulated => {
                if item.gold.trim().is_empty() {
                    return Err(AgentError::Config(format!("simulated oracle needs a gold answer for {}", item.id)));
                }
                Some(item.gold.clone())
            }
            OracleMode::Interactive => {
                let queue = self
                    .escalations
                    .as_ref()
                    .ok_or_else(|| AgentError::Config("interactive oracle needs an escalation queue".into()))?;
                let view = EscalationView {
                    episode_id: item.id.clone(),
                    question: item.prompt_text(),
                    base_answer: draft.base.as_ref().map(|a| a.text.clone()),
                    base_uncertainty: draft.base_uncertainty,
                    tool_answer: draft.tool.as_ref().map(|a| a.text.clone()),
                    tool_uncertainty: draft.tool_uncertainty,
                    tau,
                    trajectory: draft.steps.clone(),
                    sequence: 0,
                };
                let timeout = Duration::from_secs(self.config.oracle_timeout_secs);
                let answer = queue.escalate_and_wait(view, timeout);
                if answer.is_none() {
                    tracing::warn!(episode = %item.id, "oracle timed out; keeping the tool answer");
                    draft.events.push("oracle timed out; kept the tool answer".into());
                }
                answer
            }
        };
        match answer {
            Some(text) => {
                let mut step = Step::new(StepStage::Oracle, 0);
                step.answer = Some(text.clone());
                draft.steps.push(step);
                draft.final_answer = Some((text, AnswerSource::Oracle));
            }
            None => draft.finish_with(fallback, AnswerSource::Tool),
        }
        Ok(())
    }

    fn finalize(&self, item: &QAItem, strategy: &Strategy, draft: Draft, output_tokens: u64) -> EpisodeOutput {
        let (final_answer, answer_source) = match draft.final_answer {
            Some((a, s)) => (Some(a), Some(s)),
            None => (None, None),
        };
        let record = EpisodeRecord {
            id: item.id.clone(),
            dataset: item.dataset,
            method: strategy.label(),
            gold: item.gold.clone(),
            em_correct: exact_match(final_answer.as_deref(), &item.gold),
            final_answer,
            answer_source,
            decisions: draft.decisions,
            tool_calls: draft.tool_calls,
            output_tokens,
            base_em_correct: draft.base.as_ref().map(|a| exact_match(Some(&a.text), &item.gold)),
            base_answer: draft.base.map(|a| a.text),
            base_uncertainty: draft.base_uncertainty,
            tool_answer: draft.tool.map(|a| a.text),
            tool_uncertainty: draft.tool_uncertainty,
            events: draft.events,
        };
        EpisodeOutput { record, steps: draft.steps }
    }

    /// Base answer and its uncertainty for one training question, as the
    /// calibration set needs it.
    pub fn calibration_outcome(
        &self,
        item: &QAItem,
        estimator: Method,
        scope: WeightScope,
    ) -> Result<BaseOutcome<f64>, AgentError> {
        let ctx = EpisodeCtx::new(&item.id, &self.gateway);
        let mut draft = Draft::new();
        let prompts = PromptSet::for_dataset(item.dataset);
        let req = self.base_request(item, prompts.base_prompt(self.base_mode(item), item));
        let (answer, _) = self.base(&ctx, &req, &mut draft)?;
        let Some(answer) = answer else {
            return Ok(BaseOutcome { answer: None, uncertainty: None });
        };
        let uncertainty = if estimator == Method::MultiInference {
            let samples = self.sample_answers(&ctx, &req, 0, answer_text, &mut draft)?;
            Some(self.multi_uncertainty(&ctx, &answer.text, &samples)?)
        } else {
            answer.scored.as_ref().map(|s| score_answer(s, estimator, scope)).transpose().map_err(|e| ctx.uncertainty(e))?
        };
        Ok(BaseOutcome { answer: Some(answer.text), uncertainty })
    }
}

fn answer_text(text: &str) -> Option<String> {
    super::extract::answer_range(text).map(|r| text[r].to_string())
}

/// Most frequent normalised answer; ties go to the class sampled first.
fn majority(samples: &[Option<String>]) -> Option<String> {
    let mut classes: HashMap<String, (usize, usize)> = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        if let Some(s) = s {
            let e = classes.entry(normalize_answer(s)).or_insert((0, i));
            e.0 += 1;
        }
    }
    let (_, first) = classes.values().max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))?;
    samples[*first].clone()
}

/// Live counters for a run in progress.
#[derive(Debug, Default)]
pub struct RunMonitor {
    total: AtomicU64,
    completed: AtomicU64,
    correct: AtomicU64,
    escalated: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunProgress {
    pub completed: u64,
    /// Episodes not yet finished.
    pub pending: u64,
    /// Finished episodes that reached the oracle stage.
    pub escalated: u64,
    pub em_so_far: f64,
}

impl RunMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    fn start(&self, total: usize) {
        self.total.fetch_add(total as u64, Ordering::SeqCst);
    }

    fn finish(&self, record: &EpisodeRecord) {
        if record.em_correct {
            self.correct.fetch_add(1, Ordering::SeqCst);
        }
        if record.decisions.iter().filter(|d| d.escalated()).count() >= 2 {
            self.escalated.fetch_add(1, Ordering::SeqCst);
        }
        self.completed.fetch_add(1, Ordering::SeqCst);
    }

    pub fn progress(&self) -> RunProgress {
        let completed = self.completed.load(Ordering::SeqCst);
        let correct = self.correct.load(Ordering::SeqCst);
        let em = if completed == 0 { 0.0 } else { (1000.0 * correct as f64 / completed as f64).round() / 10.0 };
        RunProgress {
            completed,
            pending: self.total.load(Ordering::SeqCst).saturating_sub(completed),
            escalated: self.escalated.load(Ordering::SeqCst),
            em_so_far: em,
        }
    }
}

/// Run every item on `workers` threads. Output order follows `items`; the
/// first failing episode aborts the run.
pub fn run_episodes(
    agent: &Agent,
    items: &[QAItem],
    strategy: &Strategy,
    workers: usize,
    monitor: Option<&RunMonitor>,
) -> Result<Vec<EpisodeOutput>, AgentError> {
    strategy.validate()?;
    if strategy.oracle() == OracleMode::Interactive && agent.escalations.is_none() {
        return Err(AgentError::Config("interactive oracle needs an escalation queue".into()));
    }
    if let Some(m) = monitor {
        m.start(items.len());
    }
    let slots: Vec<Mutex<Option<EpisodeOutput>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let failure: Mutex<Option<AgentError>> = Mutex::new(None);
    let abort = AtomicBool::new(false);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(items.len().max(1)) {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                match agent.run_episode(item, strategy) {
                    Ok(out) => {
                        if let Some(m) = monitor {
                            m.finish(&out.record);
                        }
                        *slots[i].lock().unwrap() = Some(out);
                    }
                    Err(e) => {
                        abort.store(true, Ordering::SeqCst);
                        failure.lock().unwrap().get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(slots.into_iter().map(|s| s.into_inner().unwrap().expect("every item ran")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[Option<&str>]) -> Vec<Option<String>> {
        v.iter().map(|x| x.map(String::from)).collect()
    }

    #[test]
    fn majority_vote() {
        let five_four = s(&[Some("A"), Some("B"), Some("A"), Some("B"), Some("A"), Some("B"), Some("A"), Some("B"), Some("A")]);
        assert_eq!(majority(&five_four).as_deref(), Some("A"));
        assert_eq!(majority(&s(&[Some("Paris")])).as_deref(), Some("Paris"));
        let tie = s(&[None, Some("B"), Some("A"), Some("b."), Some("A"), Some("B"), Some("A"), Some("B"), Some("A")]);
        assert_eq!(majority(&tie).as_deref(), Some("B"));
        assert_eq!(majority(&s(&[None, None])), None);
    }

    #[test]
    fn labels() {
        let p = CalibrationProfile::fixed(Method::Entropy, 0.5);
        let uala = Strategy::Uala { profile: p.clone(), backoff: true, oracle: OracleMode::Off };
        assert_eq!(uala.label(), "uala-s+backoff");
        let m = Strategy::Uala {
            profile: CalibrationProfile::fixed(Method::MultiInference, 0.3),
            backoff: false,
            oracle: OracleMode::Simulated,
        };
        assert_eq!(m.label(), "uala-m+oracle");
        assert_eq!(Strategy::React { backoff: true }.label(), "react+backoff");
        assert!(Strategy::Verbal { confidence_threshold: 1.0, backoff: false, oracle: OracleMode::Off }.validate().is_err());
    }
}
