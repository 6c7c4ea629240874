//! Text-completion backends behind one interface, with output-token accounting.
//!
//! Providers: [`ScriptedProvider`] (canned completions keyed by episode, stage
//! and step), [`ReplayProvider`] / [`RecordingProvider`] (line-delimited JSON
//! fixtures keyed by request fingerprint) and [`LiveProvider`] (an HTTP
//! completion endpoint that returns token log-probabilities).

mod live;
mod replay;
mod scripted;

pub use live::{LiveConfig, LiveProvider};
pub use replay::{fingerprint, FixtureRecord, RecordingProvider, ReplayProvider};
pub use scripted::{tokenize, ScriptEntry, ScriptKey, ScriptedProvider};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("capability error: {0}")]
    Capability(String),
    #[error("replay fixture has no entry for fingerprint {fingerprint}")]
    FixtureMiss { fingerprint: String },
    #[error("script has no completion for {0}")]
    ScriptMiss(ScriptKey),
    #[error("batch partially failed; succeeded indices {succeeded:?}: {source}")]
    PartialBatch {
        succeeded: Vec<usize>,
        #[source]
        source: Box<GatewayError>,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("fixture i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixture format: {0}")]
    Format(String),
}

/// Accounting bucket for a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallStage {
    Base,
    Sampling,
    ToolLoop,
}

impl CallStage {
    pub fn as_str(self) -> &'static str {
        match self {
            CallStage::Base => "base",
            CallStage::Sampling => "sampling",
            CallStage::ToolLoop => "tool_loop",
        }
    }
}

/// Where in an episode a request comes from. Scripted providers key on it;
/// the live endpoint never sees it and it is not part of the replay fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestTag {
    pub episode: String,
    pub stage: CallStage,
    pub step: u32,
    pub attempt: u32,
}

impl RequestTag {
    pub fn new(episode: impl Into<String>, stage: CallStage) -> Self {
        Self { episode: episode.into(), stage, step: 0, attempt: 0 }
    }

    pub fn step(mut self, step: u32) -> Self {
        self.step = step;
        self
    }

    pub fn attempt(mut self, attempt: u32) -> Self {
        self.attempt = attempt;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub n_samples: u32,
    pub stop: Vec<String>,
    pub want_logprobs: bool,
    /// Index of this sample inside a batch; part of the replay fingerprint.
    pub sample_index: u32,
    pub tag: RequestTag,
}

impl CompletionRequest {
    /// Greedy single completion with log-probabilities.
    pub fn greedy(prompt: impl Into<String>, tag: RequestTag) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: 256,
            temperature: 0.0,
            n_samples: 1,
            stop: Vec::new(),
            want_logprobs: true,
            sample_index: 0,
            tag,
        }
    }

    pub fn with_stop<I, S>(mut self, stop: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.stop = stop.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn sampled(mut self, temperature: f64, n_samples: u32) -> Self {
        self.temperature = temperature;
        self.n_samples = n_samples;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} < 0", self.temperature)));
        }
        if self.n_samples == 0 {
            return Err(GatewayError::InvalidRequest("n_samples must be at least 1".into()));
        }
        if self.temperature == 0.0 && self.n_samples != 1 {
            return Err(GatewayError::InvalidRequest("greedy decoding implies n_samples = 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub tokens: Vec<String>,
    pub token_logprobs: Vec<f64>,
    pub finish_reason: FinishReason,
    pub output_token_count: u64,
}

impl Completion {
    /// A completion whose tokens are given explicitly; the text is their concatenation.
    pub fn from_tokens(tokens: Vec<String>, token_logprobs: Vec<f64>) -> Self {
        let text = tokens.concat();
        let output_token_count = tokens.len() as u64;
        Self { text, tokens, token_logprobs, finish_reason: FinishReason::Stop, output_token_count }
    }

    /// Split `text` with [`tokenize`] and assign every token the same log-probability.
    pub fn uniform(text: &str, logprob: f64) -> Self {
        let tokens = tokenize(text);
        let lps = vec![logprob; tokens.len()];
        Self::from_tokens(tokens, lps)
    }
}

pub trait CompletionProvider: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Arc<P> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        (**self).complete(req)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageUsage {
    pub output_tokens: u64,
    pub requests: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageReport {
    pub total_output_tokens: u64,
    pub total_requests: u64,
    pub base: StageUsage,
    pub sampling: StageUsage,
    pub tool_loop: StageUsage,
}

#[derive(Debug, Default)]
struct UsageMeter {
    tokens: [AtomicU64; 3],
    requests: [AtomicU64; 3],
}

impl UsageMeter {
    fn slot(stage: CallStage) -> usize {
        match stage {
            CallStage::Base => 0,
            CallStage::Sampling => 1,
            CallStage::ToolLoop => 2,
        }
    }

    fn record(&self, stage: CallStage, tokens: u64) {
        let i = Self::slot(stage);
        self.tokens[i].fetch_add(tokens, Ordering::Relaxed);
        self.requests[i].fetch_add(1, Ordering::Relaxed);
    }

    fn stage(&self, stage: CallStage) -> StageUsage {
        let i = Self::slot(stage);
        StageUsage {
            output_tokens: self.tokens[i].load(Ordering::Relaxed),
            requests: self.requests[i].load(Ordering::Relaxed),
        }
    }
}

/// A provider plus shared usage counters.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn CompletionProvider>,
    usage: Arc<UsageMeter>,
}

impl Gateway {
    pub fn new(provider: Arc<dyn CompletionProvider>) -> Self {
        Self { provider, usage: Arc::new(UsageMeter::default()) }
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        req.validate()?;
        let completion = self.provider.complete(req)?;
        if req.want_logprobs && completion.tokens.len() != completion.token_logprobs.len() {
            return Err(GatewayError::Capability(format!(
                "{} tokens but {} log-probabilities",
                completion.tokens.len(),
                completion.token_logprobs.len()
            )));
        }
        self.usage.record(req.tag.stage, completion.output_token_count);
        Ok(completion)
    }

    /// `req.n_samples` completions in order, one request per sample index.
    pub fn sample_batch(&self, req: &CompletionRequest) -> Result<Vec<Completion>, GatewayError> {
        req.validate()?;
        let mut out = Vec::with_capacity(req.n_samples as usize);
        for i in 0..req.n_samples {
            let mut single = req.clone();
            single.n_samples = 1;
            single.sample_index = i;
            match self.complete(&single) {
                Ok(c) => out.push(c),
                Err(e) if out.is_empty() && req.n_samples == 1 => return Err(e),
                Err(e) => {
                    return Err(GatewayError::PartialBatch {
                        succeeded: (0..out.len()).collect(),
                        source: Box::new(e),
                    })
                }
            }
        }
        Ok(out)
    }

    pub fn usage_report(&self) -> UsageReport {
        let base = self.usage.stage(CallStage::Base);
        let sampling = self.usage.stage(CallStage::Sampling);
        let tool_loop = self.usage.stage(CallStage::ToolLoop);
        UsageReport {
            total_output_tokens: base.output_tokens + sampling.output_tokens + tool_loop.output_tokens,
            total_requests: base.requests + sampling.requests + tool_loop.requests,
            base,
            sampling,
            tool_loop,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted() -> ScriptedProvider {
        let mut p = ScriptedProvider::new();
        p.insert(ScriptKey::new("Q1", CallStage::Base, 0, 0, 0), Completion::uniform("Answer: Richard Nixon", -0.1));
        for i in 0..9 {
            let text = if i < 6 { "Answer: yes" } else { "Answer: no" };
            p.insert(ScriptKey::new("Q1", CallStage::Sampling, 0, 0, i), Completion::uniform(text, -0.5));
        }
        p
    }

    #[test]
    fn fresh_gateway_reports_zero() {
        let g = Gateway::new(Arc::new(scripted()));
        assert_eq!(g.usage_report(), UsageReport::default());
    }

    #[test]
    fn scripted_is_deterministic_and_counted() {
        let g = Gateway::new(Arc::new(scripted()));
        let req = CompletionRequest::greedy("prompt", RequestTag::new("Q1", CallStage::Base));
        let a = g.complete(&req).unwrap();
        let b = g.complete(&req).unwrap();
        assert_eq!(a, b);
        let report = g.usage_report();
        assert_eq!(report.total_output_tokens, 2 * a.output_token_count);
        assert_eq!(report.base.requests, 2);
    }

    #[test]
    fn counts_a_twelve_token_completion() {
        let mut p = ScriptedProvider::new();
        let tokens: Vec<String> = (0..12).map(|i| format!(" t{i}")).collect();
        p.insert(ScriptKey::new("Q", CallStage::Base, 0, 0, 0), Completion::from_tokens(tokens, vec![-0.1; 12]));
        let g = Gateway::new(Arc::new(p));
        g.complete(&CompletionRequest::greedy("x", RequestTag::new("Q", CallStage::Base))).unwrap();
        assert_eq!(g.usage_report().total_output_tokens, 12);
    }

    #[test]
    fn batch_preserves_order() {
        let g = Gateway::new(Arc::new(scripted()));
        let req = CompletionRequest::greedy("p", RequestTag::new("Q1", CallStage::Sampling)).sampled(0.7, 9);
        let batch = g.sample_batch(&req).unwrap();
        assert_eq!(batch.len(), 9);
        assert_eq!(batch[0].text, "Answer: yes");
        assert_eq!(batch[8].text, "Answer: no");
        assert_eq!(g.usage_report().sampling.requests, 9);
    }

    #[test]
    fn greedy_batch_of_one_equals_complete() {
        let g = Gateway::new(Arc::new(scripted()));
        let req = CompletionRequest::greedy("p", RequestTag::new("Q1", CallStage::Base));
        assert_eq!(g.sample_batch(&req).unwrap(), vec![g.complete(&req).unwrap()]);
    }

    #[test]
    fn partial_batch_lists_successes() {
        let g = Gateway::new(Arc::new(scripted()));
        let req = CompletionRequest::greedy("p", RequestTag::new("Q1", CallStage::Sampling)).sampled(0.7, 12);
        match g.sample_batch(&req) {
            Err(GatewayError::PartialBatch { succeeded, .. }) => assert_eq!(succeeded, (0..9).collect::<Vec<_>>()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn greedy_with_many_samples_is_rejected() {
        let mut req = CompletionRequest::greedy("p", RequestTag::new("Q1", CallStage::Base));
        req.n_samples = 3;
        assert!(matches!(req.validate(), Err(GatewayError::InvalidRequest(_))));
    }
}
