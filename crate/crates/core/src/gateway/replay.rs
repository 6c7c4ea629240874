use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Completion, CompletionProvider, CompletionRequest, FinishReason, GatewayError};
use crate::canonical::{sha256_hex, to_canonical_string};

#[derive(Serialize)]
struct FingerprintInput<'a> {
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    stop: &'a [String],
    sample_index: u32,
}

/// SHA-256 over the canonical JSON of prompt, decoding parameters and sample index.
pub fn fingerprint(req: &CompletionRequest) -> String {
    let input = FingerprintInput {
        prompt: &req.prompt,
        temperature: req.temperature,
        max_tokens: req.max_tokens,
        stop: &req.stop,
        sample_index: req.sample_index,
    };
    sha256_hex(to_canonical_string(&input).expect("plain data serialises").as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
    pub sample_index: u32,
    pub prompt_sha256: String,
    /// Last line of the prompt, for humans reading the fixture.
    pub prompt_tail: String,
}

/// One replay fixture line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub fingerprint: String,
    pub request: RequestSummary,
    pub text: String,
    pub tokens: Vec<String>,
    pub token_logprobs: Vec<f64>,
    pub finish_reason: FinishReason,
}

impl FixtureRecord {
    pub fn new(req: &CompletionRequest, completion: &Completion) -> Self {
        let tail = req.prompt.trim_end_matches('\n').rsplit('\n').next().unwrap_or("");
        let tail: String = tail.chars().rev().take(120).collect::<Vec<_>>().into_iter().rev().collect();
        Self {
            fingerprint: fingerprint(req),
            request: RequestSummary {
                max_tokens: req.max_tokens,
                temperature: req.temperature,
                stop: req.stop.clone(),
                sample_index: req.sample_index,
                prompt_sha256: sha256_hex(req.prompt.as_bytes()),
                prompt_tail: tail,
            },
            text: completion.text.clone(),
            tokens: completion.tokens.clone(),
            token_logprobs: completion.token_logprobs.clone(),
            finish_reason: completion.finish_reason,
        }
    }

    pub fn completion(&self) -> Completion {
        Completion {
            text: self.text.clone(),
            tokens: self.tokens.clone(),
            token_logprobs: self.token_logprobs.clone(),
            finish_reason: self.finish_reason,
            output_token_count: self.tokens.len() as u64,
        }
    }

    pub fn to_line(&self) -> String {
        to_canonical_string(self).expect("plain data serialises")
    }
}

pub(crate) fn read_records(path: &Path) -> Result<Vec<FixtureRecord>, GatewayError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| GatewayError::Format(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

/// Serves completions from a recorded fixture; a miss is an error, never a fallback.
#[derive(Debug, Clone, Default)]
pub struct ReplayProvider {
    entries: HashMap<String, Completion>,
}

impl ReplayProvider {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::from_records(read_records(path)?))
    }

    pub fn from_records(records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        Self { entries: records.into_iter().map(|r| (r.fingerprint.clone(), r.completion())).collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl CompletionProvider for ReplayProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        let fp = fingerprint(req);
        self.entries.get(&fp).cloned().ok_or(GatewayError::FixtureMiss { fingerprint: fp })
    }
}

/// Passes requests through and keeps every request/response pair for [`save`](Self::save).
pub struct RecordingProvider<P> {
    inner: P,
    records: Mutex<BTreeMap<String, FixtureRecord>>,
}

impl<P: CompletionProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, records: Mutex::new(BTreeMap::new()) }
    }

    pub fn records(&self) -> Vec<FixtureRecord> {
        self.records.lock().unwrap().values().cloned().collect()
    }

    /// Write records sorted by fingerprint so fixtures diff cleanly.
    pub fn save(&self, path: &Path) -> Result<usize, GatewayError> {
        let records = self.records();
        let mut out = std::fs::File::create(path)?;
        for r in &records {
            writeln!(out, "{}", r.to_line())?;
        }
        Ok(records.len())
    }
}

impl<P: CompletionProvider> CompletionProvider for RecordingProvider<P> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        let completion = self.inner.complete(req)?;
        let record = FixtureRecord::new(req, &completion);
        self.records.lock().unwrap().insert(record.fingerprint.clone(), record);
        Ok(completion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{CallStage, RequestTag, ScriptKey, ScriptedProvider};

    fn req(prompt: &str) -> CompletionRequest {
        CompletionRequest::greedy(prompt, RequestTag::new("Q1", CallStage::Base)).with_stop(["\nQuestion:"])
    }

    #[test]
    fn fingerprint_ignores_tag_but_not_sample_index() {
        let a = req("hello");
        let mut b = a.clone();
        b.tag.episode = "other".into();
        assert_eq!(fingerprint(&a), fingerprint(&b));
        b.sample_index = 1;
        assert_ne!(fingerprint(&a), fingerprint(&b));
        let mut c = a.clone();
        c.temperature = 0.7;
        assert_ne!(fingerprint(&a), fingerprint(&c));
    }

    #[test]
    fn fingerprint_is_stable() {
        // canonical input: {"max_tokens":256,"prompt":"hello","sample_index":0,"stop":["\nQuestion:"],"temperature":0.0}
        let expected = sha256_hex(
            br#"{"max_tokens":256,"prompt":"hello","sample_index":0,"stop":["\nQuestion:"],"temperature":0.0}"#,
        );
        assert_eq!(fingerprint(&req("hello")), expected);
    }

    #[test]
    fn record_then_replay_is_identity() {
        let mut script = ScriptedProvider::new();
        script.insert(ScriptKey::new("Q1", CallStage::Base, 0, 0, 0), Completion::uniform("Answer: Paris", -0.3));
        let rec = RecordingProvider::new(script);
        let original = rec.complete(&req("prompt text")).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.jsonl");
        assert_eq!(rec.save(&path).unwrap(), 1);
        let line = std::fs::read_to_string(&path).unwrap();
        assert!(line.starts_with("{\"fingerprint\":"), "{line}");

        let replay = ReplayProvider::load(&path).unwrap();
        assert_eq!(replay.complete(&req("prompt text")).unwrap(), original);
        assert!(matches!(replay.complete(&req("other")), Err(GatewayError::FixtureMiss { .. })));
    }
}
