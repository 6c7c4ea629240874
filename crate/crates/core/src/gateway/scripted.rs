use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CallStage, Completion, CompletionProvider, CompletionRequest, FinishReason, GatewayError};

/// Whitespace-prefixed word pieces and single punctuation marks.
/// The pieces always concatenate back to the input.
pub fn tokenize(text: &str) -> Vec<String> {
    static PIECES: OnceLock<Regex> = OnceLock::new();
    let re = PIECES.get_or_init(|| Regex::new(r"\s*(?:[\p{L}\p{N}_]+|[^\p{L}\p{N}_\s])|\s+").unwrap());
    re.find_iter(text).map(|m| m.as_str().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScriptKey {
    pub episode: String,
    pub stage: CallStage,
    #[serde(default)]
    pub step: u32,
    #[serde(default)]
    pub attempt: u32,
    #[serde(default)]
    pub sample: u32,
}

impl ScriptKey {
    pub fn new(episode: impl Into<String>, stage: CallStage, step: u32, attempt: u32, sample: u32) -> Self {
        Self { episode: episode.into(), stage, step, attempt, sample }
    }

    fn of(req: &CompletionRequest) -> Self {
        Self {
            episode: req.tag.episode.clone(),
            stage: req.tag.stage,
            step: req.tag.step,
            attempt: req.tag.attempt,
            sample: req.sample_index,
        }
    }
}

impl fmt::Display for ScriptKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/step {}/attempt {}/sample {}",
            self.episode,
            self.stage.as_str(),
            self.step,
            self.attempt,
            self.sample
        )
    }
}

/// One line of a script file.
///
/// `tokens` defaults to [`tokenize`]`(text)`; `token_logprobs` defaults to
/// `logprob` (itself defaulting to 0) for every token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(flatten)]
    pub key: ScriptKey,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<FinishReason>,
}

impl ScriptEntry {
    fn into_completion(self) -> Result<(ScriptKey, Completion), GatewayError> {
        let tokens = self.tokens.unwrap_or_else(|| tokenize(&self.text));
        if tokens.concat() != self.text {
            return Err(GatewayError::Format(format!("{}: tokens do not concatenate to text", self.key)));
        }
        let lps = match self.token_logprobs {
            Some(lps) if lps.len() == tokens.len() => lps,
            Some(lps) => {
                return Err(GatewayError::Format(format!(
                    "{}: {} tokens but {} log-probabilities",
                    self.key,
                    tokens.len(),
                    lps.len()
                )))
            }
            None => vec![self.logprob.unwrap_or(0.0); tokens.len()],
        };
        let mut completion = Completion::from_tokens(tokens, lps);
        completion.finish_reason = self.finish_reason.unwrap_or(FinishReason::Stop);
        Ok((self.key, completion))
    }
}

/// Canned completions looked up by the request tag; identical requests get
/// identical answers.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    entries: HashMap<ScriptKey, Completion>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: ScriptKey, completion: Completion) -> &mut Self {
        self.entries.insert(key, completion);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ScriptEntry>) -> Result<Self, GatewayError> {
        let mut p = Self::new();
        for e in entries {
            let (k, c) = e.into_completion()?;
            p.entries.insert(k, c);
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let file = std::fs::File::open(path)?;
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str::<ScriptEntry>(&line)
                    .map_err(|e| GatewayError::Format(format!("{}:{}: {e}", path.display(), n + 1)))?,
            );
        }
        Self::from_entries(entries)
    }
}

impl CompletionProvider for ScriptedProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        let key = ScriptKey::of(req);
        self.entries.get(&key).cloned().ok_or(GatewayError::ScriptMiss(key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_round_trips() {
        for s in ["Answer: Richard Nixon", "  Finish[1,800 to 7,000 ft]\n", "", "Ünïcode wörds 42."] {
            assert_eq!(tokenize(s).concat(), s);
        }
        assert_eq!(tokenize("Answer: C"), vec!["Answer", ":", " C"]);
    }

    #[test]
    fn entry_defaults() {
        let e: ScriptEntry =
            serde_json::from_str(r#"{"episode":"Q1","stage":"base","text":"Answer: yes","logprob":-0.2}"#).unwrap();
        let (k, c) = e.into_completion().unwrap();
        assert_eq!(k, ScriptKey::new("Q1", CallStage::Base, 0, 0, 0));
        assert_eq!(c.token_logprobs, vec![-0.2; 3]);
        assert_eq!(c.output_token_count, 3);
    }

    #[test]
    fn entry_rejects_misaligned_tokens() {
        let e: ScriptEntry = serde_json::from_str(
            r#"{"episode":"Q1","stage":"base","text":"ab","tokens":["a","c"]}"#,
        )
        .unwrap();
        assert!(e.into_completion().is_err());
    }
}
