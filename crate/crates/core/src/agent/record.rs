use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::canonical::to_canonical_string;
use crate::eval::Dataset;
use crate::tools::{Observation, ToolAction};
use crate::uncertainty::Uncertainty;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStage {
    Base,
    /// Temperature-sampled generations (multi-inference scoring, self-consistency).
    Sampling,
    ToolLoop,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub stage: StepStage,
    pub index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ToolAction>,
    /// The action text as generated, kept when it failed to parse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

impl Step {
    pub fn new(stage: StepStage, index: u32) -> Self {
        Self {
            stage,
            index,
            generation: None,
            thought: None,
            action: None,
            raw_action: None,
            observation: None,
            answer: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionStage {
    Base,
    Tool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accept,
    Escalate,
}

/// One accept/escalate gate. A missing uncertainty (no answer, or no
/// log-probabilities) always escalates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub stage: DecisionStage,
    pub uncertainty: Option<Uncertainty<f64>>,
    pub tau: f64,
    pub outcome: Outcome,
}

impl RoutingDecision {
    pub fn gate(stage: DecisionStage, uncertainty: Option<Uncertainty<f64>>, tau: f64) -> Self {
        let outcome = match uncertainty {
            Some(u) if !crate::calibration::should_escalate(u.value, tau) => Outcome::Accept,
            _ => Outcome::Escalate,
        };
        Self { stage, uncertainty, tau, outcome }
    }

    pub fn escalated(&self) -> bool {
        self.outcome == Outcome::Escalate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSource {
    Base,
    Tool,
    Backoff,
    Oracle,
}

impl AnswerSource {
    pub fn as_str(self) -> &'static str {
        match self {
            AnswerSource::Base => "base",
            AnswerSource::Tool => "tool",
            AnswerSource::Backoff => "backoff",
            AnswerSource::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub id: String,
    pub dataset: Dataset,
    pub method: String,
    pub gold: String,
    pub final_answer: Option<String>,
    /// `None` exactly when `final_answer` is `None`.
    pub answer_source: Option<AnswerSource>,
    pub em_correct: bool,
    pub decisions: Vec<RoutingDecision>,
    pub tool_calls: u32,
    pub output_tokens: u64,
    pub base_answer: Option<String>,
    pub base_uncertainty: Option<Uncertainty<f64>>,
    pub base_em_correct: Option<bool>,
    pub tool_answer: Option<String>,
    pub tool_uncertainty: Option<Uncertainty<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<String>,
}

impl EpisodeRecord {
    pub fn stage1_escalated(&self) -> bool {
        self.decisions.iter().any(|d| d.stage == DecisionStage::Base && d.escalated())
    }
}

/// Write the line-delimited trajectory log: an optional header line, then for
/// each episode its step lines followed by its record line. Every line is
/// canonical JSON.
pub fn write_trajectory_log<'a>(
    path: &Path,
    header: Option<&Value>,
    episodes: impl IntoIterator<Item = (&'a EpisodeRecord, &'a [Step])>,
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let line = |v: Value| to_canonical_string(&v).map_err(std::io::Error::other);
    if let Some(h) = header {
        writeln!(out, "{}", line(json!({"kind": "run", "schema_version": SCHEMA_VERSION, "run": h}))?)?;
    }
    for (record, steps) in episodes {
        for step in steps {
            writeln!(
                out,
                "{}",
                line(json!({"kind": "step", "schema_version": SCHEMA_VERSION, "episode_id": record.id, "step": step}))?
            )?;
        }
        writeln!(out, "{}", line(json!({"kind": "episode", "schema_version": SCHEMA_VERSION, "record": record}))?)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::Method;

    #[test]
    fn boundary_accepts() {
        let u = Some(Uncertainty::new(0.5, Method::Entropy));
        assert_eq!(RoutingDecision::gate(DecisionStage::Base, u, 0.5).outcome, Outcome::Accept);
        let u = Some(Uncertainty::new(0.5000001, Method::Entropy));
        assert_eq!(RoutingDecision::gate(DecisionStage::Base, u, 0.5).outcome, Outcome::Escalate);
        assert_eq!(RoutingDecision::gate(DecisionStage::Base, None, 10.0).outcome, Outcome::Escalate);
    }
}
