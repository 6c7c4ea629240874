//! Prompting modes, the ReAct loop and the uncertainty-gated control flow.
//!
//! An episode runs up to three stages: a base Standard/CoT answer, a ReAct
//! tool loop when the base answer is too uncertain, and an oracle when the
//! tool answer is too uncertain as well. Every episode produces an
//! [`EpisodeRecord`] and the ordered [`Step`]s of its trajectory.

mod episode;
mod extract;
mod oracle;
mod prompts;
mod react;
mod record;

pub use episode::{run_episodes, Agent, AgentConfig, EpisodeOutput, RunMonitor, RunProgress, Strategy};
pub use extract::{answer_range, extract_answer, extract_span, score_answer, ExtractedAnswer};
pub use oracle::{EscalationQueue, EscalationView, OracleMode};
pub use prompts::{default_base_mode, grammar_for, PromptSet, VERBAL_INSTRUCTION};
pub use react::ReactOutcome;
pub use record::{
    write_trajectory_log, AnswerSource, DecisionStage, EpisodeRecord, Outcome, RoutingDecision, Step, StepStage,
    SCHEMA_VERSION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;
use crate::tools::ToolError;
use crate::uncertainty::UncertaintyError;

/// How the base answer is elicited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Standard,
    Cot,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::Standard => "standard",
            PromptMode::Cot => "cot",
        }
    }
}

impl std::str::FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard" => Ok(PromptMode::Standard),
            "cot" => Ok(PromptMode::Cot),
            other => Err(format!("unknown prompt mode `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("episode {episode}: {source}")]
    Gateway {
        episode: String,
        #[source]
        source: GatewayError,
    },
    #[error("episode {episode}: {source}")]
    Tool {
        episode: String,
        #[source]
        source: ToolError,
    },
    #[error("episode {episode}: {source}")]
    Uncertainty {
        episode: String,
        #[source]
        source: UncertaintyError,
    },
    #[error("configuration error: {0}")]
    Config(String),
}
