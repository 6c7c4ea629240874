//! External-world actions for the tool loop.
//!
//! A [`ToolSession`] lives for one trajectory: it holds the currently loaded
//! Wikipedia page (for `Lookup`) and counts executed tool calls. Backends are
//! shared between sessions.

mod action;
mod backend;
mod live;
mod session;

pub use action::{parse_action, render_action, ActionKind, Grammar, ToolAction};
pub use backend::{MockBackend, RecordingToolBackend, ReplayToolBackend, ToolBackend, ToolFixtureRecord};
pub use live::{LiveToolBackend, LiveToolConfig};
pub use session::{split_sentences, Observation, ObservationSource, SnippetPriority, ToolSession, ToolStats};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("malformed action `{0}`")]
    MalformedAction(String),
    #[error("lookup requires a page loaded by a prior search")]
    NoPageContext,
    #[error("tool transport error: {0}")]
    Transport(String),
    #[error("tool fixture has no entry for {call}[{query}] ({fingerprint})")]
    FixtureMiss { call: String, query: String, fingerprint: String },
    #[error("{action} is not available with the {grammar:?} grammar")]
    Unsupported { action: String, grammar: Grammar },
    #[error("tool fixture i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("tool fixture format: {0}")]
    Format(String),
}
