use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::Step;
use crate::uncertainty::Uncertainty;

/// What happens after both the base and the tool answer were rejected.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Keep the tool answer.
    #[default]
    Off,
    /// Answer with the gold label.
    Simulated,
    /// Park the episode on an [`EscalationQueue`] until a human answers.
    Interactive,
}

impl std::str::FromStr for OracleMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "off" | "none" => Ok(OracleMode::Off),
            "simulated" | "gold" => Ok(OracleMode::Simulated),
            "interactive" | "human" => Ok(OracleMode::Interactive),
            other => Err(format!("unknown oracle mode `{other}`")),
        }
    }
}

/// A pending escalation as served to the console.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationView {
    pub episode_id: String,
    pub question: String,
    pub base_answer: Option<String>,
    pub base_uncertainty: Option<Uncertainty<f64>>,
    pub tool_answer: Option<String>,
    pub tool_uncertainty: Option<Uncertainty<f64>>,
    pub tau: f64,
    pub trajectory: Vec<Step>,
    /// Escalation order within the run, starting at 1.
    pub sequence: u64,
}

struct Pending {
    view: EscalationView,
    answer: Option<String>,
}

#[derive(Default)]
struct QueueState {
    next_sequence: u64,
    pending: BTreeMap<String, Pending>,
}

/// Many episodes wait here; one operator answers them.
#[derive(Default)]
pub struct EscalationQueue {
    state: Mutex<QueueState>,
    answered: Condvar,
}

impl EscalationQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Unanswered escalations, oldest first.
    pub fn pending(&self) -> Vec<EscalationView> {
        let state = self.state.lock().unwrap();
        let mut out: Vec<EscalationView> =
            state.pending.values().filter(|p| p.answer.is_none()).map(|p| p.view.clone()).collect();
        out.sort_by_key(|v| v.sequence);
        out
    }

    /// Resolve a pending escalation. `false` when `episode_id` is not waiting.
    pub fn answer(&self, episode_id: &str, answer: impl Into<String>) -> bool {
        let mut state = self.state.lock().unwrap();
        match state.pending.get_mut(episode_id) {
            Some(p) if p.answer.is_none() => {
                p.answer = Some(answer.into());
                self.answered.notify_all();
                true
            }
            _ => false,
        }
    }

    /// Enqueue `view` and block until it is answered or `timeout` passes.
    pub fn escalate_and_wait(&self, mut view: EscalationView, timeout: Duration) -> Option<String> {
        let id = view.episode_id.clone();
        let deadline = Instant::now() + timeout;
        let mut state = self.state.lock().unwrap();
        state.next_sequence += 1;
        view.sequence = state.next_sequence;
        state.pending.insert(id.clone(), Pending { view, answer: None });
        loop {
            if state.pending.get(&id).is_some_and(|p| p.answer.is_some()) {
                break;
            }
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            state = self.answered.wait_timeout(state, deadline - now).unwrap().0;
        }
        state.pending.remove(&id).and_then(|p| p.answer)
    }
}
