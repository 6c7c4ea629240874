use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ActionKind, Grammar, ToolAction, ToolBackend, ToolError};

const SEARCH_SENTENCES: usize = 5;
const SUGGESTIONS: usize = 5;
pub(crate) const NO_MORE_RESULTS: &str = "No more results.";
pub(crate) const EMPTY_SNIPPET: &str = "No snippet found.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationSource {
    WikiPage,
    WikiSuggestions,
    WikiLookup,
    WebSnippet,
    /// Produced by the agent loop itself for a step that could not execute.
    StepError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub source: ObservationSource,
    pub call_counted: bool,
}

impl Observation {
    fn counted(text: String, source: ObservationSource) -> Self {
        Self { text, source, call_counted: true }
    }

    pub fn step_error(text: impl Into<String>) -> Self {
        Self { text: text.into(), source: ObservationSource::StepError, call_counted: false }
    }
}

/// JSON pointers into the search response, tried in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SnippetPriority(pub Vec<String>);

impl Default for SnippetPriority {
    fn default() -> Self {
        Self(
            [
                "/answer_box/answer",
                "/answer_box/snippet",
                "/answer_box/snippet_highlighted_words/0",
                "/organic_results/0/snippet",
            ]
            .map(String::from)
            .to_vec(),
        )
    }
}

impl SnippetPriority {
    pub fn pick(&self, response: &Value) -> Option<String> {
        self.0.iter().find_map(|ptr| match response.pointer(ptr)? {
            Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        })
    }
}

/// Run-wide tool-call counters, shared by every session.
#[derive(Debug, Default)]
pub struct ToolStats {
    search: AtomicU64,
    lookup: AtomicU64,
    web_search: AtomicU64,
}

impl ToolStats {
    fn bump(&self, kind: ActionKind) {
        let c = match kind {
            ActionKind::Search => &self.search,
            ActionKind::Lookup => &self.lookup,
            ActionKind::WebSearch => &self.web_search,
            ActionKind::Finish => return,
        };
        c.fetch_add(1, Ordering::Relaxed);
    }

    pub fn total(&self) -> u64 {
        self.search.load(Ordering::Relaxed) + self.lookup.load(Ordering::Relaxed) + self.web_search.load(Ordering::Relaxed)
    }

    pub fn by_kind(&self) -> (u64, u64, u64) {
        (
            self.search.load(Ordering::Relaxed),
            self.lookup.load(Ordering::Relaxed),
            self.web_search.load(Ordering::Relaxed),
        )
    }
}

const TITLES: [&str; 8] = ["mr.", "mrs.", "ms.", "dr.", "st.", "jr.", "sr.", "vs."];

/// Initialisms (`U.S.`, `J.`) and honorifics do not end a sentence.
fn is_abbreviation(word: &str) -> bool {
    let lower = word.to_lowercase();
    if TITLES.contains(&lower.as_str()) {
        return true;
    }
    let bytes = word.as_bytes();
    bytes.len() >= 2
        && bytes.len().is_multiple_of(2)
        && bytes.chunks(2).all(|p| p[0].is_ascii_uppercase() && p[1] == b'.')
}

/// Split on `.`, `!` or `?` followed by whitespace, except after an
/// abbreviation. Line breaks count as whitespace; empty pieces are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(if c.is_whitespace() { ' ' } else { c });
        let ends = matches!(c, '.' | '!' | '?')
            && chars.peek().is_some_and(|n| n.is_whitespace())
            && !(c == '.' && is_abbreviation(current.rsplit(' ').next().unwrap_or("")));
        if ends {
            push_sentence(&mut out, &current);
            current.clear();
        }
    }
    push_sentence(&mut out, &current);
    out
}

fn push_sentence(out: &mut Vec<String>, raw: &str) {
    let s = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if !s.is_empty() {
        out.push(s);
    }
}

/// Python `repr` of a string, so suggestion lists read like the prompt exemplars.
fn py_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

struct PageState {
    sentences: Vec<String>,
    keyword: Option<String>,
    matches: Vec<usize>,
    cursor: usize,
}

/// Tool state for one trajectory.
pub struct ToolSession {
    backend: Arc<dyn ToolBackend>,
    grammar: Grammar,
    priority: SnippetPriority,
    stats: Option<Arc<ToolStats>>,
    page: Option<PageState>,
    calls: u32,
}

impl ToolSession {
    pub fn new(backend: Arc<dyn ToolBackend>, grammar: Grammar) -> Self {
        Self { backend, grammar, priority: SnippetPriority::default(), stats: None, page: None, calls: 0 }
    }

    pub fn with_priority(mut self, priority: SnippetPriority) -> Self {
        self.priority = priority;
        self
    }

    pub fn with_stats(mut self, stats: Arc<ToolStats>) -> Self {
        self.stats = Some(stats);
        self
    }

    pub fn grammar(&self) -> Grammar {
        self.grammar
    }

    /// Executed Search/Lookup/WebSearch actions so far.
    pub fn calls(&self) -> u32 {
        self.calls
    }

    /// Run a non-`Finish` action. The call counter moves only when an
    /// observation is produced.
    pub fn execute(&mut self, action: &ToolAction) -> Result<Observation, ToolError> {
        let unsupported =
            || ToolError::Unsupported { action: format!("{:?}", action.kind), grammar: self.grammar };
        let obs = match (self.grammar, action.kind) {
            (Grammar::Wikipedia, ActionKind::Search) => self.wiki_search(&action.argument)?,
            (Grammar::Wikipedia, ActionKind::Lookup) => self.wiki_lookup(&action.argument)?,
            (Grammar::Web, ActionKind::WebSearch) => self.web_search(&action.argument)?,
            _ => return Err(unsupported()),
        };
        self.calls += 1;
        if let Some(stats) = &self.stats {
            stats.bump(action.kind);
        }
        Ok(obs)
    }

    fn wiki_search(&mut self, entity: &str) -> Result<Observation, ToolError> {
        match self.backend.wiki_page(entity)? {
            Some(text) => {
                let sentences = split_sentences(&text);
                let head = sentences.iter().take(SEARCH_SENTENCES).cloned().collect::<Vec<_>>().join(" ");
                self.page = Some(PageState { sentences, keyword: None, matches: Vec::new(), cursor: 0 });
                Ok(Observation::counted(head, ObservationSource::WikiPage))
            }
            None => {
                let similar = self.backend.wiki_suggest(entity)?;
                let list: Vec<String> = similar.iter().take(SUGGESTIONS).map(|s| py_repr(s)).collect();
                let text = format!("Could not find [{entity}]. Similar: [{}].", list.join(", "));
                Ok(Observation::counted(text, ObservationSource::WikiSuggestions))
            }
        }
    }

    fn wiki_lookup(&mut self, keyword: &str) -> Result<Observation, ToolError> {
        let page = self.page.as_mut().ok_or(ToolError::NoPageContext)?;
        let needle = keyword.to_lowercase();
        if page.keyword.as_deref() != Some(needle.as_str()) {
            page.matches = page
                .sentences
                .iter()
                .enumerate()
                .filter(|(_, s)| s.to_lowercase().contains(&needle))
                .map(|(i, _)| i)
                .collect();
            page.keyword = Some(needle);
            page.cursor = 0;
        }
        let text = match page.matches.get(page.cursor) {
            Some(&i) => {
                page.cursor += 1;
                format!("(Result {} / {}) {}", page.cursor, page.matches.len(), page.sentences[i])
            }
            None => NO_MORE_RESULTS.to_string(),
        };
        Ok(Observation::counted(text, ObservationSource::WikiLookup))
    }

    fn web_search(&mut self, query: &str) -> Result<Observation, ToolError> {
        let response = self.backend.web_search(query)?;
        let text = self.priority.pick(&response).unwrap_or_else(|| EMPTY_SNIPPET.to_string());
        Ok(Observation::counted(text, ObservationSource::WebSnippet))
    }
}
