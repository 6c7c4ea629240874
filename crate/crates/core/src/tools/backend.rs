use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ToolError;
use crate::canonical::{sha256_hex, to_canonical_string};

/// Raw data sources behind the tool actions. Observation formatting happens in
/// [`ToolSession`](super::ToolSession), so every backend yields identical text.
pub trait ToolBackend: Send + Sync {
    /// Plain-text body of the page titled exactly `title`, if it exists.
    fn wiki_page(&self, title: &str) -> Result<Option<String>, ToolError>;
    /// Titles similar to `query`, best first.
    fn wiki_suggest(&self, query: &str) -> Result<Vec<String>, ToolError>;
    /// Raw search-engine JSON for `query`.
    fn web_search(&self, query: &str) -> Result<Value, ToolError>;
}

impl<B: ToolBackend + ?Sized> ToolBackend for std::sync::Arc<B> {
    fn wiki_page(&self, title: &str) -> Result<Option<String>, ToolError> {
        (**self).wiki_page(title)
    }
    fn wiki_suggest(&self, query: &str) -> Result<Vec<String>, ToolError> {
        (**self).wiki_suggest(query)
    }
    fn web_search(&self, query: &str) -> Result<Value, ToolError> {
        (**self).web_search(query)
    }
}

/// Offline backend read from a JSON file:
///
/// ```json
/// {"pages": {"Milhouse Van Houten": "Milhouse Mussolini Van Houten is ..."},
///  "suggestions": {"Adam Clayton Powell": ["Adam Clayton Powell III", "..."]},
///  "web": {"10 AU to light years": {"answer_box": {"answer": "0.000158125"}}}}
/// ```
///
/// Page titles match exactly, then case-insensitively. Queries without an
/// explicit suggestion list get the page titles containing the query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockBackend {
    pub pages: BTreeMap<String, String>,
    pub suggestions: BTreeMap<String, Vec<String>>,
    pub web: BTreeMap<String, Value>,
}

impl MockBackend {
    pub fn load(path: &Path) -> Result<Self, ToolError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| ToolError::Format(format!("{}: {e}", path.display())))
    }

    pub fn with_page(mut self, title: impl Into<String>, text: impl Into<String>) -> Self {
        self.pages.insert(title.into(), text.into());
        self
    }

    pub fn with_suggestions(mut self, query: impl Into<String>, titles: Vec<String>) -> Self {
        self.suggestions.insert(query.into(), titles);
        self
    }

    pub fn with_web(mut self, query: impl Into<String>, response: Value) -> Self {
        self.web.insert(query.into(), response);
        self
    }
}

impl ToolBackend for MockBackend {
    fn wiki_page(&self, title: &str) -> Result<Option<String>, ToolError> {
        if let Some(text) = self.pages.get(title) {
            return Ok(Some(text.clone()));
        }
        Ok(self.pages.iter().find(|(t, _)| t.eq_ignore_ascii_case(title)).map(|(_, text)| text.clone()))
    }

    fn wiki_suggest(&self, query: &str) -> Result<Vec<String>, ToolError> {
        if let Some(s) = self.suggestions.get(query) {
            return Ok(s.clone());
        }
        let q = query.to_lowercase();
        Ok(self.pages.keys().filter(|t| t.to_lowercase().contains(&q)).cloned().collect())
    }

    fn web_search(&self, query: &str) -> Result<Value, ToolError> {
        Ok(self.web.get(query).cloned().unwrap_or_else(|| Value::Object(Default::default())))
    }
}

/// One tool fixture line: `call` is `wiki_page`, `wiki_suggest` or `web_search`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolFixtureRecord {
    pub fingerprint: String,
    pub call: String,
    pub query: String,
    pub response: Value,
}

#[derive(Serialize)]
struct ToolFingerprint<'a> {
    call: &'a str,
    query: &'a str,
}

fn tool_fingerprint(call: &str, query: &str) -> String {
    sha256_hex(to_canonical_string(&ToolFingerprint { call, query }).expect("plain data serialises").as_bytes())
}

impl ToolFixtureRecord {
    fn new(call: &str, query: &str, response: Value) -> Self {
        Self { fingerprint: tool_fingerprint(call, query), call: call.into(), query: query.into(), response }
    }
}

/// Serves tool responses from a recorded fixture. A miss is an error.
#[derive(Debug, Clone, Default)]
pub struct ReplayToolBackend {
    entries: HashMap<String, Value>,
}

impl ReplayToolBackend {
    pub fn load(path: &Path) -> Result<Self, ToolError> {
        let file = std::fs::File::open(path)?;
        let mut entries = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: ToolFixtureRecord = serde_json::from_str(&line)
                .map_err(|e| ToolError::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
            entries.insert(r.fingerprint, r.response);
        }
        Ok(Self { entries })
    }

    fn get(&self, call: &str, query: &str) -> Result<Value, ToolError> {
        let fingerprint = tool_fingerprint(call, query);
        self.entries.get(&fingerprint).cloned().ok_or_else(|| ToolError::FixtureMiss {
            call: call.into(),
            query: query.into(),
            fingerprint,
        })
    }
}

fn decode<T: for<'de> Deserialize<'de>>(call: &str, v: Value) -> Result<T, ToolError> {
    serde_json::from_value(v).map_err(|e| ToolError::Format(format!("{call} fixture: {e}")))
}

impl ToolBackend for ReplayToolBackend {
    fn wiki_page(&self, title: &str) -> Result<Option<String>, ToolError> {
        decode("wiki_page", self.get("wiki_page", title)?)
    }
    fn wiki_suggest(&self, query: &str) -> Result<Vec<String>, ToolError> {
        decode("wiki_suggest", self.get("wiki_suggest", query)?)
    }
    fn web_search(&self, query: &str) -> Result<Value, ToolError> {
        self.get("web_search", query)
    }
}

/// Passes calls through to `inner` and keeps the responses for [`save`](Self::save).
pub struct RecordingToolBackend<B> {
    inner: B,
    records: Mutex<BTreeMap<String, ToolFixtureRecord>>,
}

impl<B: ToolBackend> RecordingToolBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, records: Mutex::new(BTreeMap::new()) }
    }

    fn keep(&self, call: &str, query: &str, response: Value) {
        let r = ToolFixtureRecord::new(call, query, response);
        self.records.lock().unwrap().insert(r.fingerprint.clone(), r);
    }

    pub fn save(&self, path: &Path) -> Result<usize, ToolError> {
        let records = self.records.lock().unwrap();
        let mut out = std::fs::File::create(path)?;
        for r in records.values() {
            writeln!(out, "{}", to_canonical_string(r).map_err(|e| ToolError::Format(e.to_string()))?)?;
        }
        Ok(records.len())
    }
}

impl<B: ToolBackend> ToolBackend for RecordingToolBackend<B> {
    fn wiki_page(&self, title: &str) -> Result<Option<String>, ToolError> {
        let r = self.inner.wiki_page(title)?;
        self.keep("wiki_page", title, serde_json::json!(r));
        Ok(r)
    }
    fn wiki_suggest(&self, query: &str) -> Result<Vec<String>, ToolError> {
        let r = self.inner.wiki_suggest(query)?;
        self.keep("wiki_suggest", query, serde_json::json!(r));
        Ok(r)
    }
    fn web_search(&self, query: &str) -> Result<Value, ToolError> {
        let r = self.inner.web_search(query)?;
        self.keep("web_search", query, r.clone());
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn record_then_replay() {
        let mock = MockBackend::default()
            .with_page("Milhouse", "Milhouse is a character.")
            .with_web("q", json!({"answer_box": {"answer": "42"}}));
        let rec = RecordingToolBackend::new(mock);
        rec.wiki_page("Milhouse").unwrap();
        rec.wiki_page("Nobody").unwrap();
        rec.wiki_suggest("Mil").unwrap();
        rec.web_search("q").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tools.jsonl");
        assert_eq!(rec.save(&path).unwrap(), 4);

        let replay = ReplayToolBackend::load(&path).unwrap();
        assert_eq!(replay.wiki_page("Milhouse").unwrap().as_deref(), Some("Milhouse is a character."));
        assert_eq!(replay.wiki_page("Nobody").unwrap(), None);
        assert_eq!(replay.wiki_suggest("Mil").unwrap(), vec!["Milhouse"]);
        assert_eq!(replay.web_search("q").unwrap()["answer_box"]["answer"], "42");
        assert!(matches!(replay.wiki_page("Other"), Err(ToolError::FixtureMiss { .. })));
    }

    #[test]
    fn mock_title_match_falls_back_to_case_insensitive() {
        let mock = MockBackend::default().with_page("Colorado orogeny", "x.");
        assert!(mock.wiki_page("colorado orogeny").unwrap().is_some());
    }
}
