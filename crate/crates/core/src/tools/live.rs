use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ToolBackend, ToolError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveToolConfig {
    pub wiki_api: String,
    pub web_api: String,
    pub web_engine: String,
    /// Environment variable holding the web-search API key.
    pub web_key_env: String,
    pub timeout_secs: u64,
    pub user_agent: String,
}

impl Default for LiveToolConfig {
    fn default() -> Self {
        Self {
            wiki_api: "https://en.wikipedia.org/w/api.php".into(),
            web_api: "https://serpapi.com/search.json".into(),
            web_engine: "google".into(),
            web_key_env: "UALA_SEARCH_API_KEY".into(),
            timeout_secs: 30,
            user_agent: "uala/0.1 (research agent)".into(),
        }
    }
}

/// MediaWiki action API plus a SerpAPI-compatible web-search endpoint.
pub struct LiveToolBackend {
    config: LiveToolConfig,
    web_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl LiveToolBackend {
    pub fn new(config: LiveToolConfig) -> Result<Self, ToolError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .user_agent(config.user_agent.clone())
            .build()
            .map_err(|e| ToolError::Transport(e.to_string()))?;
        let web_key = std::env::var(&config.web_key_env).ok();
        Ok(Self { config, web_key, client })
    }

    /// GET with one retry on transport failure.
    fn get_json(&self, url: &str, query: &[(&str, &str)]) -> Result<Value, ToolError> {
        let mut last = String::new();
        for _ in 0..2 {
            match self.client.get(url).query(query).send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json().map_err(|e| ToolError::Format(e.to_string()));
                }
                Ok(resp) => last = format!("HTTP {}", resp.status()),
                Err(e) => last = e.to_string(),
            }
        }
        Err(ToolError::Transport(last))
    }
}

impl ToolBackend for LiveToolBackend {
    fn wiki_page(&self, title: &str) -> Result<Option<String>, ToolError> {
        let v = self.get_json(
            &self.config.wiki_api,
            &[
                ("action", "query"),
                ("prop", "extracts"),
                ("explaintext", "1"),
                ("redirects", "1"),
                ("format", "json"),
                ("formatversion", "2"),
                ("titles", title),
            ],
        )?;
        let page = v.pointer("/query/pages/0");
        let missing = page.and_then(|p| p.get("missing")).is_some();
        Ok(page
            .filter(|_| !missing)
            .and_then(|p| p.get("extract"))
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .map(str::to_string))
    }

    fn wiki_suggest(&self, query: &str) -> Result<Vec<String>, ToolError> {
        let v = self.get_json(
            &self.config.wiki_api,
            &[
                ("action", "query"),
                ("list", "search"),
                ("srsearch", query),
                ("srlimit", "5"),
                ("format", "json"),
                ("formatversion", "2"),
            ],
        )?;
        Ok(v.pointer("/query/search")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|r| r.get("title")?.as_str().map(str::to_string)).collect())
            .unwrap_or_default())
    }

    fn web_search(&self, query: &str) -> Result<Value, ToolError> {
        let key = self
            .web_key
            .as_deref()
            .ok_or_else(|| ToolError::Transport(format!("{} is not set", self.config.web_key_env)))?;
        self.get_json(&self.config.web_api, &[("engine", &self.config.web_engine), ("q", query), ("api_key", key)])
    }
}
