use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use uala_core::agent::{Agent, AgentConfig, OracleMode, PromptMode, Strategy};
use uala_core::calibration::{CalibrationProfile, ThresholdMethod};
use uala_core::eval::{load_dataset, Dataset, QAItem, Sampling};
use uala_core::gateway::{
    CompletionProvider, Gateway, LiveConfig, LiveProvider, RecordingProvider, ReplayProvider, ScriptedProvider,
};
use uala_core::tools::{
    LiveToolBackend, LiveToolConfig, MockBackend, RecordingToolBackend, ReplayToolBackend, SnippetPriority,
    ToolBackend,
};
use uala_core::uncertainty::{Method, WeightScope};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "standard")]
    Standard,
    #[serde(rename = "cot")]
    Cot,
    #[serde(rename = "self_consistency")]
    SelfConsistency,
    #[serde(rename = "react")]
    React,
    #[serde(rename = "uala-s")]
    UalaS,
    #[serde(rename = "uala-m")]
    UalaM,
    #[serde(rename = "verbal")]
    Verbal,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "standard" => Mode::Standard,
            "cot" => Mode::Cot,
            "self-consistency" | "sc" => Mode::SelfConsistency,
            "react" => Mode::React,
            "uala-s" => Mode::UalaS,
            "uala-m" => Mode::UalaM,
            "verbal" => Mode::Verbal,
            _ => return Err(format!("unknown mode `{s}` (standard, cot, self_consistency, react, uala-s, uala-m, verbal)")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: Dataset,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_task: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    Scripted { script: PathBuf },
    Replay { completions: PathBuf },
    Live {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        url: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_in_flight: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ToolsConfig {
    Mock { path: PathBuf },
    Replay { path: PathBuf },
    Live {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wiki_api: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        web_api: Option<String>,
    },
}

/// Everything a command needs. Relative paths resolve against the directory
/// of the config file; secrets come only from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<DatasetConfig>,
    pub train: Option<DatasetConfig>,
    pub mode: Mode,
    pub base_mode: Option<PromptMode>,
    pub estimator: Method,
    pub weight_scope: WeightScope,
    pub threshold: ThresholdMethod,
    pub profile: Option<PathBuf>,
    pub confidence_threshold: Option<f64>,
    pub backoff: bool,
    pub oracle: OracleMode,
    pub provider: Option<ProviderConfig>,
    pub tools: Option<ToolsConfig>,
    pub snippet_priority: Option<Vec<String>>,
    pub workers: usize,
    pub seed: u64,
    pub max_steps: u32,
    pub samples: u32,
    pub sample_temperature: f64,
    pub max_tokens: u32,
    pub oracle_timeout_secs: u64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let agent = AgentConfig::default();
        Self {
            dataset: None,
            train: None,
            mode: Mode::UalaS,
            base_mode: None,
            estimator: Method::Entropy,
            weight_scope: WeightScope::Sequence,
            threshold: ThresholdMethod::default(),
            profile: None,
            confidence_threshold: None,
            backoff: false,
            oracle: OracleMode::Off,
            provider: None,
            tools: None,
            snippet_priority: None,
            workers: 4,
            seed: 0,
            max_steps: agent.max_steps,
            samples: agent.samples,
            sample_temperature: agent.sample_temperature,
            max_tokens: agent.max_tokens,
            oracle_timeout_secs: agent.oracle_timeout_secs,
            base_dir: PathBuf::from("."),
        }
    }
}

type CompletionRecorder = Arc<RecordingProvider<Arc<dyn CompletionProvider>>>;
type ToolRecorder = Arc<RecordingToolBackend<Arc<dyn ToolBackend>>>;

/// Wrappers kept so recorded fixtures can be written after a run.
#[derive(Default)]
pub struct Recorders {
    pub completions: Option<(CompletionRecorder, PathBuf)>,
    pub tools: Option<(ToolRecorder, PathBuf)>,
}

impl Recorders {
    pub fn save(&self) -> anyhow::Result<()> {
        if let Some((rec, path)) = &self.completions {
            let n = rec.save(path)?;
            tracing::info!(records = n, path = %path.display(), "wrote completion fixture");
        }
        if let Some((rec, path)) = &self.tools {
            let n = rec.save(path)?;
            tracing::info!(records = n, path = %path.display(), "wrote tool fixture");
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Reject mutually inconsistent settings before any work starts.
    pub fn validate(&self) -> Result<(), UsageError> {
        let bad = |m: String| Err(UsageError(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if matches!(self.mode, Mode::UalaM | Mode::SelfConsistency) && self.samples == 0 {
            return bad(format!("{:?} needs samples >= 1", self.mode));
        }
        if let ThresholdMethod::Quantile { q } = self.threshold {
            if !(q > 0.0 && q < 1.0) {
                return bad(format!("quantile must lie in (0, 1), got {q}"));
            }
        }
        if self.mode == Mode::Verbal {
            match self.confidence_threshold {
                Some(t) if t > 0.0 && t < 1.0 => {}
                Some(t) => return bad(format!("confidence_threshold must lie in (0, 1), got {t}")),
                None => return bad("mode verbal requires confidence_threshold".into()),
            }
        }
        if self.mode == Mode::UalaS && !self.estimator.is_free_form() && self.estimator != Method::SingleToken {
            return bad(format!("uala-s needs a token-level estimator, got {}", self.estimator));
        }
        if (self.backoff || self.oracle != OracleMode::Off)
            && matches!(self.mode, Mode::Standard | Mode::Cot | Mode::SelfConsistency)
        {
            return bad(format!("backoff and oracle do not apply to {:?}", self.mode));
        }
        Ok(())
    }

    /// Estimator the calibration set is scored with.
    pub fn calibration_estimator(&self) -> Method {
        if self.mode == Mode::UalaM {
            Method::MultiInference
        } else {
            self.estimator
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            base_mode: self.base_mode,
            max_steps: self.max_steps,
            samples: self.samples,
            sample_temperature: self.sample_temperature,
            max_tokens: self.max_tokens,
            oracle_timeout_secs: self.oracle_timeout_secs,
        }
    }

    pub fn items(&self) -> anyhow::Result<Vec<QAItem>> {
        let d = self.dataset.as_ref().ok_or_else(|| UsageError("no dataset configured".into()))?;
        self.load_split(d)
    }

    pub fn train_items(&self) -> anyhow::Result<Vec<QAItem>> {
        let d = self.train.as_ref().ok_or_else(|| UsageError("no training split configured".into()))?;
        self.load_split(d)
    }

    fn load_split(&self, d: &DatasetConfig) -> anyhow::Result<Vec<QAItem>> {
        let sampling = Sampling { seed: self.seed, count: d.count, per_task: d.per_task };
        Ok(load_dataset(&self.resolve(&d.path), d.kind, sampling)?)
    }

    pub fn load_profile(&self) -> anyhow::Result<CalibrationProfile<f64>> {
        let p = self
            .profile
            .as_ref()
            .ok_or_else(|| UsageError(format!("{:?} needs a calibration profile; run `uala calibrate` first", self.mode)))?;
        let mut profile = CalibrationProfile::<f64>::load(&self.resolve(p))
            .map_err(|e| anyhow::anyhow!("cannot load profile {}: {e}", p.display()))?;
        if self.mode == Mode::UalaM && profile.estimator != Method::MultiInference {
            return Err(UsageError(format!("uala-m needs a multi_inference profile, got {}", profile.estimator)).into());
        }
        if self.mode == Mode::UalaS && profile.estimator == Method::MultiInference {
            return Err(UsageError("uala-s needs a single-inference profile".into()).into());
        }
        profile.weight_scope = self.weight_scope;
        Ok(profile)
    }

    pub fn strategy_with(&self, profile: Option<CalibrationProfile<f64>>) -> anyhow::Result<Strategy> {
        Ok(match self.mode {
            Mode::Standard => Strategy::Standard,
            Mode::Cot => Strategy::Cot,
            Mode::SelfConsistency => Strategy::SelfConsistency,
            Mode::React => Strategy::React { backoff: self.backoff },
            Mode::UalaS | Mode::UalaM => {
                let profile = match profile {
                    Some(p) => p,
                    None => self.load_profile()?,
                };
                Strategy::Uala { profile, backoff: self.backoff, oracle: self.oracle }
            }
            Mode::Verbal => Strategy::Verbal {
                confidence_threshold: self.confidence_threshold.expect("validated"),
                backoff: self.backoff,
                oracle: self.oracle,
            },
        })
    }

    pub fn strategy(&self) -> anyhow::Result<Strategy> {
        self.strategy_with(None)
    }

    fn provider(&self) -> anyhow::Result<Arc<dyn CompletionProvider>> {
        let p = self.provider.as_ref().ok_or_else(|| UsageError("no provider configured".into()))?;
        Ok(match p {
            ProviderConfig::Scripted { script } => Arc::new(ScriptedProvider::load(&self.resolve(script))?),
            ProviderConfig::Replay { completions } => Arc::new(ReplayProvider::load(&self.resolve(completions))?),
            ProviderConfig::Live { url, model, max_in_flight } => {
                let mut c = LiveConfig::default().from_env();
                if let Some(u) = url {
                    c.url = u.clone();
                }
                if let Some(m) = model {
                    c.model = m.clone();
                }
                if let Some(n) = max_in_flight {
                    c.max_in_flight = *n;
                }
                Arc::new(LiveProvider::new(c)?)
            }
        })
    }

    fn tool_backend(&self) -> anyhow::Result<Arc<dyn ToolBackend>> {
        let t = self.tools.as_ref().ok_or_else(|| UsageError("no tool backend configured".into()))?;
        Ok(match t {
            ToolsConfig::Mock { path } => Arc::new(MockBackend::load(&self.resolve(path))?),
            ToolsConfig::Replay { path } => Arc::new(ReplayToolBackend::load(&self.resolve(path))?),
            ToolsConfig::Live { wiki_api, web_api } => {
                let mut c = LiveToolConfig::default();
                if let Some(w) = wiki_api {
                    c.wiki_api = w.clone();
                }
                if let Some(w) = web_api {
                    c.web_api = w.clone();
                }
                Arc::new(LiveToolBackend::new(c)?)
            }
        })
    }

    /// A fresh agent. Completions and tool responses are recorded when a
    /// fixture path is given for them.
    pub fn agent(&self, completions: Option<&Path>, tool_responses: Option<&Path>) -> anyhow::Result<(Agent, Recorders)> {
        let mut provider = self.provider()?;
        let mut tools = self.tool_backend()?;
        let mut recorders = Recorders::default();
        if let Some(path) = completions {
            let rec = Arc::new(RecordingProvider::new(provider));
            provider = rec.clone();
            recorders.completions = Some((rec, path.to_path_buf()));
        }
        if let Some(path) = tool_responses {
            let rec = Arc::new(RecordingToolBackend::new(tools));
            tools = rec.clone();
            recorders.tools = Some((rec, path.to_path_buf()));
        }
        let mut agent = Agent::new(Gateway::new(provider), tools).with_config(self.agent_config());
        if let Some(p) = &self.snippet_priority {
            agent = agent.with_snippet_priority(SnippetPriority(p.clone()));
        }
        Ok((agent, recorders))
    }
}
