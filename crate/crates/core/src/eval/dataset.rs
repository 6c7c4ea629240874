use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("dataset format error in record `{record}`: {message}")]
    Format { record: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

fn format_err(record: impl Into<String>, message: impl fmt::Display) -> DatasetError {
    DatasetError::Format { record: record.into(), message: message.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dataset {
    #[serde(rename = "hotpotqa")]
    HotpotQa,
    #[serde(rename = "strategyqa")]
    StrategyQa,
    #[serde(rename = "mmlu")]
    Mmlu,
}

impl Dataset {
    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::HotpotQa => "hotpotqa",
            Dataset::StrategyQa => "strategyqa",
            Dataset::Mmlu => "mmlu",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hotpotqa" | "hotpot" => Ok(Dataset::HotpotQa),
            "strategyqa" | "strategy" => Ok(Dataset::StrategyQa),
            "mmlu" => Ok(Dataset::Mmlu),
            other => Err(format!("unknown dataset `{other}`")),
        }
    }
}

/// One question in canonical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    pub gold: String,
    pub dataset: Dataset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
}

impl QAItem {
    pub fn new(id: impl Into<String>, question: impl Into<String>, gold: impl Into<String>, dataset: Dataset) -> Self {
        Self { id: id.into(), question: question.into(), choices: None, gold: gold.into(), dataset, task: None }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.gold.trim().is_empty() {
            return Err(format_err(&self.id, "empty gold answer"));
        }
        match self.dataset {
            Dataset::StrategyQa if !matches!(self.gold.as_str(), "yes" | "no") => {
                Err(format_err(&self.id, format!("StrategyQA gold must be yes/no, got `{}`", self.gold)))
            }
            Dataset::Mmlu => {
                if !matches!(self.gold.as_str(), "A" | "B" | "C" | "D") {
                    return Err(format_err(&self.id, format!("MMLU gold must be A-D, got `{}`", self.gold)));
                }
                match &self.choices {
                    Some(c) if c.len() == 4 => Ok(()),
                    _ => Err(format_err(&self.id, "MMLU items need exactly four choices")),
                }
            }
            _ => Ok(()),
        }
    }

    /// Question text as it appears in prompts; MMLU options go on their own lines.
    pub fn prompt_text(&self) -> String {
        match &self.choices {
            Some(choices) => {
                let mut s = self.question.clone();
                for (label, choice) in ["A", "B", "C", "D"].iter().zip(choices) {
                    s.push_str(&format!("\n{label}. {choice}"));
                }
                s
            }
            None => self.question.clone(),
        }
    }
}

/// Seeded selection. `per_task` applies to MMLU, where sampling is stratified by task.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub seed: u64,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub per_task: Option<usize>,
}

pub fn read_items(path: &Path) -> Result<Vec<QAItem>, DatasetError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: QAItem =
            serde_json::from_str(&line).map_err(|e| format_err(format!("line {}", lineno + 1), e))?;
        item.validate()?;
        items.push(item);
    }
    Ok(items)
}

pub fn write_items(path: &Path, items: &[QAItem]) -> Result<(), DatasetError> {
    let mut out = std::fs::File::create(path).map_err(io_err(path))?;
    for item in items {
        let line = serde_json::to_string(&serde_json::to_value(item).unwrap()).unwrap();
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    Ok(())
}

fn parse_raw_json(path: &Path, kind: Dataset) -> Result<Vec<QAItem>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| format_err(path.display().to_string(), e))?;
    let records = value
        .as_array()
        .ok_or_else(|| format_err(path.display().to_string(), "expected a JSON array of records"))?;
    let mut items = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let id = ["_id", "id", "qid"]
            .iter()
            .find_map(|k| rec.get(*k).and_then(|v| v.as_str()))
            .map(str::to_string)
            .unwrap_or_else(|| format!("{kind}-{i}"));
        let question = rec
            .get("question")
            .and_then(|v| v.as_str())
            .ok_or_else(|| format_err(&id, "missing `question`"))?;
        let gold = match (kind, rec.get("answer")) {
            (Dataset::StrategyQa, Some(serde_json::Value::Bool(b))) => if *b { "yes" } else { "no" }.to_string(),
            (_, Some(serde_json::Value::String(s))) => s.clone(),
            _ => return Err(format_err(&id, "missing or mistyped `answer`")),
        };
        let gold = if kind == Dataset::StrategyQa { gold.to_ascii_lowercase() } else { gold };
        let item = QAItem::new(id, question, gold, kind);
        item.validate()?;
        items.push(item);
    }
    Ok(items)
}

fn parse_mmlu_csv(path: &Path) -> Result<Vec<QAItem>, DatasetError> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mmlu");
    let task = stem.trim_end_matches("_test").trim_end_matches("_dev").trim_end_matches("_val").to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)
        .map_err(|e| format_err(path.display().to_string(), e))?;
    let mut items = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let id = format!("{task}-{row}");
        let rec = rec.map_err(|e| format_err(&id, e))?;
        if rec.len() != 6 {
            return Err(format_err(&id, format!("expected 6 columns, got {}", rec.len())));
        }
        let mut item = QAItem::new(id, &rec[0], rec[5].trim().to_ascii_uppercase(), Dataset::Mmlu);
        item.choices = Some((1..5).map(|c| rec[c].to_string()).collect());
        item.task = Some(task.clone());
        item.validate()?;
        items.push(item);
    }
    Ok(items)
}

fn load_all(path: &Path, kind: Dataset) -> Result<Vec<QAItem>, DatasetError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext == "jsonl" {
        let items = read_items(path)?;
        if let Some(bad) = items.iter().find(|i| i.dataset != kind) {
            return Err(format_err(&bad.id, format!("expected {kind} item, found {}", bad.dataset)));
        }
        return Ok(items);
    }
    match kind {
        Dataset::Mmlu if path.is_dir() => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(io_err(path))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
                .collect();
            files.sort();
            let mut items = Vec::new();
            for f in files {
                items.extend(parse_mmlu_csv(&f)?);
            }
            Ok(items)
        }
        Dataset::Mmlu => parse_mmlu_csv(path),
        _ => parse_raw_json(path, kind),
    }
}

fn take_shuffled(mut items: Vec<QAItem>, count: Option<usize>, seed: u64) -> Vec<QAItem> {
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    if let Some(n) = count {
        items.truncate(n);
    }
    items
}

/// Load a dataset and apply seeded sampling. The result is a pure function of
/// the file bytes, the seed and the counts.
pub fn load_dataset(path: &Path, kind: Dataset, sampling: Sampling) -> Result<Vec<QAItem>, DatasetError> {
    let items = load_all(path, kind)?;
    if sampling.count.is_none() && sampling.per_task.is_none() {
        return Ok(items);
    }
    match (kind, sampling.per_task) {
        (Dataset::Mmlu, Some(per_task)) => {
            let mut by_task: BTreeMap<String, Vec<QAItem>> = BTreeMap::new();
            for item in items {
                by_task.entry(item.task.clone().unwrap_or_default()).or_default().push(item);
            }
            let mut out = Vec::new();
            for (i, (_, group)) in by_task.into_iter().enumerate() {
                out.extend(take_shuffled(group, Some(per_task), sampling.seed.wrapping_add(i as u64)));
            }
            if let Some(n) = sampling.count {
                out.truncate(n);
            }
            Ok(out)
        }
        _ => Ok(take_shuffled(items, sampling.count, sampling.seed)),
    }
}
