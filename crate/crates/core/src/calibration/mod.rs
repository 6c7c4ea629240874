//! Calibration sets, uncertainty thresholds and threshold sweeps.
//!
//! A calibration set holds the uncertainties of training answers that were
//! already correct under exact match. The threshold derived from it gates
//! both the base answer and the tool-loop answer; there is no second pass.

mod stats;

pub use stats::{compare_groups, GroupStats};

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_traits::{Float, FromPrimitive};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::PromptMode;
use crate::eval::{exact_match, QAItem};
use crate::uncertainty::{Method, Uncertainty, WeightScope};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration set is empty")]
    EmptyCalibrationSet,
    #[error("quantile must lie strictly between 0 and 1, got {0}")]
    InvalidQuantile(f64),
    #[error("quantile sweep values must be ascending")]
    UnsortedQuantiles,
    #[error("need at least two values per group, got {correct} correct and {incorrect} incorrect")]
    InsufficientData { correct: usize, incorrect: usize },
    #[error("uncertainty {0} is not a finite non-negative value")]
    InvalidUncertainty(f64),
    #[error("episode {id} failed: {message}")]
    Episode { id: String, message: String },
    #[error("profile i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("profile format: {0}")]
    Format(#[from] serde_json::Error),
}

/// Escalate iff the uncertainty is strictly above the threshold.
#[inline]
pub fn should_escalate<T: PartialOrd>(uncertainty: T, tau: T) -> bool {
    uncertainty > tau
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry<T> {
    pub question_id: String,
    pub answer: String,
    pub uncertainty: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet<T> {
    pub entries: Vec<CalibrationEntry<T>>,
    pub source: PromptMode,
    pub estimator: Method,
}

impl<T: Float> CalibrationSet<T> {
    /// Build a set directly from values, for analyses that already have them.
    pub fn from_values(
        values: &[T],
        source: PromptMode,
        estimator: Method,
    ) -> Result<Self, CalibrationError> {
        let entries = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                check_value(v)?;
                Ok(CalibrationEntry { question_id: format!("c{i}"), answer: String::new(), uncertainty: v })
            })
            .collect::<Result<Vec<_>, CalibrationError>>()?;
        Ok(Self { entries, source, estimator })
    }

    pub fn values(&self) -> Vec<T> {
        self.entries.iter().map(|e| e.uncertainty).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// A seeded random subset of `size` entries (all of them if `size` is larger).
    pub fn subsample(&self, size: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..self.entries.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(size);
        idx.sort_unstable();
        Self {
            entries: idx.into_iter().map(|i| self.entries[i].clone()).collect(),
            source: self.source,
            estimator: self.estimator,
        }
    }
}

fn check_value<T: Float>(v: T) -> Result<(), CalibrationError> {
    if v.is_finite() && v >= T::zero() {
        Ok(())
    } else {
        Err(CalibrationError::InvalidUncertainty(v.to_f64().unwrap_or(f64::NAN)))
    }
}

/// What the base-prompt runner produced for one training question.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseOutcome<T> {
    pub answer: Option<String>,
    pub uncertainty: Option<Uncertainty<T>>,
}

/// Run the base prompt over `items` and keep the exact-match-correct answers.
///
/// `runner` is invoked once per item, fanned out over `workers` threads.
/// Entry order follows `items` regardless of completion order.
pub fn build_calibration_set<T, F, E>(
    items: &[QAItem],
    source: PromptMode,
    estimator: Method,
    workers: usize,
    runner: F,
) -> Result<CalibrationSet<T>, CalibrationError>
where
    T: Float + Send,
    F: Fn(&QAItem) -> Result<BaseOutcome<T>, E> + Sync,
    E: std::fmt::Display,
{
    let slots: Vec<Mutex<Option<Result<BaseOutcome<T>, CalibrationError>>>> =
        items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let out = runner(item).map_err(|e| CalibrationError::Episode {
                    id: item.id.clone(),
                    message: e.to_string(),
                });
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });

    let mut entries = Vec::new();
    for (item, slot) in items.iter().zip(slots) {
        let outcome = slot.into_inner().unwrap().expect("every item visited")?;
        let (Some(answer), Some(u)) = (outcome.answer, outcome.uncertainty) else {
            continue;
        };
        if exact_match(Some(&answer), &item.gold) {
            check_value(u.value)?;
            entries.push(CalibrationEntry { question_id: item.id.clone(), answer, uncertainty: u.value });
        }
    }
    if entries.is_empty() {
        return Err(CalibrationError::EmptyCalibrationSet);
    }
    Ok(CalibrationSet { entries, source, estimator })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ThresholdMethod {
    Max,
    Mean,
    Quantile { q: f64 },
}

impl ThresholdMethod {
    pub const DEFAULT_QUANTILE: f64 = 0.9;

    pub fn quantile(&self) -> Option<f64> {
        match self {
            ThresholdMethod::Quantile { q } => Some(*q),
            _ => None,
        }
    }
}

impl Default for ThresholdMethod {
    fn default() -> Self {
        ThresholdMethod::Quantile { q: Self::DEFAULT_QUANTILE }
    }
}

impl std::str::FromStr for ThresholdMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "max" => Ok(ThresholdMethod::Max),
            "mean" => Ok(ThresholdMethod::Mean),
            "quantile" => Ok(ThresholdMethod::default()),
            other => {
                let q = other
                    .strip_prefix("quantile:")
                    .or_else(|| other.strip_prefix("quantile="))
                    .ok_or_else(|| format!("unknown threshold method `{other}`"))?;
                q.parse()
                    .map(|q| ThresholdMethod::Quantile { q })
                    .map_err(|e| format!("bad quantile `{q}`: {e}"))
            }
        }
    }
}

/// Estimator plus threshold; the same profile scores calibration and test answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile<T> {
    pub estimator: Method,
    pub threshold: ThresholdMethod,
    pub tau: T,
    pub set_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_q: Option<f64>,
    #[serde(default)]
    pub source: Option<PromptMode>,
    #[serde(default)]
    pub weight_scope: WeightScope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_id: Option<String>,
}

impl<T> CalibrationProfile<T> {
    /// Hand-built profile, e.g. for fixtures that fix τ directly.
    pub fn fixed(estimator: Method, tau: T) -> Self {
        Self {
            estimator,
            threshold: ThresholdMethod::Max,
            tau,
            set_size: 0,
            quantile_q: None,
            source: None,
            weight_scope: WeightScope::Sequence,
            created_at: None,
            dataset_id: None,
        }
    }

    pub fn with_provenance(mut self, dataset_id: impl Into<String>) -> Self {
        self.dataset_id = Some(dataset_id.into());
        self.created_at = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
        self
    }
}

impl<T: Serialize> CalibrationProfile<T> {
    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        let value = serde_json::to_value(self)?;
        std::fs::write(path, serde_json::to_string_pretty(&value)? + "\n")?;
        Ok(())
    }
}

impl<T: for<'de> Deserialize<'de>> CalibrationProfile<T> {
    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Linear interpolation between order statistics at 1-based rank `1 + q(n-1)`.
pub fn quantile<T: Float + FromPrimitive>(values: &[T], q: f64) -> Result<T, CalibrationError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(CalibrationError::InvalidQuantile(q));
    }
    if values.is_empty() {
        return Err(CalibrationError::EmptyCalibrationSet);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite uncertainties"));
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = T::from_f64(h - lo as f64).unwrap();
    let (a, b) = (sorted[lo], sorted[hi]);
    Ok((a + frac * (b - a)).max(a).min(b))
}

pub fn estimate_threshold<T: Float + FromPrimitive>(
    cal: &CalibrationSet<T>,
    method: ThresholdMethod,
) -> Result<CalibrationProfile<T>, CalibrationError> {
    if cal.is_empty() {
        return Err(CalibrationError::EmptyCalibrationSet);
    }
    let values = cal.values();
    let tau = match method {
        ThresholdMethod::Max => values.iter().copied().fold(T::zero(), T::max),
        ThresholdMethod::Mean => mean(&values),
        ThresholdMethod::Quantile { q } => quantile(&values, q)?,
    };
    Ok(CalibrationProfile {
        estimator: cal.estimator,
        threshold: method,
        tau,
        set_size: cal.len(),
        quantile_q: method.quantile(),
        source: Some(cal.source),
        weight_scope: WeightScope::Sequence,
        created_at: None,
        dataset_id: None,
    })
}

/// Multi-inference thresholds are always the calibration mean.
pub fn multi_inference_threshold<T: Float + FromPrimitive>(
    cal: &CalibrationSet<T>,
) -> Result<CalibrationProfile<T>, CalibrationError> {
    let mut profile = estimate_threshold(cal, ThresholdMethod::Mean)?;
    profile.estimator = Method::MultiInference;
    Ok(profile)
}

fn mean<T: Float + FromPrimitive>(values: &[T]) -> T {
    let sum = values.iter().copied().fold(T::zero(), |a, b| a + b);
    sum / T::from_usize(values.len()).unwrap()
}

/// Downstream numbers for one threshold setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepEval {
    pub escalations: usize,
    pub metric: f64,
    #[serde(default)]
    pub tool_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow<T> {
    pub q: f64,
    pub tau: T,
    pub escalations: usize,
    pub metric: f64,
    pub tool_calls: usize,
}

pub fn sweep_quantiles<T, F, E>(
    cal: &CalibrationSet<T>,
    qs: &[f64],
    mut eval_fn: F,
) -> Result<Vec<SweepRow<T>>, E>
where
    T: Float + FromPrimitive,
    F: FnMut(&CalibrationProfile<T>) -> Result<SweepEval, E>,
    E: From<CalibrationError>,
{
    if qs.windows(2).any(|w| w[0] > w[1]) {
        return Err(CalibrationError::UnsortedQuantiles.into());
    }
    let mut rows = Vec::with_capacity(qs.len());
    for &q in qs {
        let profile = estimate_threshold(cal, ThresholdMethod::Quantile { q })?;
        let eval = eval_fn(&profile)?;
        rows.push(SweepRow {
            q,
            tau: profile.tau,
            escalations: eval.escalations,
            metric: eval.metric,
            tool_calls: eval.tool_calls,
        });
    }
    Ok(rows)
}

/// True when escalation counts never increase as `q` grows.
pub fn escalations_non_increasing<T>(rows: &[SweepRow<T>]) -> bool {
    rows.windows(2).all(|w| w[1].escalations <= w[0].escalations)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSweepRow<T> {
    pub requested_size: usize,
    pub set_size: usize,
    pub tau: T,
    pub escalations: usize,
    pub metric: f64,
    pub tool_calls: usize,
}

/// Vary the calibration-set size (seeded subsamples) at a fixed threshold method.
pub fn sweep_calibration_sizes<T, F, E>(
    cal: &CalibrationSet<T>,
    sizes: &[usize],
    method: ThresholdMethod,
    seed: u64,
    mut eval_fn: F,
) -> Result<Vec<SizeSweepRow<T>>, E>
where
    T: Float + FromPrimitive,
    F: FnMut(&CalibrationProfile<T>) -> Result<SweepEval, E>,
    E: From<CalibrationError>,
{
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let subset = cal.subsample(size, seed);
        let profile = estimate_threshold(&subset, method)?;
        let eval = eval_fn(&profile)?;
        rows.push(SizeSweepRow {
            requested_size: size,
            set_size: subset.len(),
            tau: profile.tau,
            escalations: eval.escalations,
            metric: eval.metric,
            tool_calls: eval.tool_calls,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Dataset;

    fn set(values: &[f64]) -> CalibrationSet<f64> {
        CalibrationSet::from_values(values, PromptMode::Cot, Method::Entropy).unwrap()
    }

    #[test]
    fn max_mean_quantile() {
        let s = set(&[1.0, 2.0, 3.0]);
        assert_eq!(estimate_threshold(&s, ThresholdMethod::Mean).unwrap().tau, 2.0);
        assert_eq!(estimate_threshold(&s, ThresholdMethod::Max).unwrap().tau, 3.0);
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        // numpy.quantile(arange(1, 11), 0.9) == 9.1
        let p = estimate_threshold(&set(&ten), ThresholdMethod::Quantile { q: 0.9 }).unwrap();
        assert!((p.tau - 9.1).abs() < 1e-12);
        assert_eq!(p.quantile_q, Some(0.9));
        assert_eq!(p.set_size, 10);
    }

    #[test]
    fn quantile_rejects_bounds() {
        let s = set(&[1.0]);
        for q in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(
                estimate_threshold(&s, ThresholdMethod::Quantile { q }),
                Err(CalibrationError::InvalidQuantile(_))
            ));
        }
    }

    #[test]
    fn empty_set_errors() {
        let s: CalibrationSet<f64> = set(&[]);
        assert!(matches!(
            estimate_threshold(&s, ThresholdMethod::Max),
            Err(CalibrationError::EmptyCalibrationSet)
        ));
        assert!(matches!(multi_inference_threshold(&s), Err(CalibrationError::EmptyCalibrationSet)));
    }

    #[test]
    fn multi_inference_mean() {
        let p = multi_inference_threshold(&set(&[0.0, 1.0 / 9.0, 2.0 / 9.0])).unwrap();
        assert!((p.tau - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(p.estimator, Method::MultiInference);
        assert_eq!(multi_inference_threshold(&set(&[0.0])).unwrap().tau, 0.0);
        // hand sum: (0 + 1 + 3 + 0 + 9 + 2) / 9 / 6 = 15 / 54
        let mixed = [0.0, 1.0, 3.0, 0.0, 9.0, 2.0].map(|c| c / 9.0);
        assert!((multi_inference_threshold(&set(&mixed)).unwrap().tau - 15.0 / 54.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(CalibrationSet::from_values(&[-1.0f64], PromptMode::Cot, Method::Entropy).is_err());
        assert!(CalibrationSet::from_values(&[f64::NAN], PromptMode::Cot, Method::Entropy).is_err());
    }

    #[test]
    fn build_keeps_only_correct_answers() {
        let items: Vec<QAItem> = [("a", "Paris"), ("b", "Rome"), ("c", "Oslo")]
            .iter()
            .map(|(id, gold)| QAItem::new(*id, format!("q {id}"), *gold, Dataset::HotpotQa))
            .collect();
        let cal = build_calibration_set(&items, PromptMode::Cot, Method::Entropy, 2, |item| {
            let answer = if item.id == "b" { "Milan" } else { item.gold.as_str() };
            Ok::<_, String>(BaseOutcome {
                answer: Some(answer.to_string()),
                uncertainty: Some(Uncertainty::new(item.id.len() as f64 * 0.5, Method::Entropy)),
            })
        })
        .unwrap();
        let ids: Vec<&str> = cal.entries.iter().map(|e| e.question_id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);

        let none = build_calibration_set::<f64, _, _>(&items, PromptMode::Cot, Method::Entropy, 1, |_| {
            Ok::<_, String>(BaseOutcome { answer: None, uncertainty: None })
        });
        assert!(matches!(none, Err(CalibrationError::EmptyCalibrationSet)));
    }

    #[test]
    fn sweep_rows_and_degenerate_distribution() {
        let s = set(&[0.5; 6]);
        let rows = sweep_quantiles::<_, _, CalibrationError>(&s, &[0.1, 0.5, 0.9], |p| {
            Ok(SweepEval { escalations: if p.tau < 0.5 { 3 } else { 1 }, metric: 0.0, tool_calls: 0 })
        })
        .unwrap();
        assert!(rows.iter().all(|r| r.tau == 0.5 && r.escalations == 1));
        let single = sweep_quantiles::<_, _, CalibrationError>(&s, &[0.3], |_| {
            Ok(SweepEval { escalations: 0, metric: 0.0, tool_calls: 0 })
        })
        .unwrap();
        assert_eq!(single.len(), 1);
        assert!(matches!(
            sweep_quantiles::<_, _, CalibrationError>(&s, &[0.9, 0.1], |_| unreachable!()),
            Err(CalibrationError::UnsortedQuantiles)
        ));
    }

    #[test]
    fn subsample_is_seeded() {
        let s = set(&(0..50).map(f64::from).collect::<Vec<_>>());
        assert_eq!(s.subsample(10, 3), s.subsample(10, 3));
        assert_eq!(s.subsample(10, 3).len(), 10);
        assert_eq!(s.subsample(100, 3).len(), 50);
    }

    #[test]
    fn threshold_method_parsing_and_serde() {
        assert_eq!("max".parse::<ThresholdMethod>().unwrap(), ThresholdMethod::Max);
        assert_eq!("quantile:0.8".parse::<ThresholdMethod>().unwrap(), ThresholdMethod::Quantile { q: 0.8 });
        let json = serde_json::to_string(&ThresholdMethod::Quantile { q: 0.9 }).unwrap();
        assert_eq!(json, r#"{"method":"quantile","q":0.9}"#);
    }

    #[test]
    fn boundary_accepts() {
        assert!(!should_escalate(0.5, 0.5));
        assert!(should_escalate(0.500001, 0.5));
    }
}
