use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agent::{AnswerSource, EpisodeRecord};

/// Episodes that ended on one answer source. `source` is `None` for
/// episodes without a final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceBreakdown {
    pub source: Option<AnswerSource>,
    pub episodes: usize,
    pub correct: usize,
    pub tool_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub n_items: usize,
    pub correct: usize,
    /// Exact-match percentage, one decimal.
    pub em: f64,
    pub tool_calls: u64,
    pub output_tokens: u64,
    /// Episodes whose base answer was rejected.
    pub stage1_escalated: usize,
    pub by_source: Vec<SourceBreakdown>,
    pub records: Vec<EpisodeRecord>,
}

pub(crate) fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Totals over a run. `None` for an empty run.
pub fn aggregate(records: &[EpisodeRecord]) -> Option<RunReport> {
    let first = records.first()?;
    let method = if records.iter().all(|r| r.method == first.method) { first.method.clone() } else { "mixed".into() };
    let correct = records.iter().filter(|r| r.em_correct).count();
    let mut by_source: Vec<SourceBreakdown> = Vec::new();
    for r in records {
        let idx = match by_source.iter().position(|b| b.source == r.answer_source) {
            Some(i) => i,
            None => {
                by_source.push(SourceBreakdown { source: r.answer_source, episodes: 0, correct: 0, tool_calls: 0 });
                by_source.len() - 1
            }
        };
        let b = &mut by_source[idx];
        b.episodes += 1;
        b.correct += usize::from(r.em_correct);
        b.tool_calls += u64::from(r.tool_calls);
    }
    by_source.sort_by_key(|b| b.source.map_or(u8::MAX, |s| s as u8));
    Some(RunReport {
        method,
        n_items: records.len(),
        correct,
        em: round1(100.0 * correct as f64 / records.len() as f64),
        tool_calls: records.iter().map(|r| u64::from(r.tool_calls)).sum(),
        output_tokens: records.iter().map(|r| r.output_tokens).sum(),
        stage1_escalated: records.iter().filter(|r| r.stage1_escalated()).count(),
        by_source,
        records: records.to_vec(),
    })
}

impl RunReport {
    pub fn to_canonical_json(&self) -> String {
        crate::canonical::to_canonical_string(self).expect("reports serialise")
    }

    /// Summary JSON without the per-episode records.
    pub fn summary_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("reports serialise");
        v.as_object_mut().expect("object").remove("records");
        crate::canonical::to_canonical_string(&v).expect("reports serialise")
    }

    /// Plain-text table; the bracketed count is the run's tool calls.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>6} {:>14} {:>14}", "method", "n", "EM (tools)", "output tokens");
        let em = format!("{:.1} ({})", self.em, self.tool_calls);
        let _ = writeln!(out, "{:<24} {:>6} {:>14} {:>14}", self.method, self.n_items, em, self.output_tokens);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>10}", "source", "episodes", "correct", "tool calls");
        for b in &self.by_source {
            let name = b.source.map_or("none", AnswerSource::as_str);
            let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>10}", name, b.episodes, b.correct, b.tool_calls);
        }
        let _ = writeln!(out, "stage-1 escalations: {}", self.stage1_escalated);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Dataset;

    fn record(id: &str, correct: bool, source: Option<AnswerSource>, tools: u32) -> EpisodeRecord {
        EpisodeRecord {
            id: id.into(),
            dataset: Dataset::HotpotQa,
            method: "uala-s".into(),
            gold: "x".into(),
            final_answer: source.map(|_| "x".into()),
            answer_source: source,
            em_correct: correct,
            decisions: Vec::new(),
            tool_calls: tools,
            output_tokens: 10,
            base_answer: None,
            base_uncertainty: None,
            base_em_correct: None,
            tool_answer: None,
            tool_uncertainty: None,
            events: Vec::new(),
        }
    }

    #[test]
    fn half_correct_is_fifty() {
        let rs = vec![
            record("1", true, Some(AnswerSource::Base), 0),
            record("2", false, Some(AnswerSource::Tool), 3),
            record("3", true, Some(AnswerSource::Oracle), 2),
            record("4", false, None, 7),
        ];
        let r = aggregate(&rs).unwrap();
        assert_eq!(r.em, 50.0);
        assert_eq!(r.tool_calls, 12);
        assert_eq!(r.output_tokens, 40);
        assert_eq!(r.by_source.len(), 4);
        assert_eq!(r.by_source[3].source, None);
        assert!(r.to_table().contains("50.0 (12)"));
    }

    #[test]
    fn base_only_has_no_tool_calls() {
        let rs = vec![record("1", true, Some(AnswerSource::Base), 0); 3];
        assert_eq!(aggregate(&rs).unwrap().tool_calls, 0);
        assert!(aggregate(&[]).is_none());
    }

    #[test]
    fn em_rounds_to_one_decimal() {
        let rs = vec![
            record("1", true, Some(AnswerSource::Base), 0),
            record("2", false, Some(AnswerSource::Base), 0),
            record("3", false, Some(AnswerSource::Base), 0),
        ];
        assert_eq!(aggregate(&rs).unwrap().em, 33.3);
    }
}
