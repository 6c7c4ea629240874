use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::gateway::Completion;
use crate::uncertainty::{
    estimate_free_form_scoped, estimate_single_token, Method, ScoredAnswer, Uncertainty, UncertaintyError,
    WeightScope,
};

const MARKER: &str = "Answer:";

/// Answer text plus, when the provider returned them, its token log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedAnswer {
    pub text: String,
    pub scored: Option<ScoredAnswer<f64>>,
}

/// The text the token offsets refer to.
pub(crate) fn working_text(c: &Completion) -> String {
    if c.tokens.is_empty() {
        c.text.clone()
    } else {
        c.tokens.concat()
    }
}

pub(crate) fn trim(text: &str, r: Range<usize>) -> Range<usize> {
    let s = &text[r.clone()];
    let start = r.start + (s.len() - s.trim_start().len());
    let end = r.end - (s.len() - s.trim_end().len());
    start..end.max(start)
}

/// Byte range of the answer after the final `Answer:` marker, to the end of
/// that line, trimmed. A trailing bracketed confidence such as `[0.8]` is not
/// part of the answer. `None` when there is no marker or nothing follows it.
pub fn answer_range(text: &str) -> Option<Range<usize>> {
    static CONFIDENCE: OnceLock<Regex> = OnceLock::new();
    let conf = CONFIDENCE.get_or_init(|| Regex::new(r"\s*\[\s*[0-9]*\.?[0-9]+\s*\]\s*$").unwrap());
    let start = text.rfind(MARKER)? + MARKER.len();
    let end = text[start..].find('\n').map_or(text.len(), |i| start + i);
    let mut r = trim(text, start..end);
    if let Some(m) = conf.find(&text[r.clone()]) {
        r = trim(text, r.start..r.start + m.start());
    }
    (!r.is_empty()).then_some(r)
}

fn is_sentence_final(token: &str) -> bool {
    matches!(token.trim(), "." | "!" | "?")
}

/// Cut `range` of the completion's working text out as an answer.
///
/// The span holds every token overlapping the range; trailing tokens that are
/// nothing but `.`, `!` or `?` are dropped from both the span and the text.
pub fn extract_span(c: &Completion, range: Range<usize>) -> Result<ExtractedAnswer, UncertaintyError> {
    let text = working_text(c);
    if c.tokens.is_empty() {
        return Ok(ExtractedAnswer { text: text[range].to_string(), scored: None });
    }
    let mut picked = Vec::new();
    let mut offset = 0;
    for (i, t) in c.tokens.iter().enumerate() {
        let (a, b) = (offset, offset + t.len());
        offset = b;
        if a < range.end && b > range.start {
            picked.push((i, a));
        }
    }
    let mut end = range.end;
    while picked.len() > 1 && is_sentence_final(&c.tokens[picked.last().unwrap().0]) {
        end = end.min(picked.pop().unwrap().1.max(range.start));
    }
    let r = trim(&text, range.start..end);
    let answer = text[r].to_string();
    if picked.is_empty() {
        return Ok(ExtractedAnswer { text: answer, scored: None });
    }
    let tokens = picked.iter().map(|&(i, _)| c.tokens[i].clone()).collect();
    // Endpoints occasionally report log-probabilities a hair above zero.
    let lps = picked.iter().map(|&(i, _)| c.token_logprobs[i].min(0.0)).collect();
    let scored = ScoredAnswer::new(answer.clone(), tokens, lps)?;
    Ok(ExtractedAnswer { text: answer, scored: Some(scored) })
}

/// The answer after the final `Answer:` marker, or `None` when extraction fails.
pub fn extract_answer(c: &Completion) -> Result<Option<ExtractedAnswer>, UncertaintyError> {
    let text = working_text(c);
    match answer_range(&text) {
        Some(r) => extract_span(c, r).map(Some),
        None => Ok(None),
    }
}

/// One-token answers use `|p|`; longer ones use the configured free-form
/// estimator, or Entropy when the profile itself is single-token.
pub fn score_answer(
    answer: &ScoredAnswer<f64>,
    estimator: Method,
    scope: WeightScope,
) -> Result<Uncertainty<f64>, UncertaintyError> {
    if answer.len() == 1 {
        return estimate_single_token(answer.token_logprobs[0]);
    }
    if estimator == Method::SingleToken {
        return estimate_free_form_scoped(&answer.token_logprobs, Method::Entropy, scope);
    }
    estimate_free_form_scoped(&answer.token_logprobs, estimator, scope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn completion(pieces: &[(&str, f64)]) -> Completion {
        Completion::from_tokens(
            pieces.iter().map(|(t, _)| t.to_string()).collect(),
            pieces.iter().map(|(_, p)| *p).collect(),
        )
    }

    #[test]
    fn standard_answer_span() {
        let c = completion(&[("Answer", -0.01), (":", -0.02), (" Richard", -0.3), (" Nixon", -0.1)]);
        let a = extract_answer(&c).unwrap().unwrap();
        assert_eq!(a.text, "Richard Nixon");
        let s = a.scored.unwrap();
        assert_eq!(s.tokens, vec![" Richard", " Nixon"]);
        assert_eq!(s.token_logprobs, vec![-0.3, -0.1]);
    }

    #[test]
    fn cot_answer_uses_final_marker() {
        let c = Completion::uniform(
            "Thought: Let's think step by step. So the answer is 1,800 to 7,000 ft.\nAnswer: 1,800 to 7,000 ft",
            -0.2,
        );
        let a = extract_answer(&c).unwrap().unwrap();
        assert_eq!(a.text, "1,800 to 7,000 ft");
        assert_eq!(a.scored.unwrap().tokens.concat(), " 1,800 to 7,000 ft");
    }

    #[test]
    fn missing_marker_fails() {
        assert!(extract_answer(&Completion::uniform("Richard Nixon", -0.1)).unwrap().is_none());
        assert!(extract_answer(&Completion::uniform("Thought: hmm.\nAnswer:", -0.1)).unwrap().is_none());
    }

    #[test]
    fn single_token_answers() {
        for text in ["Answer: C", "Thought: P = IV.\nAnswer: No"] {
            let a = extract_answer(&Completion::uniform(text, -0.7)).unwrap().unwrap();
            let s = a.scored.unwrap();
            assert_eq!(s.len(), 1);
            let u = score_answer(&s, Method::Entropy, WeightScope::Sequence).unwrap();
            assert_eq!(u.method, Method::SingleToken);
            assert!((u.value - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn trailing_period_is_dropped() {
        let c = completion(&[("Answer", 0.0), (":", 0.0), (" Yes", -0.4), (".", -0.9)]);
        let a = extract_answer(&c).unwrap().unwrap();
        assert_eq!(a.text, "Yes");
        assert_eq!(a.scored.unwrap().token_logprobs, vec![-0.4]);
    }

    #[test]
    fn inner_punctuation_is_kept() {
        let c = completion(&[("Answer", 0.0), (":", 0.0), (" U", -0.1), (".", -0.2), ("S", -0.3), (".", -0.4)]);
        let a = extract_answer(&c).unwrap().unwrap();
        assert_eq!(a.text, "U.S");
        assert_eq!(a.scored.unwrap().tokens, vec![" U", ".", "S"]);
    }

    #[test]
    fn confidence_suffix_is_not_answer() {
        let c = Completion::uniform("Thought: sure.\nAnswer: Richard Nixon [0.9]", -0.1);
        assert_eq!(extract_answer(&c).unwrap().unwrap().text, "Richard Nixon");
        let c = Completion::uniform("Answer: Richard Nixon\nAnswer[0.9]", -0.1);
        assert_eq!(extract_answer(&c).unwrap().unwrap().text, "Richard Nixon");
    }

    #[test]
    fn no_logprobs_still_extracts_text() {
        let mut c = Completion::uniform("Answer: Paris", -0.1);
        c.tokens.clear();
        c.token_logprobs.clear();
        let a = extract_answer(&c).unwrap().unwrap();
        assert_eq!(a.text, "Paris");
        assert!(a.scored.is_none());
    }
}
