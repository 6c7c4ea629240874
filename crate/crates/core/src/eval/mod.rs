//! Exact-match scoring, dataset ingestion and run reports.

mod dataset;
mod report;

pub use dataset::{load_dataset, read_items, write_items, Dataset, DatasetError, QAItem, Sampling};
pub use report::{aggregate, RunReport, SourceBreakdown};

use std::sync::OnceLock;

use regex::Regex;

/// SQuAD-style answer normalisation.
///
/// Lowercase, drop ASCII punctuation, drop the articles `a`/`an`/`the`, then
/// collapse whitespace. Idempotent.
pub fn normalize_answer(s: &str) -> String {
    static ARTICLES: OnceLock<Regex> = OnceLock::new();
    let articles = ARTICLES.get_or_init(|| Regex::new(r"\b(a|an|the)\b").unwrap());
    let lowered = s.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = articles.replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn exact_match(pred: Option<&str>, gold: &str) -> bool {
    match pred {
        Some(p) => normalize_answer(p) == normalize_answer(gold),
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalisation_examples() {
        assert_eq!(normalize_answer("Richard Nixon."), "richard nixon");
        assert_eq!(normalize_answer("The Saimaa Gesture"), "saimaa gesture");
        assert_eq!(normalize_answer("  An  apple,  a day "), "apple day");
        assert_eq!(normalize_answer(""), "");
    }

    #[test]
    fn exact_match_examples() {
        assert!(exact_match(Some("1,800 to 7,000 ft"), "1,800 to 7,000 ft"));
        assert!(!exact_match(None, "anything"));
        assert!(exact_match(Some("yes"), "Yes"));
        assert!(!exact_match(Some("Nixon"), "Richard Nixon"));
    }
}
