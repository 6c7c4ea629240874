use super::PromptMode;
use crate::eval::{Dataset, QAItem};
use crate::tools::Grammar;

pub const VERBAL_INSTRUCTION: &str = include_str!("../../prompts/verbal_instruction.txt");

/// Few-shot prompt texts for one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptSet {
    pub standard: &'static str,
    pub cot: &'static str,
    pub react: &'static str,
}

impl PromptSet {
    pub fn for_dataset(dataset: Dataset) -> Self {
        match dataset {
            Dataset::HotpotQa => Self {
                standard: include_str!("../../prompts/hotpotqa_standard.txt"),
                cot: include_str!("../../prompts/hotpotqa_cot.txt"),
                react: include_str!("../../prompts/hotpotqa_react.txt"),
            },
            Dataset::StrategyQa => Self {
                standard: include_str!("../../prompts/strategyqa_standard.txt"),
                cot: include_str!("../../prompts/strategyqa_cot.txt"),
                react: include_str!("../../prompts/strategyqa_react.txt"),
            },
            Dataset::Mmlu => Self {
                standard: include_str!("../../prompts/mmlu_standard.txt"),
                cot: include_str!("../../prompts/mmlu_cot.txt"),
                react: include_str!("../../prompts/mmlu_react.txt"),
            },
        }
    }

    pub fn shots(&self, mode: PromptMode) -> &'static str {
        match mode {
            PromptMode::Standard => self.standard,
            PromptMode::Cot => self.cot,
        }
    }

    /// Shots, a blank line, then the question; the model continues with
    /// `Answer:` (Standard) or `Thought:` (CoT).
    pub fn base_prompt(&self, mode: PromptMode, item: &QAItem) -> String {
        with_question(self.shots(mode), item)
    }

    /// The CoT exemplars under the verbalised-confidence instruction.
    pub fn verbal_prompt(&self, item: &QAItem) -> String {
        let examples = self.cot.split_once('\n').map_or("", |(_, rest)| rest);
        with_question(&format!("{}{examples}", VERBAL_INSTRUCTION), item)
    }

    /// Prompt prefix for the tool loop; step labels are appended per step.
    pub fn react_prompt(&self, item: &QAItem) -> String {
        with_question(self.react, item)
    }
}

fn with_question(shots: &str, item: &QAItem) -> String {
    format!("{shots}\nQuestion: {}\n", item.prompt_text())
}

/// CoT for HotpotQA, Standard elsewhere.
pub fn default_base_mode(dataset: Dataset) -> PromptMode {
    match dataset {
        Dataset::HotpotQa => PromptMode::Cot,
        Dataset::StrategyQa | Dataset::Mmlu => PromptMode::Standard,
    }
}

/// Wikipedia actions for HotpotQA and StrategyQA, web search for MMLU.
pub fn grammar_for(dataset: Dataset) -> Grammar {
    match dataset {
        Dataset::HotpotQa | Dataset::StrategyQa => Grammar::Wikipedia,
        Dataset::Mmlu => Grammar::Web,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::{parse_action, render_action};

    #[test]
    fn shot_counts() {
        for (d, n) in [(Dataset::HotpotQa, 6), (Dataset::StrategyQa, 4), (Dataset::Mmlu, 4)] {
            let p = PromptSet::for_dataset(d);
            for text in [p.standard, p.cot, p.react] {
                assert_eq!(text.matches("Question: ").count(), n, "{d}");
            }
        }
    }

    #[test]
    fn base_prompt_shape() {
        let item = QAItem::new("q", "Who?", "x", Dataset::HotpotQa);
        let p = PromptSet::for_dataset(Dataset::HotpotQa).base_prompt(PromptMode::Standard, &item);
        assert!(p.starts_with("Answer the question:\nQuestion: What is the elevation range"));
        assert!(p.ends_with("Answer: Yes\n\nQuestion: Who?\n"));
    }

    #[test]
    fn verbal_prompt_swaps_instruction() {
        let item = QAItem::new("q", "Who?", "x", Dataset::HotpotQa);
        let p = PromptSet::for_dataset(Dataset::HotpotQa).verbal_prompt(&item);
        assert!(p.starts_with(VERBAL_INSTRUCTION));
        assert!(p.contains("Answer[Probability]"));
        assert_eq!(p.matches("Here are some examples.").count(), 1);
    }

    #[test]
    fn every_exemplar_action_round_trips() {
        for d in [Dataset::HotpotQa, Dataset::StrategyQa, Dataset::Mmlu] {
            let grammar = grammar_for(d);
            let mut n = 0;
            for line in PromptSet::for_dataset(d).react.lines().filter(|l| l.starts_with("Action")) {
                let (_, action) = line.split_once(": ").unwrap();
                let parsed = parse_action(action, grammar).unwrap_or_else(|e| panic!("{line}: {e}"));
                assert_eq!(render_action(&parsed, grammar), action);
                n += 1;
            }
            assert!(n > 0);
        }
    }
}
