use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ToolError;

/// Action vocabulary offered to the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grammar {
    /// `Search[entity]`, `Lookup[keyword]`, `Finish[answer]`
    Wikipedia,
    /// `search[query]`, `finish[answer]`
    Web,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Search,
    Lookup,
    WebSearch,
    Finish,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolAction {
    pub kind: ActionKind,
    pub argument: String,
}

impl ToolAction {
    pub fn new(kind: ActionKind, argument: impl Into<String>) -> Self {
        Self { kind, argument: argument.into() }
    }

    pub fn is_finish(&self) -> bool {
        self.kind == ActionKind::Finish
    }
}

/// Parse `Verb[argument]`, optionally prefixed by `Action N:`.
///
/// Verbs match case-insensitively; the argument is the text between the first
/// `[` and the last `]`, trimmed. Only `Finish` may have an empty argument.
pub fn parse_action(line: &str, grammar: Grammar) -> Result<ToolAction, ToolError> {
    static SHAPE: OnceLock<Regex> = OnceLock::new();
    let re = SHAPE.get_or_init(|| {
        Regex::new(r"^\s*(?:Action\s*\d*\s*:\s*)?([A-Za-z]+)\s*\[(.*)\]\s*$").unwrap()
    });
    let malformed = || ToolError::MalformedAction(line.trim().to_string());
    let caps = re.captures(line).ok_or_else(malformed)?;
    let verb = caps[1].to_ascii_lowercase();
    let argument = caps[2].trim().to_string();
    let kind = match (grammar, verb.as_str()) {
        (Grammar::Wikipedia, "search") => ActionKind::Search,
        (Grammar::Wikipedia, "lookup") => ActionKind::Lookup,
        (Grammar::Web, "search") => ActionKind::WebSearch,
        (_, "finish") => ActionKind::Finish,
        _ => return Err(malformed()),
    };
    if argument.is_empty() && kind != ActionKind::Finish {
        return Err(malformed());
    }
    Ok(ToolAction { kind, argument })
}

/// Inverse of [`parse_action`] for the casing each grammar's prompts use.
pub fn render_action(action: &ToolAction, grammar: Grammar) -> String {
    let verb = match (grammar, action.kind) {
        (Grammar::Wikipedia, ActionKind::Search) => "Search",
        (Grammar::Wikipedia, ActionKind::Lookup) => "Lookup",
        (Grammar::Wikipedia, ActionKind::Finish) => "Finish",
        (Grammar::Web, ActionKind::WebSearch) => "search",
        (Grammar::Web, ActionKind::Finish) => "finish",
        // Cross-grammar actions render with the verb the other grammar would parse.
        (Grammar::Wikipedia, ActionKind::WebSearch) => "Search",
        (Grammar::Web, ActionKind::Search) => "search",
        (Grammar::Web, ActionKind::Lookup) => "lookup",
    };
    format!("{verb}[{}]", action.argument)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exemplar_actions() {
        assert_eq!(
            parse_action("Search[Colorado orogeny]", Grammar::Wikipedia).unwrap(),
            ToolAction::new(ActionKind::Search, "Colorado orogeny")
        );
        assert_eq!(
            parse_action("Finish[Richard Nixon]", Grammar::Wikipedia).unwrap(),
            ToolAction::new(ActionKind::Finish, "Richard Nixon")
        );
        assert_eq!(
            parse_action("Action 2: Lookup[eastern sector]", Grammar::Wikipedia).unwrap(),
            ToolAction::new(ActionKind::Lookup, "eastern sector")
        );
        assert_eq!(
            parse_action("search[10 AU to light years]", Grammar::Web).unwrap(),
            ToolAction::new(ActionKind::WebSearch, "10 AU to light years")
        );
    }

    #[test]
    fn malformed_actions() {
        for bad in ["Think[hmm]", "Search Colorado", "Search[]", "Lookup[x]extra", ""] {
            assert!(matches!(parse_action(bad, Grammar::Wikipedia), Err(ToolError::MalformedAction(_))), "{bad}");
        }
        assert!(parse_action("lookup[x]", Grammar::Web).is_err());
    }

    #[test]
    fn empty_finish_is_allowed() {
        assert_eq!(parse_action("Finish[]", Grammar::Wikipedia).unwrap().argument, "");
    }

    #[test]
    fn brackets_inside_argument() {
        let a = parse_action("Search[Adam Clayton Powell (film)]", Grammar::Wikipedia).unwrap();
        assert_eq!(a.argument, "Adam Clayton Powell (film)");
        let a = parse_action("Finish[a [b] c]", Grammar::Wikipedia).unwrap();
        assert_eq!(a.argument, "a [b] c");
    }
}
