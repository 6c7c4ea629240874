use std::ops::Range;

use super::episode::EpisodeCtx;
use super::extract::{extract_span, trim, working_text, ExtractedAnswer};
use super::{AgentError, PromptSet, Step, StepStage};
use crate::eval::QAItem;
use crate::gateway::{CallStage, CompletionRequest, RequestTag};
use crate::tools::{parse_action, Grammar, Observation, ToolError, ToolSession};

/// Result of one tool loop.
#[derive(Debug, Clone)]
pub struct ReactOutcome {
    /// `None` when the loop ran out of steps or finished with an empty answer.
    pub answer: Option<ExtractedAnswer>,
    pub steps: Vec<Step>,
    pub tool_calls: u32,
    pub(crate) finish: Option<FinishSite>,
}

/// The request whose completion held the `Finish` action, kept so the same
/// step can be re-sampled.
#[derive(Debug, Clone)]
pub(crate) struct FinishSite {
    pub request: CompletionRequest,
    pub reprompt: bool,
    pub action_label: String,
}

struct Labels {
    thought: String,
    action: String,
    observation: String,
}

/// Numbered labels for the Wikipedia grammar, bare ones for web search.
fn labels(grammar: Grammar, i: u32) -> Labels {
    match grammar {
        Grammar::Wikipedia => Labels {
            thought: format!("Thought {i}"),
            action: format!("Action {i}"),
            observation: format!("Observation {i}"),
        },
        Grammar::Web => Labels { thought: "Thought".into(), action: "Action".into(), observation: "Observation".into() },
    }
}

/// The action text in a step completion: the first line after `{label}:`,
/// or the first line of a re-prompted completion.
pub(crate) fn action_range(text: &str, label: &str, reprompt: bool) -> Option<Range<usize>> {
    let start = if reprompt {
        0
    } else {
        let marker = format!("\n{label}:");
        text.find(&marker)? + marker.len()
    };
    let end = text[start..].find('\n').map_or(text.len(), |i| start + i);
    let r = trim(text, start..end);
    (!r.is_empty()).then_some(r)
}

/// Bracket contents of a `Finish[...]` action located at `action` in `text`.
pub(crate) fn finish_range(text: &str, action: Range<usize>) -> Option<Range<usize>> {
    let s = &text[action.clone()];
    let open = s.find('[')?;
    let close = s.rfind(']')?;
    (close > open).then(|| trim(text, action.start + open + 1..action.start + close))
}

pub(crate) fn run_react(
    ctx: &EpisodeCtx<'_>,
    prompts: &PromptSet,
    item: &QAItem,
    session: &mut ToolSession,
    max_steps: u32,
    max_tokens: u32,
) -> Result<ReactOutcome, AgentError> {
    let grammar = session.grammar();
    let mut prompt = prompts.react_prompt(item);
    let mut steps = Vec::new();
    for i in 1..=max_steps {
        let l = labels(grammar, i);
        let req = CompletionRequest::greedy(
            format!("{prompt}{}:", l.thought),
            RequestTag::new(ctx.id, CallStage::ToolLoop).step(i),
        )
        .with_stop([format!("\n{}:", l.observation)])
        .with_max_tokens(max_tokens);
        let first = ctx.complete(&req)?;
        let first_text = working_text(&first);
        let mut step = Step::new(StepStage::ToolLoop, i);

        let (completion, text, range, request, reprompt, thought) = match action_range(&first_text, &l.action, false) {
            Some(r) => {
                let cut = first_text.find(&format!("\n{}:", l.action)).expect("marker found above");
                let thought = first_text[..cut].trim().to_string();
                (first, first_text, Some(r), req, false, thought)
            }
            None => {
                let thought = first_text.trim().lines().next().unwrap_or("").trim().to_string();
                let retry = CompletionRequest::greedy(
                    format!("{prompt}{}: {thought}\n{}:", l.thought, l.action),
                    RequestTag::new(ctx.id, CallStage::ToolLoop).step(i).attempt(1),
                )
                .with_stop(["\n"])
                .with_max_tokens(max_tokens);
                let second = ctx.complete(&retry)?;
                let text = working_text(&second);
                let range = action_range(&text, &l.action, true);
                (second, text, range, retry, true, thought)
            }
        };
        step.thought = Some(thought.clone());
        let action_text = range.clone().map_or(String::new(), |r| text[r].to_string());

        let parsed = match range {
            Some(_) => parse_action(&action_text, grammar),
            None => Err(ToolError::MalformedAction(String::new())),
        };
        let observation = match parsed {
            Ok(action) if action.is_finish() => {
                let span = finish_range(&text, range.expect("parsed action has a range"));
                let answer = match span {
                    Some(r) if !r.is_empty() => Some(extract_span(&completion, r).map_err(|e| ctx.uncertainty(e))?),
                    _ => None,
                };
                step.answer = answer.as_ref().map(|a| a.text.clone());
                step.action = Some(action);
                steps.push(step);
                let finish = FinishSite { request, reprompt, action_label: l.action };
                return Ok(ReactOutcome { answer, steps, tool_calls: session.calls(), finish: Some(finish) });
            }
            Ok(action) => {
                let obs = match session.execute(&action) {
                    Ok(obs) => obs,
                    Err(e @ (ToolError::Transport(_) | ToolError::NoPageContext | ToolError::Unsupported { .. })) => {
                        Observation::step_error(format!("Tool error: {e}."))
                    }
                    Err(e) => return Err(ctx.tool(e)),
                };
                step.action = Some(action);
                obs
            }
            Err(_) => {
                step.raw_action = Some(action_text.clone());
                Observation::step_error(format!("Invalid action: {action_text}"))
            }
        };
        prompt.push_str(&format!(
            "{}: {thought}\n{}: {action_text}\n{}: {}\n",
            l.thought, l.action, l.observation, observation.text
        ));
        step.observation = Some(observation);
        steps.push(step);
    }
    Ok(ReactOutcome { answer: None, steps, tool_calls: session.calls(), finish: None })
}

/// The `Finish` argument of a re-sampled step completion, if it has one.
pub(crate) fn sampled_finish(text: &str, site: &FinishSite, grammar: Grammar) -> Option<String> {
    let r = action_range(text, &site.action_label, site.reprompt)?;
    let action = parse_action(&text[r.clone()], grammar).ok()?;
    if !action.is_finish() {
        return None;
    }
    finish_range(text, r).map(|f| text[f].to_string()).filter(|s| !s.is_empty())
}
