//! The reason/retrieve/answer loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::parse::{count_tokens, parse_segments, render_one, token_starts, SegmentKind, TaggedSegment};
use super::prompt::EpisodePrompt;
use crate::index::FlatIndex;

/// Sequences at which a policy emission is cut.
pub const STOP_SEQUENCES: [&str; 2] = ["</tool_call>", "</answer>"];

/// Source of retrieved passages.
pub trait Retriever: Send + Sync {
    /// Exactly one passage, possibly the blank placeholder.
    fn retrieve(&self, query: &str) -> String;
}

impl Retriever for FlatIndex {
    fn retrieve(&self, query: &str) -> String {
        FlatIndex::retrieve(self, query)
    }
}

impl<R: Retriever + ?Sized> Retriever for &R {
    fn retrieve(&self, query: &str) -> String {
        (**self).retrieve(query)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("remote policy: {0}")]
    Remote(String),
    #[error("policy: {0}")]
    Other(String),
}

/// A choice made by a policy over a finite action set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub state: usize,
    pub action: usize,
    /// Log-probability of `action` under the acting parameters.
    pub logprob: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Generation {
    pub text: String,
    /// One entry per generated token when the policy exposes them.
    pub token_logprobs: Option<Vec<f64>>,
    /// Token count under the policy's own tokenizer, if it differs from
    /// whitespace splitting.
    pub num_tokens: Option<usize>,
    pub decision: Option<Decision>,
}

impl Generation {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            ..Self::default()
        }
    }
}

/// What a policy sees before each emission.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeContext<'a> {
    pub prompt: &'a EpisodePrompt,
    /// Prompt followed by every emission and tool response so far.
    pub transcript: &'a str,
    pub last_tool_response: Option<&'a str>,
    pub retrieval_calls: usize,
    pub emissions: usize,
    pub remaining_budget: usize,
}

pub trait Policy {
    fn generate(&mut self, ctx: &EpisodeContext<'_>) -> Result<Generation, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn generate(&mut self, ctx: &EpisodeContext<'_>) -> Result<Generation, PolicyError> {
        (**self).generate(ctx)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn generate(&mut self, ctx: &EpisodeContext<'_>) -> Result<Generation, PolicyError> {
        (**self).generate(ctx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Maximum number of executed retrieval calls.
    pub max_turns: usize,
    /// Maximum generated tokens per episode.
    pub token_budget: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_turns: 5,
            token_budget: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Policy,
    Environment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub source: Source,
    pub text: String,
    /// First whitespace token of this event in the episode stream.
    pub token_start: usize,
    pub token_len: usize,
    /// Generated-token count charged against the budget; zero for tool responses.
    pub generated_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Answered,
    Malformed,
    TurnLimit,
    TokenBudget,
    EmptyGeneration,
    PolicyFailure,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub generated_tokens: usize,
    pub environment_tokens: usize,
    pub retrieval_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub prompt: EpisodePrompt,
    pub events: Vec<TranscriptEvent>,
    pub segments: Vec<TaggedSegment>,
    pub answer_text: Option<String>,
    pub parse_ok: bool,
    pub termination: Termination,
    pub stats: EpisodeStats,
}

impl Trajectory {
    /// Emissions and tool responses, one per line.
    pub fn transcript_text(&self) -> String {
        self.events.iter().map(|e| e.text.as_str()).collect::<Vec<_>>().join("\n")
    }

    /// Log-probabilities of every generated token, in order, when all emissions
    /// recorded them.
    pub fn generated_logprobs(&self) -> Option<Vec<f64>> {
        let mut out = Vec::new();
        for e in self.events.iter().filter(|e| e.source == Source::Policy) {
            out.extend_from_slice(e.logprobs.as_ref()?);
        }
        Some(out)
    }

    pub fn decisions(&self) -> impl Iterator<Item = &Decision> {
        self.events.iter().filter_map(|e| e.decision.as_ref())
    }
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("token budget must be at least 1")]
    ZeroBudget,
    #[error("policy failed after {} events: {source}", partial.events.len())]
    Policy {
        source: PolicyError,
        partial: Box<Trajectory>,
    },
}

/// Running episode: transcript plus counters. Only ever grows.
#[derive(Debug, Clone)]
pub struct EpisodeState {
    prompt: EpisodePrompt,
    context: String,
    events: Vec<TranscriptEvent>,
    segments: Vec<TaggedSegment>,
    stream_tokens: usize,
    turn_count: usize,
    generated: usize,
    environment_tokens: usize,
    last_response: Option<usize>,
    terminated: Option<Termination>,
}

impl EpisodeState {
    pub fn new(prompt: EpisodePrompt) -> Self {
        Self {
            context: prompt.text.clone(),
            prompt,
            events: Vec::new(),
            segments: Vec::new(),
            stream_tokens: 0,
            turn_count: 0,
            generated: 0,
            environment_tokens: 0,
            last_response: None,
            terminated: None,
        }
    }

    pub fn turn_count(&self) -> usize {
        self.turn_count
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated.is_some()
    }

    pub fn segments(&self) -> &[TaggedSegment] {
        &self.segments
    }

    pub fn context(&self) -> &str {
        &self.context
    }

    fn push_event(&mut self, event: TranscriptEvent) {
        self.context.push('\n');
        self.context.push_str(&event.text);
        self.stream_tokens += event.token_len;
        self.events.push(event);
    }

    fn push_emission(&mut self, text: String, logprobs: Option<Vec<f64>>, charged: usize, decision: Option<Decision>) {
        let offset = self.stream_tokens;
        for mut seg in parse_segments(&text) {
            if seg.kind == SegmentKind::ToolResponse {
                seg.kind = SegmentKind::Malformed;
            }
            seg.token_span = (seg.token_span.0 + offset, seg.token_span.1 + offset);
            self.segments.push(seg);
        }
        let token_len = token_starts(&text).len();
        self.generated += charged;
        self.push_event(TranscriptEvent {
            source: Source::Policy,
            text,
            token_start: offset,
            token_len,
            generated_tokens: charged,
            logprobs,
            decision,
        });
    }

    fn push_tool_response(&mut self, passage: &str) {
        let text = render_one(SegmentKind::ToolResponse, passage);
        let token_len = count_tokens(&text);
        let start = self.stream_tokens;
        self.segments.push(TaggedSegment {
            kind: SegmentKind::ToolResponse,
            body: passage.trim().to_string(),
            token_span: (start, start + token_len),
        });
        self.environment_tokens += token_len;
        self.turn_count += 1;
        self.last_response = Some(self.events.len());
        self.push_event(TranscriptEvent {
            source: Source::Environment,
            text,
            token_start: start,
            token_len,
            generated_tokens: 0,
            logprobs: None,
            decision: None,
        });
    }

    fn finish(mut self, termination: Termination) -> Trajectory {
        self.terminated = Some(termination);
        let (answer_text, parse_ok) = extract_answer_from(&self.segments);
        Trajectory {
            prompt: self.prompt,
            events: self.events,
            segments: self.segments,
            answer_text,
            parse_ok,
            termination,
            stats: EpisodeStats {
                generated_tokens: self.generated,
                environment_tokens: self.environment_tokens,
                retrieval_calls: self.turn_count,
            },
        }
    }
}

/// Cuts `text` just after the first stop sequence.
pub fn cut_at_stop(text: &str) -> &str {
    STOP_SEQUENCES
        .iter()
        .filter_map(|s| text.find(s).map(|i| i + s.len()))
        .min()
        .map_or(text, |end| &text[..end])
}

/// Keeps at most `n` whitespace tokens, preserving the original spacing.
fn truncate_tokens(text: &str, n: usize) -> &str {
    let starts = token_starts(text);
    if starts.len() <= n {
        return text;
    }
    let end = starts[n];
    text[..end].trim_end()
}

/// Content of the first double-quoted span, trimmed.
pub fn first_quoted(body: &str) -> Option<String> {
    let (open, rest) = body.char_indices().find(|(_, c)| *c == '"' || *c == '\u{201c}')?;
    let after = &body[open + rest.len_utf8()..];
    let close = after.find(['"', '\u{201d}'])?;
    let title = after[..close].trim();
    (!title.is_empty()).then(|| title.to_string())
}

fn extract_answer_from(segments: &[TaggedSegment]) -> (Option<String>, bool) {
    let mut answers = segments.iter().filter(|s| s.kind == SegmentKind::Answer);
    match (answers.next(), answers.next()) {
        (Some(only), None) => match first_quoted(&only.body) {
            Some(title) => (Some(title), true),
            None => (None, false),
        },
        _ => (None, false),
    }
}

/// Title and parse flag: parse succeeds iff there is exactly one answer segment
/// and its body holds a non-empty double-quoted span.
pub fn extract_answer(trajectory: &Trajectory) -> (Option<String>, bool) {
    extract_answer_from(&trajectory.segments)
}

/// Runs one episode to termination.
pub fn run_episode<P, R>(
    policy: &mut P,
    retriever: &R,
    prompt: &EpisodePrompt,
    config: &EpisodeConfig,
) -> Result<Trajectory, EpisodeError>
where
    P: Policy + ?Sized,
    R: Retriever + ?Sized,
{
    if config.token_budget == 0 {
        return Err(EpisodeError::ZeroBudget);
    }
    let mut state = EpisodeState::new(prompt.clone());
    loop {
        let remaining = config.token_budget.saturating_sub(state.generated);
        if remaining == 0 {
            return Ok(state.finish(Termination::TokenBudget));
        }
        let last_tool_response = state.last_response.map(|k| state.events[k].text.as_str());
        let ctx = EpisodeContext {
            prompt,
            transcript: &state.context,
            last_tool_response,
            retrieval_calls: state.turn_count,
            emissions: state.events.len(),
            remaining_budget: remaining,
        };
        let generation = match policy.generate(&ctx) {
            Ok(g) => g,
            Err(source) => {
                return Err(EpisodeError::Policy {
                    source,
                    partial: Box::new(state.finish(Termination::PolicyFailure)),
                })
            }
        };

        let cut = cut_at_stop(&generation.text);
        let text = truncate_tokens(cut, remaining);
        let ws_tokens = count_tokens(text);
        if ws_tokens == 0 {
            return Ok(state.finish(Termination::EmptyGeneration));
        }
        let untouched = text.len() == generation.text.len();
        let charged = match generation.num_tokens {
            Some(n) if untouched => n.clamp(1, remaining),
            _ => ws_tokens,
        };
        let logprobs = match generation.token_logprobs {
            Some(mut lp) if lp.len() == count_tokens(&generation.text) => {
                lp.truncate(ws_tokens);
                Some(lp)
            }
            Some(lp) if untouched && lp.len() == charged => Some(lp),
            Some(lp) => {
                log::debug!("dropping {} log-probs that do not align with the emitted tokens", lp.len());
                None
            }
            None => None,
        };
        let before = state.segments.len();
        state.push_emission(text.to_string(), logprobs, charged, generation.decision);

        let new = &state.segments[before..];
        if new.iter().any(|s| s.kind == SegmentKind::Malformed) {
            return Ok(state.finish(Termination::Malformed));
        }
        match new.last().map(|s| s.kind) {
            Some(SegmentKind::Answer) => return Ok(state.finish(Termination::Answered)),
            Some(SegmentKind::ToolCall) => {
                if state.turn_count >= config.max_turns {
                    return Ok(state.finish(Termination::TurnLimit));
                }
                let query = new.last().unwrap().body.clone();
                let passage = retriever.retrieve(&query);
                state.push_tool_response(&passage);
            }
            _ => {}
        }
    }
}
