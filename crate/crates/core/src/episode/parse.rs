//! Tag protocol parsing.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    Think,
    ToolCall,
    ToolResponse,
    Answer,
    Malformed,
}

impl SegmentKind {
    pub const TAGGED: [SegmentKind; 4] = [
        SegmentKind::Think,
        SegmentKind::ToolCall,
        SegmentKind::ToolResponse,
        SegmentKind::Answer,
    ];

    /// Tag name, `None` for [`SegmentKind::Malformed`].
    pub fn tag(self) -> Option<&'static str> {
        match self {
            SegmentKind::Think => Some("think"),
            SegmentKind::ToolCall => Some("tool_call"),
            SegmentKind::ToolResponse => Some("tool_response"),
            SegmentKind::Answer => Some("answer"),
            SegmentKind::Malformed => None,
        }
    }

    pub fn open_tag(self) -> Option<String> {
        self.tag().map(|t| format!("<{t}>"))
    }

    pub fn close_tag(self) -> Option<String> {
        self.tag().map(|t| format!("</{t}>"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSegment {
    pub kind: SegmentKind,
    /// Trimmed content between the tags. A malformed segment holds the raw
    /// remainder starting at its opening tag.
    pub body: String,
    /// Half-open range of whitespace-token indices in the parsed stream.
    pub token_span: (usize, usize),
}

/// Byte offsets of every whitespace token.
pub(crate) fn token_starts(text: &str) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_token = false;
        } else if !in_token {
            starts.push(i);
            in_token = true;
        }
    }
    starts
}

pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

fn span_for(starts: &[usize], from: usize, to: usize) -> (usize, usize) {
    let a = starts.partition_point(|&s| s < from);
    let b = starts.partition_point(|&s| s < to);
    (a, b.max(a))
}

/// Scans `text` for tagged segments in order of appearance.
///
/// Each segment opens at the earliest remaining opening tag and closes at the
/// first matching closing tag after it. An opening tag without a closing tag
/// yields one malformed segment covering the rest of the text. Text between
/// segments is not a segment.
pub fn parse_segments(text: &str) -> Vec<TaggedSegment> {
    let starts = token_starts(text);
    let opens: Vec<(SegmentKind, String, String)> = SegmentKind::TAGGED
        .iter()
        .map(|k| (*k, k.open_tag().unwrap(), k.close_tag().unwrap()))
        .collect();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let next = opens
            .iter()
            .filter_map(|(k, open, close)| text[pos..].find(open.as_str()).map(|i| (pos + i, *k, open, close)))
            .min_by_key(|(i, ..)| *i);
        let Some((at, kind, open, close)) = next else { break };
        let body_start = at + open.len();
        match text[body_start..].find(close.as_str()) {
            Some(rel) => {
                let end = body_start + rel + close.len();
                out.push(TaggedSegment {
                    kind,
                    body: text[body_start..body_start + rel].trim().to_string(),
                    token_span: span_for(&starts, at, end),
                });
                pos = end;
            }
            None => {
                out.push(TaggedSegment {
                    kind: SegmentKind::Malformed,
                    body: text[at..].trim().to_string(),
                    token_span: span_for(&starts, at, text.len()),
                });
                break;
            }
        }
    }
    out
}

/// Renders segments as `<tag> body </tag>`, one per line. Malformed bodies are
/// written verbatim.
pub fn render_segments(segments: &[TaggedSegment]) -> String {
    segments
        .iter()
        .map(|s| render_one(s.kind, &s.body))
        .collect::<Vec<_>>()
        .join("\n")
}

pub(crate) fn render_one(kind: SegmentKind, body: &str) -> String {
    match (kind.open_tag(), kind.close_tag()) {
        (Some(o), Some(c)) if body.is_empty() => format!("{o} {c}"),
        (Some(o), Some(c)) => format!("{o} {body} {c}"),
        _ => body.to_string(),
    }
}
