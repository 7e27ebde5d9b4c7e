//! Multi-turn episodes: prompt rendering, the tag protocol and the engine loop.

mod engine;
mod parse;
mod prompt;
mod remote;
mod scripted;

use std::io::{BufRead, Write};

pub use engine::{
    cut_at_stop, extract_answer, first_quoted, run_episode, Decision, EpisodeConfig, EpisodeContext, EpisodeError,
    EpisodeState, EpisodeStats, Generation, Policy, PolicyError, Retriever, Source, Termination, TranscriptEvent,
    Trajectory, STOP_SEQUENCES,
};
pub use parse::{count_tokens, parse_segments, render_segments, SegmentKind, TaggedSegment};
pub use prompt::{render_prompt, EmptyHistory, EpisodePrompt, THINK_INSTRUCTION};
pub use remote::{restore_stop, RemotePolicy, POLICY_ENDPOINT_ENV};
pub use scripted::{CollaborativeHeuristic, FnPolicy, ScriptedPolicy};

/// Writes one JSON record per line.
pub fn write_jsonl<T: serde::Serialize>(mut out: impl Write, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads line-delimited JSON records, skipping blank lines.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(input: impl BufRead) -> std::io::Result<Vec<T>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}
