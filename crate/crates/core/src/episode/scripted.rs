//! Policies that need no model: fixed scripts, closures and a retrieval heuristic.

use std::collections::VecDeque;

use super::engine::{first_quoted, EpisodeContext, Generation, Policy, PolicyError};

/// Emits a fixed list of texts, then nothing.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPolicy {
    script: VecDeque<String>,
}

impl ScriptedPolicy {
    pub fn new<I, S>(emissions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: emissions.into_iter().map(Into::into).collect(),
        }
    }

    /// Answers `title` straight away.
    pub fn answer(title: &str) -> Self {
        Self::new([format!("<answer> \"{title}\" </answer>")])
    }
}

impl Policy for ScriptedPolicy {
    fn generate(&mut self, _ctx: &EpisodeContext<'_>) -> Result<Generation, PolicyError> {
        Ok(Generation::text(self.script.pop_front().unwrap_or_default()))
    }
}

/// Wraps a closure as a policy.
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: FnMut(&EpisodeContext<'_>) -> Result<Generation, PolicyError>,
{
    fn generate(&mut self, ctx: &EpisodeContext<'_>) -> Result<Generation, PolicyError> {
        (self.0)(ctx)
    }
}

/// Retrieves a collaborative history resembling the user's recent titles and
/// answers the title that followed the user's last item there. Falls back to
/// the most recent history title.
#[derive(Debug, Clone)]
pub struct CollaborativeHeuristic {
    pub recent: usize,
}

impl Default for CollaborativeHeuristic {
    fn default() -> Self {
        Self { recent: 3 }
    }
}

fn history_list(passage: &str) -> Option<Vec<String>> {
    let open = passage.find("History: [")? + "History: [".len();
    let close = passage[open..].rfind(']')? + open;
    Some(
        passage[open..close]
            .split(", ")
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect(),
    )
}

impl CollaborativeHeuristic {
    fn pick(&self, titles: &[String], passage: &str) -> Option<String> {
        let others = history_list(passage)?;
        let last = titles.last()?;
        let at = others.iter().position(|t| t == last)?;
        others[at + 1..].iter().find(|t| !titles.contains(t)).cloned()
    }
}

impl Policy for CollaborativeHeuristic {
    fn generate(&mut self, ctx: &EpisodeContext<'_>) -> Result<Generation, PolicyError> {
        let titles = &ctx.prompt.history_titles;
        let Some(response) = ctx.last_tool_response else {
            let recent: Vec<String> = titles
                .iter()
                .rev()
                .take(self.recent.max(1))
                .rev()
                .map(|t| format!("\"{t}\""))
                .collect();
            return Ok(Generation::text(format!(
                "<tool_call> Find a user who enjoyed {} </tool_call>",
                recent.join(", ")
            )));
        };
        let fallback = titles.last().cloned().unwrap_or_default();
        let choice = self.pick(titles, response).unwrap_or(fallback);
        let choice = first_quoted(&format!("\"{choice}\"")).unwrap_or(choice);
        Ok(Generation::text(format!("<answer> \"{choice}\" </answer>")))
    }
}
