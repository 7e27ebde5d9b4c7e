//! Instruction prompt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{AblationFlags, DatasetProfile};

/// Instruction that the reasoning ablation removes.
pub const THINK_INSTRUCTION: &str =
    "You must conduct reasoning inside <think> and </think> first every time you get new information.";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot render a prompt for an empty history")]
pub struct EmptyHistory;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodePrompt {
    pub text: String,
    pub history_titles: Vec<String>,
}

fn quoted_list(titles: &[String]) -> String {
    titles
        .iter()
        .map(|t| format!("\"{t}\""))
        .collect::<Vec<_>>()
        .join(", ")
}

fn search_scope(profile: &DatasetProfile, ablation: AblationFlags) -> Option<String> {
    let cf = "other users' interaction histories".to_string();
    let meta = format!(
        "{} metadata including the {}",
        profile.item_singular,
        profile.meta_label_list()
    );
    match (ablation.without_cf, ablation.without_meta) {
        (false, false) => Some(format!("The query can search: (1) {cf} and (2) {meta}.")),
        (true, false) => Some(format!("The query can search: {meta}.")),
        (false, true) => Some(format!("The query can search: {cf}.")),
        (true, true) => None,
    }
}

/// Instantiates the instruction template for one user history.
pub fn render_prompt(
    history_titles: &[String],
    profile: &DatasetProfile,
    ablation: AblationFlags,
) -> Result<EpisodePrompt, EmptyHistory> {
    if history_titles.is_empty() {
        return Err(EmptyHistory);
    }
    let p = profile;
    let mut lines = Vec::new();
    lines.push(format!(
        "You are a recommendation assistant. Given a list of {plural} the user recently enjoys, please recommend a new {single} that the user may like. The user has {verb} the following {plural} before: {titles}.",
        plural = p.item_plural,
        single = p.item_singular,
        verb = p.consumed_verb,
        titles = quoted_list(history_titles),
    ));
    lines.push(String::new());

    let mut search = if ablation.without_re {
        "If necessary, you can generate a query and call an existing search engine by specifying \"<tool_call> query </tool_call>\".".to_string()
    } else {
        format!(
            "Begin by briefly analyzing the current user's {} history to infer their preference. If necessary, you can then generate a query and call an existing search engine by specifying \"<tool_call> query </tool_call>\".",
            p.history_kind
        )
    };
    if let Some(scope) = search_scope(p, ablation) {
        search.push(' ');
        search.push_str(&scope);
    }
    lines.push(search);
    if !ablation.without_cf {
        lines.push(format!(
            "For example, you may query to identify users who engaged with {plural} similar to those {verb} by the current user, retrieve their interaction patterns, and use these insights to predict additional {plural} the current user may appreciate.",
            plural = p.item_plural,
            verb = p.consumed_verb,
        ));
    }
    lines.push(if ablation.without_re {
        "Only query the search engine when necessary.".to_string()
    } else {
        "Only query the search engine when necessary, and keep all reasoning concise.".to_string()
    });
    lines.push(String::new());

    let answer_format = format!(
        "the name of the user's most preferred {} (a single item) enclosed within <answer> and </answer> at last, using two double quotes. For example: <answer> \"{}\" </answer>.",
        p.item_singular, p.example_title
    );
    if ablation.without_re {
        lines.push(
            "Resolve the given task. You can call a search engine by <tool_call> query </tool_call> and it will return the top searched results between <tool_response> and </tool_response>.".to_string(),
        );
        lines.push(format!(
            "You can iteratively retrieve information until you are confident, then directly provide {answer_format}"
        ));
    } else {
        lines.push(format!(
            "Resolve the given task. {THINK_INSTRUCTION} After reasoning, if you find you lack some knowledge, you can call a search engine by <tool_call> query </tool_call> and it will return the top searched results between <tool_response> and </tool_response>."
        ));
        lines.push(format!(
            "You can continue this reasoning and search process. Remember to provide {answer_format}"
        ));
    }

    Ok(EpisodePrompt {
        text: lines.join("\n"),
        history_titles: history_titles.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn titles() -> Vec<String> {
        vec!["Decade".into(), "Revenge".into()]
    }

    #[test]
    fn goodreads_prompt_mentions_fields() {
        let p = render_prompt(&titles(), &DatasetProfile::goodreads(), AblationFlags::NONE).unwrap();
        assert!(p.text.contains("book metadata including the Author, Genres, Series"));
        assert!(p.text.contains("read the following books before: \"Decade\", \"Revenge\"."));
        assert!(p.text.contains(THINK_INSTRUCTION));
        assert!(p.text.contains("(1) other users' interaction histories"));
    }

    #[test]
    fn without_re_drops_think() {
        let flags = AblationFlags { without_re: true, ..AblationFlags::NONE };
        let p = render_prompt(&titles(), &DatasetProfile::movielens(), flags).unwrap();
        assert!(!p.text.contains("<think>"));
        assert!(p.text.contains("<tool_call> query </tool_call>"));
        assert!(p.text.contains("<answer>"));
    }

    #[test]
    fn without_cf_and_meta_drop_scope() {
        let cf = AblationFlags { without_cf: true, ..AblationFlags::NONE };
        let p = render_prompt(&titles(), &DatasetProfile::goodreads(), cf).unwrap();
        assert!(!p.text.contains("interaction histories"));
        assert!(p.text.contains("metadata including"));

        let meta = AblationFlags { without_meta: true, ..AblationFlags::NONE };
        let p = render_prompt(&titles(), &DatasetProfile::goodreads(), meta).unwrap();
        assert!(p.text.contains("interaction histories"));
        assert!(!p.text.contains("metadata including"));
    }

    #[test]
    fn deterministic_and_rejects_empty() {
        let a = render_prompt(&titles(), &DatasetProfile::cds_vinyl(), AblationFlags::NONE).unwrap();
        let b = render_prompt(&titles(), &DatasetProfile::cds_vinyl(), AblationFlags::NONE).unwrap();
        assert_eq!(a, b);
        assert_eq!(render_prompt(&[], &DatasetProfile::cds_vinyl(), AblationFlags::NONE), Err(EmptyHistory));
    }
}
