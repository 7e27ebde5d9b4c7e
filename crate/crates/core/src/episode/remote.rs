//! Text-generation endpoint client.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::engine::{EpisodeContext, Generation, Policy, PolicyError, STOP_SEQUENCES};
use super::parse::count_tokens;

/// Environment variable holding the generation endpoint base URL.
pub const POLICY_ENDPOINT_ENV: &str = "MEMREC_POLICY_ENDPOINT";

#[derive(Debug, Serialize)]
struct GenerateRequest<'a> {
    context: &'a str,
    stop: [&'a str; 2],
    temperature: f64,
    max_tokens: usize,
}

#[derive(Debug, Deserialize)]
struct GenerateResponse {
    text: String,
    #[serde(default)]
    token_logprobs: Option<Vec<f64>>,
    #[serde(default)]
    num_tokens: Option<usize>,
}

/// Posts `{context, stop, temperature, max_tokens}` to `{base}/generate` and
/// expects `{text, token_logprobs?, num_tokens?}` back.
#[derive(Debug, Clone)]
pub struct RemotePolicy {
    url: String,
    temperature: f64,
    agent: ureq::Agent,
}

impl RemotePolicy {
    pub fn new(base_url: &str, temperature: f64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .new_agent();
        Self {
            url: format!("{}/generate", base_url.trim_end_matches('/')),
            temperature,
            agent,
        }
    }

    pub fn from_env(temperature: f64) -> Option<Self> {
        std::env::var(POLICY_ENDPOINT_ENV)
            .ok()
            .filter(|s| !s.is_empty())
            .map(|u| Self::new(&u, temperature))
    }
}

impl Policy for RemotePolicy {
    fn generate(&mut self, ctx: &EpisodeContext<'_>) -> Result<Generation, PolicyError> {
        let body = GenerateRequest {
            context: ctx.transcript,
            stop: STOP_SEQUENCES,
            temperature: self.temperature,
            max_tokens: ctx.remaining_budget,
        };
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| PolicyError::Remote(e.to_string()))?;
        let parsed: GenerateResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| PolicyError::Remote(format!("bad response body: {e}")))?;
        if parsed.token_logprobs.as_ref().is_some_and(|lp| lp.iter().any(|v| !v.is_finite())) {
            return Err(PolicyError::Remote("non-finite log-probability".into()));
        }
        Ok(restore_stop(Generation {
            text: parsed.text,
            token_logprobs: parsed.token_logprobs,
            num_tokens: parsed.num_tokens,
            decision: None,
        }))
    }
}

/// Servers usually strip the matched stop sequence. When the text ends inside an
/// unclosed `<tool_call>` or `<answer>`, the closing tag is put back as one extra
/// token with log-probability 0.
pub fn restore_stop(mut generation: Generation) -> Generation {
    let text = &generation.text;
    if STOP_SEQUENCES.iter().any(|s| text.contains(s)) {
        return generation;
    }
    let Some((_, open)) = ["<tool_call>", "<answer>"]
        .iter()
        .filter_map(|t| text.rfind(t).map(|i| (i, *t)))
        .max()
    else {
        return generation;
    };
    let close = open.replacen('<', "</", 1);
    let before = count_tokens(text);
    generation.text = format!("{} {close}", text.trim_end());
    if let Some(lp) = generation.token_logprobs.as_mut() {
        if lp.len() == before || Some(lp.len()) == generation.num_tokens {
            lp.push(0.0);
        }
    }
    generation.num_tokens = generation.num_tokens.map(|n| n + 1);
    generation
}
