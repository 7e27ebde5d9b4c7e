//! One reason/retrieve/answer episode with a scripted policy, followed by the
//! parsed segments and termination status.

use std::sync::Arc;

use memrec::corpus::{DocKind, MemoryDocument};
use memrec::episode::{parse_segments, render_prompt, run_episode, EpisodeConfig, ScriptedPolicy};
use memrec::{AblationFlags, DatasetProfile, FlatIndex, HashEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let docs = vec![MemoryDocument {
        doc_id: 0,
        kind: DocKind::Collaborative,
        source_ref: "u9".into(),
        text: "User u9 History: [The Silent Harbor, The Crimson Harbor, The Hidden Harbor]".into(),
    }];
    let index = FlatIndex::build(docs, Arc::new(HashEmbedder::new(256)))?;
    let history = vec!["The Silent Harbor".to_string(), "The Crimson Harbor".to_string()];
    let prompt = render_prompt(&history, &DatasetProfile::movielens(), AblationFlags::default())?;
    println!("--- prompt\n{}\n", prompt.text);

    let mut policy = ScriptedPolicy::new([
        "<think> The user keeps watching Harbor films. </think> <tool_call> User History: [The Crimson Harbor] </tool_call>",
        "<think> Another user went on to The Hidden Harbor. </think> <answer> \"The Hidden Harbor\" </answer>",
    ]);
    let traj = run_episode(&mut policy, &index, &prompt, &EpisodeConfig::default())?;
    println!("--- transcript\n{}\n", traj.transcript_text());
    for seg in parse_segments(&traj.transcript_text()) {
        println!("{:<12} {:?}", format!("{:?}", seg.kind), seg.body);
    }
    println!(
        "termination {:?}, answer {:?}, parse ok {}, retrieval calls {}, generated tokens {}",
        traj.termination, traj.answer_text, traj.parse_ok, traj.stats.retrieval_calls, traj.stats.generated_tokens
    );
    Ok(())
}
