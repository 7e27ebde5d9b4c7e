//! Drive an episode through HTTP endpoints: a remote embedder for the index and a
//! remote text generator as the policy. A tiny in-process server stands in for
//! both services; point `MEMREC_EMBED_ENDPOINT` / `MEMREC_POLICY_ENDPOINT` at
//! real ones to use them instead.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;

use memrec::corpus::{DocKind, MemoryDocument};
use memrec::embedding::{Embedder, HashEmbedder, RemoteEmbedder};
use memrec::episode::{render_prompt, run_episode, EpisodeConfig, RemotePolicy};
use memrec::{AblationFlags, DatasetProfile, FlatIndex};
use serde_json::{json, Value};

fn handle(path: &str, body: &Value) -> Value {
    let hash = HashEmbedder::new(64);
    match path {
        "/embed" => {
            let vectors: Vec<Vec<f64>> = body["texts"]
                .as_array()
                .into_iter()
                .flatten()
                .map(|t| hash.embed(t.as_str().unwrap_or("")).map(|v| v.values().to_vec()).unwrap_or_default())
                .collect();
            json!({ "vectors": vectors })
        }
        _ => {
            let context = body["context"].as_str().unwrap_or("");
            let text = if context.contains("The Hidden Harbor") {
                "<think> The retrieved user continued with The Hidden Harbor. </think> <answer> \"The Hidden Harbor\" </answer>"
            } else {
                "<think> Look for similar users. </think> <tool_call> User History: [The Crimson Harbor]"
            };
            json!({ "text": text })
        }
    }
}

fn spawn_mock() -> std::io::Result<String> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let mut reader = BufReader::new(stream);
            let mut request_line = String::new();
            let mut len = 0usize;
            if reader.read_line(&mut request_line).is_err() {
                continue;
            }
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
            }
            let mut body = vec![0; len];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
            let value: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let out = handle(&path, &value).to_string();
            let mut stream = reader.into_inner();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
                out.len()
            );
        }
    });
    Ok(format!("http://{addr}"))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = spawn_mock()?;
    let embed_url = std::env::var("MEMREC_EMBED_ENDPOINT").unwrap_or_else(|_| base.clone());
    let policy_url = std::env::var("MEMREC_POLICY_ENDPOINT").unwrap_or_else(|_| base.clone());
    println!("embedder at {embed_url}, policy at {policy_url}");

    let docs = vec![
        MemoryDocument {
            doc_id: 0,
            kind: DocKind::Collaborative,
            source_ref: "u9".into(),
            text: "User u9 History: [The Silent Harbor, The Crimson Harbor, The Hidden Harbor]".into(),
        },
        MemoryDocument {
            doc_id: 1,
            kind: DocKind::Meta,
            source_ref: "i3".into(),
            text: "Movie Name: The Iron Tower; Director: Director 9".into(),
        },
    ];
    let index = FlatIndex::build(docs, Arc::new(RemoteEmbedder::new(embed_url, 64)))?;
    let history = vec!["The Silent Harbor".to_string(), "The Crimson Harbor".to_string()];
    let prompt = render_prompt(&history, &DatasetProfile::movielens(), AblationFlags::default())?;
    let mut policy = RemotePolicy::new(&policy_url, 1.0);
    let traj = run_episode(&mut policy, &index, &prompt, &EpisodeConfig::default())?;
    for event in &traj.events {
        println!("{:?}: {}", event.source, event.text.trim());
    }
    println!("termination {:?}, answer {:?}", traj.termination, traj.answer_text);
    Ok(())
}
