use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use memrec::pipeline::{self, Context, PipelineError, RunConfig};

#[derive(Parser)]
#[command(name = "memrec", about = "Dual-memory agentic recommendation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// key = value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    without_cf: bool,
    #[arg(long, global = true)]
    without_meta: bool,
    #[arg(long, global = true)]
    without_re: bool,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// policy endpoint; implies `policy = remote`
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// extra `key=value` overrides
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    BuildData,
    BuildCorpus,
    BuildIndex,
    RunEpisodes,
    Evaluate,
    TrainToy,
    BehaviorStats,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.set("seed", seed.to_string());
    }
    for (flag, key) in [(cli.without_cf, "without_cf"), (cli.without_meta, "without_meta"), (cli.without_re, "without_re")] {
        if flag {
            config.set(key, "true");
        }
    }
    if let Some(url) = &cli.endpoint {
        config.set("policy", "remote");
        config.set("policy_endpoint", url.clone());
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| PipelineError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        config.set(k.trim(), v.trim());
    }
    let workers = match cli.workers {
        Some(w) => w,
        None => config.get_or("workers", 0)?,
    };
    let ctx = Context::new(config, cli.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let manifest = pool.install(|| match cli.command {
        Command::BuildData => pipeline::build_data(&ctx),
        Command::BuildCorpus => pipeline::build_corpus_cmd(&ctx),
        Command::BuildIndex => pipeline::build_index_cmd(&ctx),
        Command::RunEpisodes => pipeline::run_episodes_cmd(&ctx),
        Command::Evaluate => pipeline::evaluate_cmd(&ctx),
        Command::TrainToy => pipeline::train_toy_cmd(&ctx),
        Command::BehaviorStats => pipeline::behavior_stats_cmd(&ctx),
    })?;
    for (name, digest) in &manifest.artifacts {
        println!("{name}\t{}", &digest[..12.min(digest.len())]);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("memrec: {e}");
            ExitCode::FAILURE
        }
    }
}
