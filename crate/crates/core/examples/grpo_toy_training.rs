//! Trains the tabular toy policy with GRPO and prints the evaluation curve.
//!
//! ```text
//! cargo run --release --example grpo_toy_training -- [steps] [learning_rate]
//! ```

use memrec::grpo::toy::ToyEnvSpec;
use memrec::grpo::{train_toy, GrpoConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let mut config = GrpoConfig { steps, ..GrpoConfig::default() };
    if let Some(lr) = args.next() {
        config.learning_rate = lr.parse()?;
    }
    let started = std::time::Instant::now();
    let log = train_toy(&ToyEnvSpec::default(), &config, 2024)?;
    println!("step  reward  calls  tokens  retrieve(answerable)  retrieve(memory)  parse_fail");
    for e in log.evals() {
        println!(
            "{:>5}  {:>6.3}  {:>5.2}  {:>6.1}  {:>20.2}  {:>16.2}  {:>10.2}",
            e.step,
            e.mean_reward,
            e.mean_retrieval_calls,
            e.mean_generated_tokens,
            e.retrieval_rate_answerable,
            e.retrieval_rate_memory,
            e.parse_failure_rate
        );
    }
    println!("trained in {:.1?}", started.elapsed());
    Ok(())
}
