//! Short vanilla policy-gradient run with action history, printing the
//! success rate as it trains.
//!
//! cargo run --release --example train_pg -- [episodes] [variant]

use manitokan::agents::AgentVariant;
use manitokan::env::ObsFlags;
use manitokan::trainer::{run_training, RunConfig};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let episodes = args.next().and_then(|a| a.parse().ok()).unwrap_or(200);
    let variant = args
        .next()
        .and_then(|v| AgentVariant::parse(&v))
        .unwrap_or(AgentVariant::VanillaPg);
    let dir = std::env::temp_dir().join(format!("manitokan-train-{}", variant.name()));
    let mut config = RunConfig {
        episodes,
        seeds: vec![0],
        output_dir: dir.clone(),
        ..RunConfig::default()
    };
    config.env.obs_flags = ObsFlags::with_last_action();
    config.agent.variant = variant;
    let start = std::time::Instant::now();
    let outcome = run_training(&config).expect("training run");
    let summary = outcome.manifest.summary.expect("complete run has a summary");
    println!(
        "{} rounds in {:.1}s: final success {:.3}, key drops {:.3}; files in {}",
        episodes,
        start.elapsed().as_secs_f64(),
        summary.final_success_rate,
        summary.final_key_drop_rate,
        dir.display()
    );
}
