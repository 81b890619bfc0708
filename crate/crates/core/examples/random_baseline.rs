//! Success rate of masked-uniform agents with a 95% interval and a trend test.
//!
//! cargo run --release --example random_baseline -- [episodes_per_env]

use manitokan::env::EnvConfig;
use manitokan::trainer::run_random_baseline;

fn main() {
    let episodes: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1250);
    let (report, _) = run_random_baseline(&EnvConfig::default(), episodes, 8, 0).expect("baseline run");
    let ci = report.success_ci95;
    println!(
        "{} episodes: success {:.4} (95% CI {:.4}..{:.4}), mean drops {:.3}, mean length {:.1}",
        report.total_episodes, ci.estimate, ci.lower, ci.upper, report.mean_key_drops, report.mean_episode_length
    );
    println!(
        "Mann-Kendall z = {:.3}, p = {:.3}",
        report.trend.z, report.trend.p_value
    );
}
