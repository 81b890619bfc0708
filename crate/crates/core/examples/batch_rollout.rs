//! Steps a batch of environments with masked-uniform actions on several
//! worker threads until every episode has finished.
//!
//! cargo run --release --example batch_rollout -- [envs] [workers]

use rand::Rng;

use manitokan::env::{Action, EnvConfig, RewardEventKind};
use manitokan::seed;
use manitokan::vec_env::{make_batch, EnvTransition};

fn main() {
    let mut args = std::env::args().skip(1);
    let envs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(32);
    let workers: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(4);
    let mut runner = make_batch(&EnvConfig::default(), 0, envs)
        .and_then(|r| r.with_workers(workers))
        .expect("batch")
        .with_auto_reset(false);
    let mut rng = seed::rng_from(1);
    let mut steps = 0;
    let mut successes = 0;
    while runner.any_live() {
        let actions: Vec<Vec<Action>> = (0..envs)
            .map(|k| {
                (0..2)
                    .map(|i| {
                        let mask = runner.env(k).legal_mask(i);
                        let legal: Vec<usize> = (0..Action::COUNT).filter(|&a| mask[a]).collect();
                        Action::from_index(legal[rng.gen_range(0..legal.len())]).unwrap()
                    })
                    .collect()
            })
            .collect();
        for tr in runner.batch_step(&actions).expect("step") {
            if let EnvTransition::Stepped { outcome, .. } = tr {
                steps += 1;
                if outcome.events.iter().any(|e| e.kind == RewardEventKind::AllDoorsOpened) {
                    successes += 1;
                }
            }
        }
    }
    println!("{envs} episodes, {steps} environment steps, {successes} collective successes");
}
