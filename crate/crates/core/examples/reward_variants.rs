//! Replays the same random action sequence under every reward variant and
//! compares what each agent collects.
//!
//! cargo run --release --example reward_variants

use rand::Rng;

use manitokan::env::{Action, EnvConfig, ManitokanEnv, RewardVariant};
use manitokan::seed;

fn main() {
    let variants = [
        RewardVariant::Standard,
        RewardVariant::Oracle,
        RewardVariant::Punishment,
        RewardVariant::Injection,
        RewardVariant::IndividualOnly,
        RewardVariant::CollectiveOnly,
    ];
    for variant in variants {
        let config = EnvConfig {
            reward_variant: variant,
            ..EnvConfig::default()
        };
        let mut totals = [0.0f64; 2];
        let mut rng = seed::rng_from(5);
        for episode in 0..500 {
            let mut env = ManitokanEnv::new(config.clone(), seed::env_seed(5, episode), episode).unwrap();
            loop {
                let actions: Vec<Action> = (0..2)
                    .map(|i| {
                        let mask = env.legal_mask(i);
                        loop {
                            let a = rng.gen_range(0..Action::COUNT);
                            if mask[a] {
                                break Action::from_index(a).unwrap();
                            }
                        }
                    })
                    .collect();
                let (_, out) = env.step(&actions).unwrap();
                totals[0] += out.rewards[0];
                totals[1] += out.rewards[1];
                if out.done {
                    break;
                }
            }
        }
        println!("{variant:?}: total reward over 500 episodes {totals:.3?}");
    }
}
