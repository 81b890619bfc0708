//! Plays one scripted episode and prints what each agent sees and earns.
//!
//! cargo run --example env_walkthrough

use manitokan::env::{Action, EnvConfig, ManitokanEnv, ObsFlags};

fn main() {
    let config = EnvConfig {
        obs_flags: ObsFlags::all(),
        max_steps: 12,
        ..EnvConfig::default()
    };
    let mut env = ManitokanEnv::new(config, 42, 0).expect("default config is valid");
    let s = env.state();
    println!("agents {:?}", s.agents);
    println!("key at {:?}, doors {:?}", s.key_cell, s.doors);

    let script = [
        [Action::Pickup, Action::TurnLeft],
        [Action::Forward, Action::Forward],
        [Action::TurnRight, Action::Pickup],
        [Action::Open, Action::Drop],
    ];
    for (t, actions) in script.iter().cycle().enumerate() {
        println!("t={t} legal(0)={:?}", env.legal_mask(0));
        let (obs, out) = env.step(actions).expect("episode still running");
        println!(
            "  actions {actions:?} -> effects {:?}, rewards {:?}, obs[0] len {}",
            out.effects,
            out.rewards,
            obs[0].len()
        );
        for e in &out.events {
            println!("  event {e:?}");
        }
        if out.done {
            println!("done after {} steps", t + 1);
            break;
        }
    }
}
