use std::fs;

use manitokan::agents::{Agent, AgentSettings, AgentVariant};
use manitokan::env::{EnvConfig, ObsFlags};
use manitokan::seed;
use manitokan::trainer::{
    evaluate, evaluate_agents, load_checkpoint, run_random_baseline, run_seed, run_training, RunConfig, RunStatus,
    TrainError,
};

fn small(dir: &std::path::Path) -> RunConfig {
    let mut c = RunConfig {
        episodes: 6,
        parallel_envs: 2,
        seeds: vec![4, 5],
        checkpoint_every: 3,
        output_dir: dir.to_path_buf(),
        ..RunConfig::default()
    };
    c.env.max_steps = 40;
    c.env.obs_flags = ObsFlags::with_last_action();
    c.agent.hidden = 16;
    c
}

#[test]
fn a_short_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path());
    let outcome = run_training(&config).unwrap();
    assert_eq!(outcome.records.len(), 6 * 2 * 2);
    assert_eq!(outcome.manifest.status, RunStatus::Complete);
    assert_eq!(outcome.metrics.len(), 6);
    for name in ["config.json", "manifest.json", "metrics.csv", "summary.json", "success.svg"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    for s in [4, 5] {
        let seed_dir = dir.path().join(format!("seed_{s}"));
        for name in ["episodes.csv", "updates.csv", "trace.jsonl"] {
            assert!(seed_dir.join(name).exists(), "{name}");
        }
        assert!(seed_dir.join("checkpoints/round_000003/agent_1/actor.bin").exists());
        let (env, agents) = load_checkpoint(&seed_dir.join("checkpoints/final")).unwrap();
        assert_eq!(env, config.env);
        assert_eq!(agents.len(), 2);
        let updates = fs::read_to_string(seed_dir.join("updates.csv")).unwrap();
        assert_eq!(updates.lines().count(), 1 + 6 * 2);
    }
    let stored: RunConfig = serde_json::from_slice(&fs::read(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(stored, config);
}

#[test]
fn runs_are_reproducible_and_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small(dir.path());
    config.agent.variant = AgentVariant::SelfCorrectionPg;
    config.seeds = vec![1];
    let a = run_seed(&config, 1).unwrap();
    config.output_dir = dir.path().join("again");
    let b = run_seed(&config, 1).unwrap();
    assert_eq!(a, b);
    let c = run_seed(&config, 2).unwrap();
    assert_ne!(a, c);
}

#[test]
fn learning_changes_parameters_and_evaluation_does_not() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path());
    run_training(&config).unwrap();
    let ckpt = dir.path().join("seed_4/checkpoints/final");
    let (_, trained) = load_checkpoint(&ckpt).unwrap();
    let fresh = manitokan::trainer::build_agents(&config, 4);
    assert_ne!(trained[0].policy.params(), fresh[0].policy.params());
    let before = fs::read(ckpt.join("agent_0/actor.bin")).unwrap();
    let eval = evaluate(&ckpt, 3, 2, 0, None).unwrap();
    assert_eq!(eval.records.len(), 6);
    assert_eq!(before, fs::read(ckpt.join("agent_0/actor.bin")).unwrap());
}

#[test]
fn evaluation_rejects_a_mismatched_observation_layout() {
    let dir = tempfile::tempdir().unwrap();
    run_training(&small(dir.path())).unwrap();
    let ckpt = dir.path().join("seed_4/checkpoints/final");
    let env = EnvConfig::default();
    assert!(matches!(evaluate(&ckpt, 1, 1, 0, Some(&env)), Err(TrainError::Config(_))));
}

#[test]
fn random_agents_reproduce_the_baseline() {
    let env = EnvConfig::default();
    let (report, _) = run_random_baseline(&env, 250, 8, 1).unwrap();
    assert_eq!(report.total_episodes, 2000);
    let settings = AgentSettings {
        variant: AgentVariant::Random,
        hidden: 1,
        ..AgentSettings::default()
    };
    let agents: Vec<Agent> = (0..2)
        .map(|i| Agent::new(i, env.obs_len(), settings, &mut seed::rng_from(i as u64)))
        .collect();
    let other = evaluate_agents(&env, &agents, 250, 8, 2).unwrap();
    let rate = other.records.iter().filter(|r| r.collective_success).count() as f64 / 2000.0;
    assert!((rate - report.success_ci95.estimate).abs() < 0.01);
    assert!(report.mean_episode_length > 140.0);
    assert!(report.mean_key_drops > 1.0);
}

#[test]
fn invalid_configurations_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.variants = vec![AgentVariant::VanillaPg];
    assert!(matches!(run_training(&c), Err(TrainError::Config(_))));
    let mut c = small(dir.path());
    c.episodes = 0;
    assert!(matches!(run_training(&c), Err(TrainError::Config(_))));
    let mut c = small(dir.path());
    c.env.num_agents = 9;
    c.env.grid_width = 3;
    c.env.grid_height = 3;
    assert!(run_training(&c).is_err());
}
