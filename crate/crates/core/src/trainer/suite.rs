//! Desk-scale comparison sweeps: the four training arms, a per-seed result
//! cache, and the statistics the comparisons are judged on.

use std::fs;
use std::path::{Path, PathBuf};

use crate::agents::AgentVariant;
use crate::env::ObsFlags;
use crate::metrics::stats::variance;
use crate::metrics::{read_episodes_csv, EpisodeRecord};
use crate::nn::checkpoint::write_atomic;

use super::{run_training, seed_dir, RunConfig, RunManifest, RunStatus, TrainError};

#[derive(Clone, Debug)]
pub struct Arm {
    pub name: &'static str,
    pub config: RunConfig,
}

fn arm(name: &'static str, variant: AgentVariant, flags: ObsFlags, episodes: usize, parallel_envs: usize) -> Arm {
    let mut config = RunConfig {
        episodes,
        parallel_envs,
        checkpoint_every: 0,
        record_trace: false,
        ..RunConfig::default()
    };
    config.env.obs_flags = flags;
    config.agent.variant = variant;
    Arm { name, config }
}

/// Vanilla with and without action history, then self-correction and its
/// negation, all with action history.
pub fn desk_scale_arms(episodes: usize, parallel_envs: usize) -> Vec<Arm> {
    let history = ObsFlags::with_last_action();
    vec![
        arm(
            "vanilla_history",
            AgentVariant::VanillaPg,
            history,
            episodes,
            parallel_envs,
        ),
        arm(
            "vanilla_no_history",
            AgentVariant::VanillaPg,
            ObsFlags::NONE,
            episodes,
            parallel_envs,
        ),
        arm(
            "self_correction_history",
            AgentVariant::SelfCorrectionPg,
            history,
            episodes,
            parallel_envs,
        ),
        arm(
            "anti_collective_history",
            AgentVariant::AntiCollectivePg,
            history,
            episodes,
            parallel_envs,
        ),
    ]
}

fn cached(dir: &Path, config: &RunConfig, fingerprint: &str) -> Option<Vec<EpisodeRecord>> {
    let stored = fs::read_to_string(dir.join("fingerprint")).ok()?;
    if stored != fingerprint {
        return None;
    }
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).ok()?).ok()?;
    if manifest.status != RunStatus::Complete || manifest.config != *config {
        return None;
    }
    read_episodes_csv(&seed_dir(dir, config.seeds[0]).join("episodes.csv")).ok()
}

/// Trains `arm` on one seed under `root/<arm>/seed_<s>`, reusing a previous
/// complete run when its configuration and `fingerprint` match. Training is
/// deterministic, so a reused run equals a fresh one.
pub fn run_arm_seed(
    root: &Path,
    arm: &Arm,
    sim_seed: u64,
    fingerprint: &str,
) -> Result<(Vec<EpisodeRecord>, bool), TrainError> {
    let dir: PathBuf = root.join(arm.name).join(format!("seed_{sim_seed}"));
    let config = RunConfig {
        seeds: vec![sim_seed],
        output_dir: dir.clone(),
        ..arm.config.clone()
    };
    if let Some(records) = cached(&dir, &config, fingerprint) {
        return Ok((records, true));
    }
    let _ = fs::remove_file(dir.join("fingerprint"));
    let outcome = run_training(&config)?;
    let path = dir.join("fingerprint");
    write_atomic(&path, fingerprint.as_bytes()).map_err(|source| TrainError::Io { path, source })?;
    Ok((outcome.records, false))
}

fn last_episode(records: &[EpisodeRecord]) -> u64 {
    records.iter().map(|r| r.episode_index).max().unwrap_or(0)
}

fn in_tail(r: &EpisodeRecord, last: u64, window: usize) -> bool {
    r.episode_index + window as u64 > last
}

/// Collective success over the last `window` episodes of every environment.
pub fn tail_success(records: &[EpisodeRecord], window: usize) -> f64 {
    let last = last_episode(records);
    let tail: Vec<_> = records.iter().filter(|r| in_tail(r, last, window)).collect();
    tail.iter().filter(|r| r.collective_success).count() as f64 / tail.len().max(1) as f64
}

/// Mean total key drops per episode over the last `window` episodes.
pub fn tail_key_drops(records: &[EpisodeRecord], window: usize) -> f64 {
    let last = last_episode(records);
    let tail: Vec<_> = records.iter().filter(|r| in_tail(r, last, window)).collect();
    tail.iter().map(|r| f64::from(r.total_key_drops())).sum::<f64>() / tail.len().max(1) as f64
}

/// Sum over episodes of `agent`'s individual reward.
pub fn cumulative_individual_reward(records: &[EpisodeRecord], agent: usize) -> f64 {
    records.iter().map(|r| r.agents[agent].individual).sum()
}

/// Cross-seed variance of the success rate in consecutive windows of
/// `window` episodes, starting after `burn_in` episodes. `per_seed` holds one
/// record list per seed.
pub fn windowed_seed_variance(per_seed: &[Vec<EpisodeRecord>], burn_in: usize, window: usize) -> Vec<f64> {
    let episodes = per_seed.iter().map(|r| last_episode(r) as usize + 1).min().unwrap_or(0);
    let mut out = Vec::new();
    let mut start = burn_in;
    while start + window <= episodes {
        let rates: Vec<f64> = per_seed
            .iter()
            .map(|records| {
                let block: Vec<_> = records
                    .iter()
                    .filter(|r| (start..start + window).contains(&(r.episode_index as usize)))
                    .collect();
                block.iter().filter(|r| r.collective_success).count() as f64 / block.len().max(1) as f64
            })
            .collect();
        out.push(variance(&rates));
        start += window;
    }
    out
}
