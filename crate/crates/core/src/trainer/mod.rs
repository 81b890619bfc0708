//! Seeded training sweeps, evaluation and the random baseline.

pub mod config;
pub mod rollout;
pub mod suite;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentError, AgentManifest, AgentSettings, AgentVariant, UpdateStats};
use crate::env::EnvConfig;
use crate::metrics::export::MetricsSummary;
use crate::metrics::{self, EpisodeCsvWriter, EpisodeRecord, Interval, MannKendall, MetricsError, RunMetrics};
use crate::nn::checkpoint::write_atomic;
use crate::seed;
use crate::vec_env::{make_batch, BatchError, BatchRunner};

pub use config::RunConfig;
pub use rollout::{action_rngs, collect_round, RoundOutput};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Incomplete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub seed: u64,
    pub episodes_recorded: usize,
    pub final_success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    pub version: String,
    pub config: RunConfig,
    pub seeds: Vec<SeedEntry>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub error: Option<String>,
    pub summary: Option<MetricsSummary>,
}

impl RunManifest {
    fn write(&self, dir: &Path) -> Result<(), TrainError> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_vec_pretty(self).map_err(|e| TrainError::Config(e.to_string()))?;
        write_atomic(&path, &json).map_err(io_err(&path))
    }
}

pub struct TrainingOutcome {
    pub records: Vec<EpisodeRecord>,
    pub metrics: RunMetrics,
    pub manifest: RunManifest,
}

pub fn seed_dir(output_dir: &Path, seed: u64) -> PathBuf {
    output_dir.join(format!("seed_{seed}"))
}

fn agent_seed(sim_seed: u64, agent: usize) -> u64 {
    seed::mix(sim_seed, seed::stream::AGENT_INIT.wrapping_add(agent as u64))
}

pub fn build_agents(config: &RunConfig, sim_seed: u64) -> Vec<Agent> {
    let input_dim = config.env.obs_len();
    (0..config.env.num_agents)
        .map(|i| {
            let mut rng = seed::rng_from(agent_seed(sim_seed, i));
            Agent::new(i, input_dim, config.agent_settings(i), &mut rng)
        })
        .collect()
}

fn runner_for(env: &EnvConfig, sim_seed: u64, parallel: usize, workers: usize) -> Result<BatchRunner, TrainError> {
    Ok(make_batch(env, sim_seed, parallel)?
        .with_auto_reset(false)
        .with_workers(workers)?)
}

/// Writes every agent plus the environment description into `dir`.
pub fn save_checkpoint(
    dir: &Path,
    agents: &[Agent],
    env: &EnvConfig,
    sim_seed: u64,
    round: usize,
) -> Result<(), TrainError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let env_path = dir.join("env.json");
    let env_json = serde_json::to_vec_pretty(env).map_err(|e| TrainError::Config(e.to_string()))?;
    write_atomic(&env_path, &env_json).map_err(io_err(&env_path))?;
    for a in agents {
        let manifest = AgentManifest {
            agent: a.index,
            settings: a.settings,
            obs_flags: env.obs_flags,
            input_dim: env.obs_len(),
            seed: sim_seed,
            round,
        };
        a.save(&dir.join(format!("agent_{}", a.index)), &manifest)?;
    }
    Ok(())
}

/// Loads a checkpoint directory written by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<(EnvConfig, Vec<Agent>), TrainError> {
    let env_path = dir.join("env.json");
    let text = fs::read_to_string(&env_path).map_err(io_err(&env_path))?;
    let env: EnvConfig =
        serde_json::from_str(&text).map_err(|e| TrainError::Config(format!("{}: {e}", env_path.display())))?;
    let mut agents = Vec::new();
    for i in 0..env.num_agents {
        let (agent, manifest) = Agent::load(&dir.join(format!("agent_{i}")))?;
        if manifest.obs_flags != env.obs_flags || manifest.input_dim != env.obs_len() {
            return Err(TrainError::Config(format!(
                "agent {i} was trained with observation flags {:?} (input {}), environment uses {:?} (input {})",
                manifest.obs_flags,
                manifest.input_dim,
                env.obs_flags,
                env.obs_len()
            )));
        }
        agents.push(agent);
    }
    Ok((env, agents))
}

const UPDATE_COLUMNS: &str =
    "round,agent,actor_loss,critic_loss,mean_entropy,actor_grad_norm,correction_norm,collective_slices,actor_applied,critic_applied";

fn update_row(round: usize, agent: usize, s: &UpdateStats) -> String {
    format!(
        "{round},{agent},{},{},{},{},{},{},{},{}\n",
        s.actor_loss,
        s.critic_loss,
        s.mean_entropy,
        s.actor_grad_norm,
        s.correction_norm,
        s.collective_slices,
        u8::from(s.actor_applied),
        u8::from(s.critic_applied)
    )
}

/// Trains one simulation and writes its files under `seed_{seed}/`.
pub fn run_seed(config: &RunConfig, sim_seed: u64) -> Result<Vec<EpisodeRecord>, TrainError> {
    let dir = seed_dir(&config.output_dir, sim_seed);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut runner = runner_for(&config.env, sim_seed, config.parallel_envs, config.workers)?;
    let mut agents = build_agents(config, sim_seed);
    let mut rngs = action_rngs(sim_seed, config.parallel_envs);
    let mut episodes_csv = EpisodeCsvWriter::create(&dir.join("episodes.csv"), config.env.num_agents)?;
    let updates_path = dir.join("updates.csv");
    let mut updates = fs::File::create(&updates_path).map_err(io_err(&updates_path))?;
    writeln!(updates, "{UPDATE_COLUMNS}").map_err(io_err(&updates_path))?;
    let n = agents.len();
    let mut records = Vec::with_capacity(config.episodes * config.parallel_envs);

    for round in 0..config.episodes {
        if round > 0 {
            runner.reset_finished()?;
        }
        let last = round + 1 == config.episodes;
        let trace_env = (last && config.record_trace).then_some(0);
        let RoundOutput {
            trajectories,
            records: round_records,
            trace,
        } = collect_round(&mut runner, &agents, &mut rngs, sim_seed, trace_env)?;

        let snapshot: Vec<Vec<f64>> = agents.iter().map(|a| a.policy.params().values().to_vec()).collect();
        let mut rows = String::new();
        for (i, (agent, trajs)) in agents.iter_mut().zip(&trajectories).enumerate() {
            let partner = &snapshot[(i + 1) % n];
            let stats = agent.pg_update(trajs, Some(partner), config.env.discount)?;
            if agent.variant().learns() {
                rows.push_str(&update_row(round, i, &stats));
            }
        }
        updates.write_all(rows.as_bytes()).map_err(io_err(&updates_path))?;
        episodes_csv.write(&round_records)?;
        records.extend(round_records);

        if let Some(t) = trace {
            let path = dir.join("trace.jsonl");
            let mut buf = Vec::new();
            t.write_jsonl(&mut buf).map_err(io_err(&path))?;
            write_atomic(&path, &buf).map_err(io_err(&path))?;
        }
        let done = round + 1;
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && !last {
            save_checkpoint(
                &dir.join("checkpoints").join(format!("round_{done:06}")),
                &agents,
                &config.env,
                sim_seed,
                done,
            )?;
        }
        if done % 100 == 0 || last {
            let recent = records.len().saturating_sub(100 * config.parallel_envs);
            let rate = records[recent..].iter().filter(|r| r.collective_success).count() as f64
                / (records.len() - recent) as f64;
            log::info!(
                "seed {sim_seed}: round {done}/{} success(last 100) {rate:.3}",
                config.episodes
            );
        }
    }
    updates.flush().map_err(io_err(&updates_path))?;
    save_checkpoint(
        &dir.join("checkpoints").join("final"),
        &agents,
        &config.env,
        sim_seed,
        config.episodes,
    )?;
    Ok(records)
}

fn final_success(records: &[EpisodeRecord], sim_seed: u64, window: usize) -> f64 {
    let rows: Vec<_> = records.iter().filter(|r| r.seed == sim_seed).collect();
    let last = rows.iter().map(|r| r.episode_index).max().unwrap_or(0);
    let tail: Vec<_> = rows.iter().filter(|r| r.episode_index + window as u64 > last).collect();
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().filter(|r| r.collective_success).count() as f64 / tail.len() as f64
}

/// Runs every seed of `config` and writes aggregated metrics, a manifest and
/// charts into `config.output_dir`.
pub fn run_training(config: &RunConfig) -> Result<TrainingOutcome, TrainError> {
    config.validate()?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let config_path = out.join("config.json");
    let config_json = serde_json::to_vec_pretty(config).map_err(|e| TrainError::Config(e.to_string()))?;
    write_atomic(&config_path, &config_json).map_err(io_err(&config_path))?;
    let mut manifest = RunManifest {
        status: RunStatus::Running,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seeds: Vec::new(),
        started_unix: now_unix(),
        finished_unix: None,
        error: None,
        summary: None,
    };
    manifest.write(out)?;

    let result = (|| -> Result<(Vec<EpisodeRecord>, RunMetrics), TrainError> {
        let mut records = Vec::new();
        for &s in &config.seeds {
            let seed_records = run_seed(config, s)?;
            manifest.seeds.push(SeedEntry {
                seed: s,
                episodes_recorded: seed_records.len(),
                final_success_rate: final_success(&seed_records, s, metrics::export::FINAL_WINDOW),
            });
            records.extend(seed_records);
            manifest.write(out)?;
        }
        let m = metrics::summarize(&records)?;
        metrics::export(&m, out, true)?;
        Ok((records, m))
    })();

    manifest.finished_unix = Some(now_unix());
    match result {
        Ok((records, m)) => {
            manifest.status = RunStatus::Complete;
            manifest.summary = Some(MetricsSummary::from_metrics(&m));
            manifest.write(out)?;
            Ok(TrainingOutcome {
                records,
                metrics: m,
                manifest,
            })
        }
        Err(e) => {
            manifest.status = RunStatus::Incomplete;
            manifest.error = Some(e.to_string());
            let _ = manifest.write(out);
            Err(e)
        }
    }
}

pub struct EvalOutcome {
    pub records: Vec<EpisodeRecord>,
    pub metrics: RunMetrics,
}

/// Sampled (non-greedy) rollouts of fixed agents; nothing is written.
pub fn evaluate_agents(
    env: &EnvConfig,
    agents: &[Agent],
    episodes: usize,
    parallel_envs: usize,
    sim_seed: u64,
) -> Result<EvalOutcome, TrainError> {
    if episodes == 0 || parallel_envs == 0 {
        return Err(TrainError::Config("episodes and parallel_envs must be >= 1".into()));
    }
    let mut runner = runner_for(env, sim_seed, parallel_envs, 1)?;
    let mut rngs = action_rngs(sim_seed, parallel_envs);
    let mut records = Vec::with_capacity(episodes * parallel_envs);
    for round in 0..episodes {
        if round > 0 {
            runner.reset_finished()?;
        }
        records.extend(collect_round(&mut runner, agents, &mut rngs, sim_seed, None)?.records);
    }
    let metrics = metrics::summarize(&records)?;
    Ok(EvalOutcome { records, metrics })
}

/// Evaluates a checkpoint directory. `env_override` must agree with the
/// checkpoint's observation layout.
pub fn evaluate(
    checkpoint: &Path,
    episodes: usize,
    parallel_envs: usize,
    sim_seed: u64,
    env_override: Option<&EnvConfig>,
) -> Result<EvalOutcome, TrainError> {
    let (stored_env, agents) = load_checkpoint(checkpoint)?;
    let env = match env_override {
        Some(e) => {
            if e.obs_flags != stored_env.obs_flags || e.num_agents != stored_env.num_agents {
                return Err(TrainError::Config(format!(
                    "checkpoint expects {} agents with observation flags {:?}, got {} agents with {:?}",
                    stored_env.num_agents, stored_env.obs_flags, e.num_agents, e.obs_flags
                )));
            }
            e.clone()
        }
        None => stored_env,
    };
    evaluate_agents(&env, &agents, episodes, parallel_envs, sim_seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub total_episodes: usize,
    pub successes: u64,
    pub success_ci95: Interval,
    /// Trend test on the per-episode success indicator, in collection order.
    pub trend: MannKendall,
    pub mean_key_drops: f64,
    pub mean_episode_length: f64,
}

impl BaselineReport {
    pub fn from_records(records: &[EpisodeRecord]) -> Self {
        let successes = records.iter().filter(|r| r.collective_success).count() as u64;
        let series: Vec<f64> = records
            .iter()
            .map(|r| f64::from(u8::from(r.collective_success)))
            .collect();
        let n = records.len().max(1) as f64;
        BaselineReport {
            total_episodes: records.len(),
            successes,
            success_ci95: metrics::wilson_interval(successes, records.len() as u64, metrics::Z_95),
            trend: metrics::mann_kendall(&series),
            mean_key_drops: records.iter().map(|r| f64::from(r.total_key_drops())).sum::<f64>() / n,
            mean_episode_length: records.iter().map(|r| r.episode_length as f64).sum::<f64>() / n,
        }
    }
}

/// Masked-uniform agents on `episodes × parallel_envs` episodes.
pub fn run_random_baseline(
    env: &EnvConfig,
    episodes: usize,
    parallel_envs: usize,
    sim_seed: u64,
) -> Result<(BaselineReport, EvalOutcome), TrainError> {
    env.validate().map_err(|e| TrainError::Config(e.to_string()))?;
    let settings = AgentSettings {
        variant: AgentVariant::Random,
        hidden: 1,
        ..AgentSettings::default()
    };
    let agents: Vec<Agent> = (0..env.num_agents)
        .map(|i| Agent::new(i, env.obs_len(), settings, &mut seed::rng_from(agent_seed(sim_seed, i))))
        .collect();
    let outcome = evaluate_agents(env, &agents, episodes, parallel_envs, sim_seed)?;
    Ok((BaselineReport::from_records(&outcome.records), outcome))
}
