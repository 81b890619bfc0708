//! Episode statistics, cross-seed aggregation and exports.

pub mod export;
pub mod stats;
pub mod svg;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use export::{export, read_episodes_csv, read_metrics_csv, write_metrics_csv, EpisodeCsvWriter, ExportedFiles};
pub use stats::{mann_kendall, moving_average, wilson_interval, Interval, MannKendall, Z_95};

pub const SMOOTHING_WINDOW: usize = 100;
/// Total key drops per successful episode under an optimal joint policy.
pub const OPTIMAL_KEY_DROPS: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no episode records")]
    Empty,
    #[error("records mix {0} and {1} agents")]
    AgentCount(usize, usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed {file}: {detail}")]
    Parse { file: String, detail: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentEpisode {
    /// Everything the agent received, variant terms included.
    pub reward: f64,
    /// Amount received from its own-door event.
    pub individual: f64,
    /// Amount received from the all-doors event.
    pub collective: f64,
    pub key_drops: u32,
    pub first_reward_timestep: Option<usize>,
}

impl AgentEpisode {
    /// `(r^c − r^i) × r^i` with the amounts actually received.
    pub fn residual(&self) -> f64 {
        (self.collective - self.individual) * self.individual
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub episode_index: u64,
    pub env_index: usize,
    pub episode_length: usize,
    pub collective_success: bool,
    pub key_ever_picked: bool,
    /// Mean pairwise Euclidean distance between agents, sampled after every step.
    pub mean_distance: f64,
    pub agents: Vec<AgentEpisode>,
}

impl EpisodeRecord {
    pub fn total_key_drops(&self) -> u32 {
        self.agents.iter().map(|a| a.key_drops).sum()
    }
}

/// Per-episode series, averaged over environments and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub num_agents: usize,
    pub seeds: Vec<u64>,
    pub episodes: Vec<u64>,
    pub success_rate: Vec<f64>,
    /// Mean over seeds of each seed's smoothed success series.
    pub success_smoothed: Vec<f64>,
    pub success_q25: Vec<f64>,
    pub success_q75: Vec<f64>,
    /// Variance across seeds of the smoothed success series.
    pub success_variance: Vec<f64>,
    pub key_drop_rate: Vec<f64>,
    /// Averaged only over episodes in which the key was picked up.
    pub nonzero_key_drop_rate: Vec<Option<f64>>,
    pub distance: Vec<f64>,
    /// `[agent][episode]`
    pub cumulative_reward: Vec<Vec<f64>>,
    pub first_reward_timestep: Vec<Vec<Option<f64>>>,
    pub residual: Vec<Vec<f64>>,
}

impl RunMetrics {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Mean of `series` over its last `n` entries.
    pub fn tail_mean(series: &[f64], n: usize) -> f64 {
        stats::mean(&series[series.len().saturating_sub(n)..])
    }
}

fn mean_opt(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Per-seed `(episode_index, success rate)` series, ordered by episode.
pub fn success_by_seed(records: &[EpisodeRecord]) -> BTreeMap<u64, Vec<(u64, f64)>> {
    let mut grouped: BTreeMap<u64, BTreeMap<u64, (f64, usize)>> = BTreeMap::new();
    for r in records {
        let e = grouped
            .entry(r.seed)
            .or_default()
            .entry(r.episode_index)
            .or_insert((0.0, 0));
        e.0 += f64::from(u8::from(r.collective_success));
        e.1 += 1;
    }
    grouped
        .into_iter()
        .map(|(seed, eps)| (seed, eps.into_iter().map(|(e, (s, c))| (e, s / c as f64)).collect()))
        .collect()
}

pub fn summarize(records: &[EpisodeRecord]) -> Result<RunMetrics, MetricsError> {
    let first = records.first().ok_or(MetricsError::Empty)?;
    let n = first.agents.len();
    if let Some(r) = records.iter().find(|r| r.agents.len() != n) {
        return Err(MetricsError::AgentCount(n, r.agents.len()));
    }
    let mut by_episode: BTreeMap<u64, Vec<&EpisodeRecord>> = BTreeMap::new();
    for r in records {
        by_episode.entry(r.episode_index).or_default().push(r);
    }
    let episodes: Vec<u64> = by_episode.keys().copied().collect();
    let mut m = RunMetrics {
        num_agents: n,
        seeds: Vec::new(),
        episodes: episodes.clone(),
        success_rate: Vec::new(),
        success_smoothed: Vec::new(),
        success_q25: Vec::new(),
        success_q75: Vec::new(),
        success_variance: Vec::new(),
        key_drop_rate: Vec::new(),
        nonzero_key_drop_rate: Vec::new(),
        distance: Vec::new(),
        cumulative_reward: vec![Vec::new(); n],
        first_reward_timestep: vec![Vec::new(); n],
        residual: vec![Vec::new(); n],
    };
    for rows in by_episode.values() {
        let k = rows.len() as f64;
        m.success_rate
            .push(rows.iter().filter(|r| r.collective_success).count() as f64 / k);
        m.key_drop_rate
            .push(rows.iter().map(|r| f64::from(r.total_key_drops())).sum::<f64>() / k);
        m.nonzero_key_drop_rate.push(mean_opt(
            rows.iter()
                .filter(|r| r.key_ever_picked)
                .map(|r| f64::from(r.total_key_drops())),
        ));
        m.distance.push(rows.iter().map(|r| r.mean_distance).sum::<f64>() / k);
        for i in 0..n {
            m.cumulative_reward[i].push(rows.iter().map(|r| r.agents[i].reward).sum::<f64>() / k);
            m.residual[i].push(rows.iter().map(|r| r.agents[i].residual()).sum::<f64>() / k);
            m.first_reward_timestep[i].push(mean_opt(
                rows.iter()
                    .filter_map(|r| r.agents[i].first_reward_timestep.map(|t| t as f64)),
            ));
        }
    }

    // Cross-seed statistics of the smoothed per-seed series. A seed missing
    // an episode simply does not contribute to it.
    let per_seed = success_by_seed(records);
    m.seeds = per_seed.keys().copied().collect();
    let smoothed_by_seed: Vec<BTreeMap<u64, f64>> = per_seed
        .values()
        .map(|series| {
            let rates: Vec<f64> = series.iter().map(|(_, r)| *r).collect();
            let smooth = moving_average(&rates, SMOOTHING_WINDOW);
            series.iter().map(|(e, _)| *e).zip(smooth).collect()
        })
        .collect();
    for e in &episodes {
        let vals: Vec<f64> = smoothed_by_seed.iter().filter_map(|s| s.get(e).copied()).collect();
        m.success_smoothed.push(stats::mean(&vals));
        m.success_q25.push(stats::quantile(&vals, 0.25));
        m.success_q75.push(stats::quantile(&vals, 0.75));
        m.success_variance.push(stats::variance(&vals));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(seed: u64, episode: u64, success: bool, drops: [u32; 2], picked: bool) -> EpisodeRecord {
        let agent = |d: u32| AgentEpisode {
            reward: if success { 1.5 } else { 0.0 },
            individual: if success { 0.5 } else { 0.0 },
            collective: if success { 1.0 } else { 0.0 },
            key_drops: d,
            first_reward_timestep: success.then_some(10),
        };
        EpisodeRecord {
            seed,
            episode_index: episode,
            env_index: 0,
            episode_length: 150,
            collective_success: success,
            key_ever_picked: picked,
            mean_distance: 2.0,
            agents: vec![agent(drops[0]), agent(drops[1])],
        }
    }

    #[test]
    fn single_successful_episode() {
        let m = summarize(&[record(0, 0, true, [1, 0], true)]).unwrap();
        assert_eq!(m.success_rate, vec![1.0]);
        assert_eq!(m.cumulative_reward[0], vec![1.5]);
        assert_eq!(m.key_drop_rate, vec![1.0]);
        assert_eq!(m.residual[0], vec![0.25]);
        assert_eq!(m.success_variance, vec![0.0]);
    }

    #[test]
    fn nonzero_rate_absent_without_pickups() {
        let m = summarize(&[record(0, 0, false, [0, 0], false), record(0, 1, false, [0, 0], false)]).unwrap();
        assert_eq!(m.key_drop_rate, vec![0.0, 0.0]);
        assert_eq!(m.nonzero_key_drop_rate, vec![None, None]);
    }

    #[test]
    fn residual_vanishes_without_individual_reward() {
        let a = AgentEpisode {
            reward: 1.0,
            individual: 0.0,
            collective: 1.0,
            key_drops: 0,
            first_reward_timestep: None,
        };
        assert_eq!(a.residual(), 0.0);
    }

    #[test]
    fn cross_seed_variance() {
        let recs = vec![record(0, 0, true, [0, 0], true), record(1, 0, false, [0, 0], true)];
        let m = summarize(&recs).unwrap();
        assert_eq!(m.success_rate, vec![0.5]);
        assert_eq!(m.success_variance, vec![0.25]);
        assert_eq!(m.seeds, vec![0, 1]);
        assert!(summarize(&[]).is_err());
    }
}
