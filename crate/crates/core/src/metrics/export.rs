//! CSV, JSON and SVG outputs.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::svg::LineChart;
use super::{AgentEpisode, EpisodeRecord, MetricsError, RunMetrics, OPTIMAL_KEY_DROPS, SMOOTHING_WINDOW};

const EPISODE_COLUMNS: [&str; 7] = [
    "seed",
    "episode_index",
    "env_index",
    "episode_length",
    "collective_success",
    "key_ever_picked",
    "mean_distance",
];
const EPISODE_AGENT_COLUMNS: [&str; 5] = ["reward", "individual", "collective", "key_drops", "first_reward_t"];

const METRIC_COLUMNS: [&str; 9] = [
    "episode",
    "success_rate",
    "success_smoothed",
    "success_q25",
    "success_q75",
    "success_variance",
    "key_drop_rate",
    "nonzero_key_drop_rate",
    "distance",
];
const METRIC_AGENT_COLUMNS: [&str; 3] = ["reward", "first_reward_t", "residual"];

fn header(base: &[&str], per_agent: &[&str], n: usize) -> Vec<String> {
    let mut h: Vec<String> = base.iter().map(|s| s.to_string()).collect();
    for i in 0..n {
        for c in per_agent {
            h.push(format!("{c}_{i}"));
        }
    }
    h
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse<T: std::str::FromStr>(file: &str, field: &str, raw: &str) -> Result<T, MetricsError> {
    raw.parse().map_err(|_| MetricsError::Parse {
        file: file.into(),
        detail: format!("bad {field} `{raw}`"),
    })
}

fn parse_opt<T: std::str::FromStr>(file: &str, field: &str, raw: &str) -> Result<Option<T>, MetricsError> {
    if raw.is_empty() {
        Ok(None)
    } else {
        parse(file, field, raw).map(Some)
    }
}

fn agents_in_header(h: &csv::StringRecord, base: usize, per_agent: usize, file: &str) -> Result<usize, MetricsError> {
    let extra = h.len().checked_sub(base).unwrap_or(usize::MAX);
    if extra == usize::MAX || !extra.is_multiple_of(per_agent) {
        return Err(MetricsError::Parse {
            file: file.into(),
            detail: format!("unexpected column count {}", h.len()),
        });
    }
    Ok(extra / per_agent)
}

/// Appends episode rows to `episodes.csv`, flushing after each batch.
pub struct EpisodeCsvWriter {
    inner: csv::Writer<File>,
}

impl EpisodeCsvWriter {
    pub fn create(path: &Path, num_agents: usize) -> Result<Self, MetricsError> {
        let mut inner = csv::Writer::from_path(path)?;
        inner.write_record(header(&EPISODE_COLUMNS, &EPISODE_AGENT_COLUMNS, num_agents))?;
        inner.flush()?;
        Ok(EpisodeCsvWriter { inner })
    }

    pub fn write(&mut self, records: &[EpisodeRecord]) -> Result<(), MetricsError> {
        for r in records {
            let mut row = vec![
                r.seed.to_string(),
                r.episode_index.to_string(),
                r.env_index.to_string(),
                r.episode_length.to_string(),
                u8::from(r.collective_success).to_string(),
                u8::from(r.key_ever_picked).to_string(),
                r.mean_distance.to_string(),
            ];
            for a in &r.agents {
                row.push(a.reward.to_string());
                row.push(a.individual.to_string());
                row.push(a.collective.to_string());
                row.push(a.key_drops.to_string());
                row.push(opt(a.first_reward_timestep));
            }
            self.inner.write_record(&row)?;
        }
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_episodes_csv(path: &Path, records: &[EpisodeRecord]) -> Result<(), MetricsError> {
    let n = records.first().map_or(0, |r| r.agents.len());
    EpisodeCsvWriter::create(path, n)?.write(records)
}

pub fn read_episodes_csv(path: &Path) -> Result<Vec<EpisodeRecord>, MetricsError> {
    let file = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path)?;
    let n = agents_in_header(
        rdr.headers()?,
        EPISODE_COLUMNS.len(),
        EPISODE_AGENT_COLUMNS.len(),
        &file,
    )?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let f = |k: usize| row.get(k).unwrap_or("");
        let flag = |k: usize| -> Result<bool, MetricsError> { Ok(parse::<u8>(&file, EPISODE_COLUMNS[k], f(k))? != 0) };
        let mut agents = Vec::with_capacity(n);
        for i in 0..n {
            let b = EPISODE_COLUMNS.len() + i * EPISODE_AGENT_COLUMNS.len();
            agents.push(AgentEpisode {
                reward: parse(&file, "reward", f(b))?,
                individual: parse(&file, "individual", f(b + 1))?,
                collective: parse(&file, "collective", f(b + 2))?,
                key_drops: parse(&file, "key_drops", f(b + 3))?,
                first_reward_timestep: parse_opt(&file, "first_reward_t", f(b + 4))?,
            });
        }
        out.push(EpisodeRecord {
            seed: parse(&file, "seed", f(0))?,
            episode_index: parse(&file, "episode_index", f(1))?,
            env_index: parse(&file, "env_index", f(2))?,
            episode_length: parse(&file, "episode_length", f(3))?,
            collective_success: flag(4)?,
            key_ever_picked: flag(5)?,
            mean_distance: parse(&file, "mean_distance", f(6))?,
            agents,
        });
    }
    Ok(out)
}

pub fn write_metrics_csv<W: Write>(metrics: &RunMetrics, out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(&METRIC_COLUMNS, &METRIC_AGENT_COLUMNS, metrics.num_agents))?;
    for t in 0..metrics.len() {
        let mut row = vec![
            metrics.episodes[t].to_string(),
            metrics.success_rate[t].to_string(),
            metrics.success_smoothed[t].to_string(),
            metrics.success_q25[t].to_string(),
            metrics.success_q75[t].to_string(),
            metrics.success_variance[t].to_string(),
            metrics.key_drop_rate[t].to_string(),
            opt(metrics.nonzero_key_drop_rate[t]),
            metrics.distance[t].to_string(),
        ];
        for i in 0..metrics.num_agents {
            row.push(metrics.cumulative_reward[i][t].to_string());
            row.push(opt(metrics.first_reward_timestep[i][t]));
            row.push(metrics.residual[i][t].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the series back; `seeds` is left empty because it lives in the summary.
pub fn read_metrics_csv(path: &Path) -> Result<RunMetrics, MetricsError> {
    let file = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path)?;
    let n = agents_in_header(rdr.headers()?, METRIC_COLUMNS.len(), METRIC_AGENT_COLUMNS.len(), &file)?;
    let mut m = RunMetrics {
        num_agents: n,
        seeds: Vec::new(),
        episodes: Vec::new(),
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
    for row in rdr.records() {
        let row = row?;
        let f = |k: usize| row.get(k).unwrap_or("");
        m.episodes.push(parse(&file, "episode", f(0))?);
        m.success_rate.push(parse(&file, "success_rate", f(1))?);
        m.success_smoothed.push(parse(&file, "success_smoothed", f(2))?);
        m.success_q25.push(parse(&file, "success_q25", f(3))?);
        m.success_q75.push(parse(&file, "success_q75", f(4))?);
        m.success_variance.push(parse(&file, "success_variance", f(5))?);
        m.key_drop_rate.push(parse(&file, "key_drop_rate", f(6))?);
        m.nonzero_key_drop_rate
            .push(parse_opt(&file, "nonzero_key_drop_rate", f(7))?);
        m.distance.push(parse(&file, "distance", f(8))?);
        for i in 0..n {
            let b = METRIC_COLUMNS.len() + i * METRIC_AGENT_COLUMNS.len();
            m.cumulative_reward[i].push(parse(&file, "reward", f(b))?);
            m.first_reward_timestep[i].push(parse_opt(&file, "first_reward_t", f(b + 1))?);
            m.residual[i].push(parse(&file, "residual", f(b + 2))?);
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub num_agents: usize,
    pub smoothing_window: usize,
    pub overall_success_rate: f64,
    pub final_window: usize,
    pub final_success_rate: f64,
    pub final_key_drop_rate: f64,
    pub final_cumulative_reward: Vec<f64>,
    pub mean_success_variance: f64,
    pub optimal_key_drops: f64,
}

pub const FINAL_WINDOW: usize = 500;

impl MetricsSummary {
    pub fn from_metrics(m: &RunMetrics) -> Self {
        let w = FINAL_WINDOW.min(m.len());
        MetricsSummary {
            episodes: m.len(),
            seeds: m.seeds.clone(),
            num_agents: m.num_agents,
            smoothing_window: SMOOTHING_WINDOW,
            overall_success_rate: super::stats::mean(&m.success_rate),
            final_window: w,
            final_success_rate: RunMetrics::tail_mean(&m.success_rate, w),
            final_key_drop_rate: RunMetrics::tail_mean(&m.key_drop_rate, w),
            final_cumulative_reward: m
                .cumulative_reward
                .iter()
                .map(|r| RunMetrics::tail_mean(r, w))
                .collect(),
            mean_success_variance: super::stats::mean(&m.success_variance),
            optimal_key_drops: OPTIMAL_KEY_DROPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExportedFiles {
    pub metrics_csv: PathBuf,
    pub summary_json: PathBuf,
    pub charts: Vec<PathBuf>,
}

fn points(x: &[u64], y: &[f64]) -> Vec<(f64, f64)> {
    x.iter().zip(y).map(|(&e, &v)| (e as f64, v)).collect()
}

pub fn charts(m: &RunMetrics) -> Vec<(&'static str, LineChart)> {
    let smooth = |s: &[f64]| super::moving_average(s, SMOOTHING_WINDOW);
    let mut success = LineChart::new("Collective success rate", "episode", "success rate")
        .with_series("smoothed mean over seeds", points(&m.episodes, &m.success_smoothed));
    success.band = Some(
        m.episodes
            .iter()
            .zip(m.success_q25.iter().zip(&m.success_q75))
            .map(|(&e, (&lo, &hi))| (e as f64, lo, hi))
            .collect(),
    );
    let mut drops = LineChart::new("Key drops per episode", "episode", "key drops")
        .with_series("key drop rate", points(&m.episodes, &smooth(&m.key_drop_rate)));
    let nonzero: Vec<f64> = m.nonzero_key_drop_rate.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    drops = drops.with_series("non-zero key drop rate", points(&m.episodes, &nonzero));
    drops.reference = Some((OPTIMAL_KEY_DROPS, "optimum = 1".into()));
    let variance = LineChart::new("Cross-seed variance of success", "episode", "variance")
        .with_series("variance", points(&m.episodes, &m.success_variance));
    let mut reward = LineChart::new("Cumulative reward", "episode", "reward per episode");
    let mut residual = LineChart::new("Collective success residual", "episode", "(r^c - r^i) x r^i");
    for i in 0..m.num_agents {
        reward = reward.with_series(
            &format!("agent {i}"),
            points(&m.episodes, &smooth(&m.cumulative_reward[i])),
        );
        residual = residual.with_series(&format!("agent {i}"), points(&m.episodes, &smooth(&m.residual[i])));
    }
    let distance = LineChart::new("Inter-agent distance", "episode", "cells")
        .with_series("mean distance", points(&m.episodes, &smooth(&m.distance)));
    vec![
        ("success.svg", success),
        ("key_drops.svg", drops),
        ("variance.svg", variance),
        ("reward.svg", reward),
        ("residual.svg", residual),
        ("distance.svg", distance),
    ]
}

/// Writes `metrics.csv`, `summary.json` and, if `with_charts`, the SVG charts into `dir`.
pub fn export(metrics: &RunMetrics, dir: &Path, with_charts: bool) -> Result<ExportedFiles, MetricsError> {
    std::fs::create_dir_all(dir)?;
    let metrics_csv = dir.join("metrics.csv");
    let mut buf = Vec::new();
    write_metrics_csv(metrics, &mut buf)?;
    crate::nn::checkpoint::write_atomic(&metrics_csv, &buf)?;
    let summary_json = dir.join("summary.json");
    let summary = serde_json::to_vec_pretty(&MetricsSummary::from_metrics(metrics))?;
    crate::nn::checkpoint::write_atomic(&summary_json, &summary)?;
    let mut files = Vec::new();
    if with_charts {
        for (name, chart) in charts(metrics) {
            let path = dir.join(name);
            crate::nn::checkpoint::write_atomic(&path, chart.render().as_bytes())?;
            files.push(path);
        }
    }
    Ok(ExportedFiles {
        metrics_csv,
        summary_json,
        charts: files,
    })
}
