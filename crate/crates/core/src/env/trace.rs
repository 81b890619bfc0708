//! Line-delimited JSON episode traces.
//!
//! A trace starts with one `header` record carrying the configuration, seed
//! and episode index, followed by one `step` record per transition. Replaying
//! a trace re-simulates the episode from the header and checks every reward,
//! event and termination flag bit for bit.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::reward::RewardEvent;
use super::state::{EnvState, StepOutcome};
use super::{Action, EnvConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub config: EnvConfig,
    pub seed: u64,
    pub episode_index: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub timestep: usize,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub events: Vec<RewardEvent>,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(TraceHeader),
    Step(TransitionRecord),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecorder {
    pub header: TraceHeader,
    pub steps: Vec<TransitionRecord>,
}

impl TraceRecorder {
    pub fn new(config: EnvConfig, seed: u64, episode_index: u64) -> Self {
        TraceRecorder {
            header: TraceHeader {
                config,
                seed,
                episode_index,
            },
            steps: Vec::new(),
        }
    }

    pub fn record(&mut self, timestep: usize, actions: &[Action], outcome: &StepOutcome) {
        self.steps.push(TransitionRecord {
            timestep,
            actions: actions.to_vec(),
            rewards: outcome.rewards.clone(),
            events: outcome.events.clone(),
            done: outcome.done,
        });
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = TraceRecord::Header(self.header.clone());
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for step in &self.steps {
            serde_json::to_writer(&mut out, &TraceRecord::Step(step.clone()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, String> {
        let mut header = None;
        let mut steps = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceRecord = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", lineno + 1))?;
            match record {
                TraceRecord::Header(h) if header.is_none() => header = Some(h),
                TraceRecord::Header(_) => return Err(format!("line {}: second header", lineno + 1)),
                TraceRecord::Step(s) => steps.push(s),
            }
        }
        let header = header.ok_or_else(|| "trace has no header record".to_string())?;
        Ok(TraceRecorder { header, steps })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayReport {
    pub steps_checked: usize,
    /// First step whose re-simulated transition differs, with a description.
    pub mismatch: Option<(usize, String)>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatch.is_none()
    }
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn same_events(a: &[RewardEvent], b: &[RewardEvent]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.agent == y.agent
                && x.kind == y.kind
                && x.timestep == y.timestep
                && x.amount.to_bits() == y.amount.to_bits()
        })
}

/// Re-simulates a recorded episode and compares it with the recording.
pub fn replay_trace(trace: &TraceRecorder) -> Result<ReplayReport, super::EnvError> {
    let h = &trace.header;
    let mut state = EnvState::reset(&h.config, h.seed, h.episode_index)?;
    for (i, rec) in trace.steps.iter().enumerate() {
        if rec.timestep != state.timestep {
            return Ok(ReplayReport {
                steps_checked: i,
                mismatch: Some((i, format!("timestep {} vs {}", rec.timestep, state.timestep))),
            });
        }
        let out = match state.step(&h.config, &rec.actions) {
            Ok(out) => out,
            Err(e) => {
                return Ok(ReplayReport {
                    steps_checked: i,
                    mismatch: Some((i, e.to_string())),
                })
            }
        };
        let problem = if !same_bits(&out.rewards, &rec.rewards) {
            Some(format!("rewards {:?} vs recorded {:?}", out.rewards, rec.rewards))
        } else if !same_events(&out.events, &rec.events) {
            Some("reward events differ".to_string())
        } else if out.done != rec.done {
            Some(format!("done {} vs recorded {}", out.done, rec.done))
        } else {
            None
        };
        if let Some(p) = problem {
            return Ok(ReplayReport {
                steps_checked: i + 1,
                mismatch: Some((i, p)),
            });
        }
    }
    Ok(ReplayReport {
        steps_checked: trace.steps.len(),
        mismatch: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::RewardVariant;
    use crate::seed;
    use rand::Rng;

    fn random_trace(cfg: &EnvConfig, seed_value: u64) -> TraceRecorder {
        let mut state = EnvState::reset(cfg, seed_value, 4).unwrap();
        let mut rec = TraceRecorder::new(cfg.clone(), seed_value, 4);
        let mut rng = seed::rng_from(99);
        while !state.done {
            let actions: Vec<Action> = (0..2)
                .map(|_| Action::from_index(rng.gen_range(0..6)).unwrap())
                .collect();
            let t = state.timestep;
            let out = state.step(cfg, &actions).unwrap();
            rec.record(t, &actions, &out);
        }
        rec
    }

    #[test]
    fn jsonl_round_trip_and_replay() {
        let cfg = EnvConfig {
            reward_variant: RewardVariant::Injection,
            ..EnvConfig::default()
        };
        let rec = random_trace(&cfg, 11);
        let mut buf = Vec::new();
        rec.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), rec.steps.len() + 1);
        assert!(text.starts_with(r#"{"kind":"header""#));
        let back = TraceRecorder::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, rec);
        assert!(replay_trace(&back).unwrap().is_exact());
    }

    #[test]
    fn tampered_trace_is_detected() {
        let cfg = EnvConfig::default();
        let mut rec = random_trace(&cfg, 5);
        rec.steps[3].actions[0] = match rec.steps[3].actions[0] {
            Action::TurnLeft => Action::TurnRight,
            _ => Action::TurnLeft,
        };
        // a changed action may not change rewards, but a changed reward must be caught
        rec.steps[0].rewards[0] = 0.25;
        let report = replay_trace(&rec).unwrap();
        assert_eq!(report.mismatch.map(|m| m.0), Some(0));
    }
}
