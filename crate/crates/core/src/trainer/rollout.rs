use rand_chacha::ChaCha8Rng;

use crate::agents::{ActOutput, Agent, StepRecord, Trajectory};
use crate::env::{ActionEffect, Observation, RewardEventKind, TraceRecorder};
use crate::metrics::{AgentEpisode, EpisodeRecord};
use crate::seed;
use crate::vec_env::{BatchRunner, EnvTransition};

use super::TrainError;

/// One episode per environment, collected in lockstep.
pub struct RoundOutput {
    /// `trajectories[agent][env]`
    pub trajectories: Vec<Vec<Trajectory>>,
    /// One record per environment, in environment order.
    pub records: Vec<EpisodeRecord>,
    pub trace: Option<TraceRecorder>,
}

/// Per-environment action generators for a simulation seed.
pub fn action_rngs(sim_seed: u64, count: usize) -> Vec<ChaCha8Rng> {
    let base = seed::mix(sim_seed, seed::stream::ACTION);
    (0..count).map(|k| seed::rng_from(seed::mix(base, k as u64))).collect()
}

struct Accumulator {
    agents: Vec<AgentEpisode>,
    length: usize,
    success: bool,
    picked: bool,
    distance_sum: f64,
}

fn mean_pairwise_distance(env: &crate::env::EnvState) -> f64 {
    let n = env.agents.len();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for a in 0..n {
        for b in a + 1..n {
            sum += env.agents[a].pos.distance(env.agents[b].pos);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum / pairs as f64
    }
}

/// Runs every live environment of `runner` to the end of its episode.
/// The runner must have auto-reset disabled.
pub fn collect_round(
    runner: &mut BatchRunner,
    agents: &[Agent],
    rngs: &mut [ChaCha8Rng],
    sim_seed: u64,
    trace_env: Option<usize>,
) -> Result<RoundOutput, TrainError> {
    let envs = runner.len();
    let n = agents.len();
    let mut obs: Vec<Vec<Observation>> = (0..envs).map(|k| runner.observations(k)).collect();
    let mut hidden: Vec<Vec<Vec<f64>>> = (0..envs)
        .map(|_| agents.iter().map(Agent::initial_hidden).collect())
        .collect();
    let mut trajectories: Vec<Vec<Trajectory>> = (0..n)
        .map(|i| {
            (0..envs)
                .map(|k| Trajectory::new(i, k, runner.episode_index(k), agents[i].initial_hidden()))
                .collect()
        })
        .collect();
    let mut acc: Vec<Accumulator> = (0..envs)
        .map(|_| Accumulator {
            agents: vec![
                AgentEpisode {
                    reward: 0.0,
                    individual: 0.0,
                    collective: 0.0,
                    key_drops: 0,
                    first_reward_timestep: None,
                };
                n
            ],
            length: 0,
            success: false,
            picked: false,
            distance_sum: 0.0,
        })
        .collect();
    let mut trace =
        trace_env.map(|k| TraceRecorder::new(runner.config().clone(), runner.env_seeds()[k], runner.episode_index(k)));

    while runner.any_live() {
        let live = runner.live_mask().to_vec();
        let mut joint = vec![Vec::new(); envs];
        let mut outputs: Vec<Vec<(ActOutput, [bool; 6])>> = vec![Vec::new(); envs];
        for k in (0..envs).filter(|&k| live[k]) {
            for (i, agent) in agents.iter().enumerate() {
                let mask = runner.env(k).legal_mask(i);
                let out = agent.act(&obs[k][i].features, &hidden[k][i], &mask, &mut rngs[k])?;
                joint[k].push(out.action);
                outputs[k].push((out, mask));
            }
        }
        let transitions = runner.batch_step(&joint)?;
        for (k, tr) in transitions.into_iter().enumerate() {
            let EnvTransition::Stepped {
                timestep,
                observations,
                outcome,
                ..
            } = tr
            else {
                continue;
            };
            if trace_env == Some(k) {
                if let Some(t) = trace.as_mut() {
                    t.record(timestep, &joint[k], &outcome);
                }
            }
            let a = &mut acc[k];
            a.length = timestep + 1;
            a.distance_sum += mean_pairwise_distance(runner.env(k).state());
            for (i, (out, mask)) in std::mem::take(&mut outputs[k]).into_iter().enumerate() {
                let events: Vec<_> = outcome.events.iter().filter(|e| e.agent == i).copied().collect();
                let ag = &mut a.agents[i];
                ag.reward += outcome.rewards[i];
                for e in &events {
                    match e.kind {
                        RewardEventKind::OwnDoorOpened => ag.individual += e.amount,
                        RewardEventKind::AllDoorsOpened => {
                            ag.collective += e.amount;
                            a.success = true;
                        }
                        _ => {}
                    }
                    if e.is_standard() && e.amount != 0.0 && ag.first_reward_timestep.is_none() {
                        ag.first_reward_timestep = Some(timestep);
                    }
                }
                match outcome.effects[i] {
                    ActionEffect::Dropped => ag.key_drops += 1,
                    ActionEffect::PickedUp => a.picked = true,
                    _ => {}
                }
                hidden[k][i] = out.new_hidden;
                trajectories[i][k].steps.push(StepRecord {
                    observation: std::mem::take(&mut obs[k][i].features),
                    action: out.action,
                    mask,
                    log_prob: out.log_prob,
                    entropy: out.entropy,
                    reward: outcome.rewards[i],
                    events,
                    tape: out.tape,
                });
            }
            obs[k] = observations;
        }
    }

    let records = acc
        .into_iter()
        .enumerate()
        .map(|(k, a)| EpisodeRecord {
            seed: sim_seed,
            episode_index: runner.episode_index(k),
            env_index: k,
            episode_length: a.length,
            collective_success: a.success,
            key_ever_picked: a.picked,
            mean_distance: if a.length == 0 {
                0.0
            } else {
                a.distance_sum / a.length as f64
            },
            agents: a.agents,
        })
        .collect();
    Ok(RoundOutput {
        trajectories,
        records,
        trace,
    })
}
