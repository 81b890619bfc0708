//! Batched execution of independent environments.
//!
//! Environment `k` of a batch rooted at `base_seed` uses the seed
//! [`seed::env_seed`]`(base_seed, k)`, and its episode `e` is reset from
//! [`seed::episode_seed`]`(env_seed, e)`. A batch of one therefore behaves
//! exactly like a standalone [`ManitokanEnv`] built with the derived seed.
//!
//! Environments may be advanced by a rayon pool; outputs are always
//! collected in environment-index order, so results do not depend on the
//! number of workers.

use rayon::prelude::*;
use thiserror::Error;

use crate::env::{Action, EnvConfig, EnvError, ManitokanEnv, Observation, StepOutcome};
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum BatchError {
    #[error("expected actions for {expected} environments, got {got}")]
    ActionListLength { expected: usize, got: usize },
    #[error("environment {env_index}: {source}")]
    Env {
        env_index: usize,
        #[source]
        source: EnvError,
    },
    #[error("batch must contain at least one environment")]
    Empty,
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// Output of one environment for one `batch_step` call.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvTransition {
    /// The environment was not live and did not move.
    Idle,
    Stepped {
        /// Step index of the transition within its episode.
        timestep: usize,
        episode_index: u64,
        observations: Vec<Observation>,
        outcome: StepOutcome,
        /// Fresh observations when the environment auto-reset after finishing.
        reset_observations: Option<Vec<Observation>>,
    },
}

pub struct BatchRunner {
    envs: Vec<ManitokanEnv>,
    config: EnvConfig,
    base_seed: u64,
    env_seeds: Vec<u64>,
    episode_indices: Vec<u64>,
    live: Vec<bool>,
    auto_reset: bool,
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for BatchRunner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BatchRunner")
            .field("base_seed", &self.base_seed)
            .field("envs", &self.envs.len())
            .field("live", &self.live)
            .field("auto_reset", &self.auto_reset)
            .finish()
    }
}

type Slot<'a> = ((&'a mut ManitokanEnv, &'a mut bool), (&'a mut u64, &'a u64));

/// Builds `count` environments, all reset at episode 0.
pub fn make_batch(config: &EnvConfig, base_seed: u64, count: usize) -> Result<BatchRunner, BatchError> {
    if count == 0 {
        return Err(BatchError::Empty);
    }
    let env_seeds: Vec<u64> = (0..count as u64).map(|k| seed::env_seed(base_seed, k)).collect();
    let envs = env_seeds
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            ManitokanEnv::new(config.clone(), s, 0).map_err(|source| BatchError::Env { env_index: k, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BatchRunner {
        envs,
        config: config.clone(),
        base_seed,
        env_seeds,
        episode_indices: vec![0; count],
        live: vec![true; count],
        auto_reset: true,
        pool: None,
    })
}

impl BatchRunner {
    /// Advance environments on a dedicated pool of `workers` threads.
    /// `workers <= 1` steps them in the calling thread.
    pub fn with_workers(mut self, workers: usize) -> Result<Self, BatchError> {
        self.pool = if workers <= 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| BatchError::Pool(e.to_string()))?,
            )
        };
        Ok(self)
    }

    /// With auto-reset off, finished environments stay idle until
    /// [`reset_finished`](Self::reset_finished) is called.
    pub fn with_auto_reset(mut self, auto_reset: bool) -> Self {
        self.auto_reset = auto_reset;
        self
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn env_seeds(&self) -> &[u64] {
        &self.env_seeds
    }

    pub fn live_mask(&self) -> &[bool] {
        &self.live
    }

    pub fn any_live(&self) -> bool {
        self.live.iter().any(|&l| l)
    }

    pub fn env(&self, k: usize) -> &ManitokanEnv {
        &self.envs[k]
    }

    pub fn episode_index(&self, k: usize) -> u64 {
        self.episode_indices[k]
    }

    pub fn observations(&self, k: usize) -> Vec<Observation> {
        self.envs[k].observations()
    }

    /// Resets every finished environment to its next episode and returns the
    /// indices that were reset.
    pub fn reset_finished(&mut self) -> Result<Vec<usize>, BatchError> {
        let mut reset = Vec::new();
        for k in 0..self.envs.len() {
            if !self.live[k] {
                self.episode_indices[k] += 1;
                self.envs[k]
                    .reset(self.env_seeds[k], self.episode_indices[k])
                    .map_err(|source| BatchError::Env { env_index: k, source })?;
                self.live[k] = true;
                reset.push(k);
            }
        }
        Ok(reset)
    }

    /// Steps every live environment. `joint_actions[k]` holds one action per
    /// agent for environment `k`; entries for idle environments are ignored.
    pub fn batch_step(&mut self, joint_actions: &[Vec<Action>]) -> Result<Vec<EnvTransition>, BatchError> {
        if joint_actions.len() != self.envs.len() {
            return Err(BatchError::ActionListLength {
                expected: self.envs.len(),
                got: joint_actions.len(),
            });
        }
        let auto_reset = self.auto_reset;
        let work = |(k, ((env, live), (episode, env_seed))): (usize, Slot<'_>)| -> Result<EnvTransition, BatchError> {
            if !*live {
                return Ok(EnvTransition::Idle);
            }
            let timestep = env.state().timestep;
            let episode_index = *episode;
            let (observations, outcome) = env
                .step(&joint_actions[k])
                .map_err(|source| BatchError::Env { env_index: k, source })?;
            let mut reset_observations = None;
            if outcome.done {
                if auto_reset {
                    *episode += 1;
                    reset_observations = Some(
                        env.reset(*env_seed, *episode)
                            .map_err(|source| BatchError::Env { env_index: k, source })?,
                    );
                } else {
                    *live = false;
                }
            }
            Ok(EnvTransition::Stepped {
                timestep,
                episode_index,
                observations,
                outcome,
                reset_observations,
            })
        };

        let results: Vec<Result<EnvTransition, BatchError>> = match &self.pool {
            Some(pool) => pool.install(|| {
                self.envs
                    .par_iter_mut()
                    .zip(self.live.par_iter_mut())
                    .zip(self.episode_indices.par_iter_mut().zip(self.env_seeds.par_iter()))
                    .enumerate()
                    .map(work)
                    .collect()
            }),
            None => self
                .envs
                .iter_mut()
                .zip(self.live.iter_mut())
                .zip(self.episode_indices.iter_mut().zip(self.env_seeds.iter()))
                .enumerate()
                .map(work)
                .collect(),
        };
        results.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_and_reproducible() {
        let cfg = EnvConfig::default();
        let a = make_batch(&cfg, 7, 32).unwrap();
        let b = make_batch(&cfg, 7, 32).unwrap();
        assert_eq!(a.env_seeds(), b.env_seeds());
        let mut s = a.env_seeds().to_vec();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 32);
    }

    #[test]
    fn neighbouring_base_seeds_share_no_positions() {
        let cfg = EnvConfig::default();
        let a = make_batch(&cfg, 7, 32).unwrap();
        let b = make_batch(&cfg, 8, 32).unwrap();
        for k in 0..32 {
            assert_ne!(a.env_seeds()[k], b.env_seeds()[k]);
        }
        assert!(a.env_seeds().iter().all(|s| !b.env_seeds().contains(s)));
    }

    #[test]
    fn rejects_wrong_action_list_length() {
        let mut batch = make_batch(&EnvConfig::default(), 1, 3).unwrap();
        let err = batch.batch_step(&[vec![Action::Forward; 2]]).unwrap_err();
        assert_eq!(err, BatchError::ActionListLength { expected: 3, got: 1 });
        assert_eq!(make_batch(&EnvConfig::default(), 1, 0).unwrap_err(), BatchError::Empty);
    }

    #[test]
    fn finished_env_auto_resets_and_others_continue() {
        let cfg = EnvConfig {
            max_steps: 3,
            ..EnvConfig::default()
        };
        let mut batch = make_batch(&cfg, 4, 2).unwrap();
        // push env 1 one step ahead so the two finish at different times
        let mut actions = vec![vec![Action::TurnLeft; 2]; 2];
        batch.envs[1].step(&actions[1]).unwrap();
        actions[0] = vec![Action::TurnRight; 2];
        batch.batch_step(&actions).unwrap();
        let out = batch.batch_step(&actions).unwrap();
        match &out[1] {
            EnvTransition::Stepped {
                outcome,
                reset_observations,
                episode_index,
                ..
            } => {
                assert!(outcome.done);
                assert!(reset_observations.is_some());
                assert_eq!(*episode_index, 0);
            }
            EnvTransition::Idle => panic!("env 1 should have stepped"),
        }
        match &out[0] {
            EnvTransition::Stepped { outcome, .. } => assert!(!outcome.done),
            EnvTransition::Idle => panic!("env 0 should have stepped"),
        }
        assert_eq!(batch.episode_index(1), 1);
        assert_eq!(batch.episode_index(0), 0);
        assert_eq!(batch.env(1).state().timestep, 0);
    }

    #[test]
    fn without_auto_reset_finished_envs_idle() {
        let cfg = EnvConfig {
            max_steps: 1,
            ..EnvConfig::default()
        };
        let mut batch = make_batch(&cfg, 4, 2).unwrap().with_auto_reset(false);
        let actions = vec![vec![Action::TurnLeft; 2]; 2];
        batch.batch_step(&actions).unwrap();
        assert_eq!(batch.live_mask(), &[false, false]);
        let out = batch.batch_step(&actions).unwrap();
        assert!(out.iter().all(|t| *t == EnvTransition::Idle));
        assert_eq!(batch.reset_finished().unwrap(), vec![0, 1]);
        assert_eq!(batch.episode_index(0), 1);
        assert!(batch.any_live());
    }
}
