use manitokan::env::{Action, EnvConfig, ManitokanEnv};
use manitokan::seed;
use manitokan::vec_env::{make_batch, BatchError, EnvTransition};

fn joint(k: usize, t: usize) -> Vec<Action> {
    (0..2)
        .map(|i| Action::from_index((k * 7 + t * 3 + i * 5) % Action::COUNT).unwrap())
        .collect()
}

fn run(workers: usize, steps: usize) -> Vec<EnvTransition> {
    let mut runner = make_batch(&EnvConfig::default(), 11, 6).unwrap().with_workers(workers).unwrap();
    let mut out = Vec::new();
    for t in 0..steps {
        let actions: Vec<_> = (0..runner.len()).map(|k| joint(k, t)).collect();
        out.extend(runner.batch_step(&actions).unwrap());
    }
    out
}

#[test]
fn worker_count_does_not_change_results() {
    assert_eq!(run(1, 400), run(3, 400));
}

#[test]
fn batch_matches_standalone_environments() {
    let config = EnvConfig::default();
    let mut runner = make_batch(&config, 5, 3).unwrap().with_auto_reset(false);
    let mut singles: Vec<_> = runner
        .env_seeds()
        .iter()
        .map(|&s| ManitokanEnv::new(config.clone(), s, 0).unwrap())
        .collect();
    for k in 0..3 {
        assert_eq!(runner.env_seeds()[k], seed::env_seed(5, k as u64));
    }
    for t in 0..config.max_steps {
        let actions: Vec<_> = (0..3).map(|k| joint(k, t)).collect();
        for (k, tr) in runner.batch_step(&actions).unwrap().into_iter().enumerate() {
            match tr {
                EnvTransition::Stepped {
                    observations, outcome, ..
                } => {
                    let (obs, out) = singles[k].step(&actions[k]).unwrap();
                    assert_eq!(observations, obs);
                    assert_eq!(outcome, out);
                }
                EnvTransition::Idle => assert!(singles[k].state().done),
            }
        }
    }
    assert!(!runner.any_live());
    assert_eq!(runner.reset_finished().unwrap(), vec![0, 1, 2]);
    assert!((0..3).all(|k| runner.episode_index(k) == 1));
}

#[test]
fn auto_reset_starts_the_next_episode() {
    let config = EnvConfig {
        max_steps: 5,
        ..EnvConfig::default()
    };
    let mut runner = make_batch(&config, 0, 2).unwrap();
    let actions = vec![vec![Action::TurnLeft; 2]; 2];
    for t in 0..5 {
        for tr in runner.batch_step(&actions).unwrap() {
            let EnvTransition::Stepped {
                reset_observations, ..
            } = tr
            else {
                panic!("auto-reset batch never idles");
            };
            assert_eq!(reset_observations.is_some(), t == 4);
        }
    }
    assert_eq!(runner.episode_index(0), 1);
    assert!(runner.live_mask().iter().all(|&l| l));
}

#[test]
fn malformed_batches_are_rejected() {
    assert!(matches!(make_batch(&EnvConfig::default(), 0, 0), Err(BatchError::Empty)));
    let mut runner = make_batch(&EnvConfig::default(), 0, 2).unwrap();
    assert!(matches!(
        runner.batch_step(&[vec![Action::Forward; 2]]),
        Err(BatchError::ActionListLength { expected: 2, got: 1 })
    ));
}
