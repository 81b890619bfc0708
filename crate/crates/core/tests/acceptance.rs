//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr (uncaptured) and then asserts.
//!
//! Criteria 5 to 7 train four arms on five seeds each. Finished runs are
//! cached under `$MANITOKAN_ACCEPTANCE_CACHE` (default: cargo's test tmpdir)
//! and reused only when the configuration and a fingerprint of the training
//! sources match, which is sound because training is deterministic.

#![allow(clippy::needless_range_loop)]

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::hash::{Hash, Hasher};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use manitokan::agents::{verify_theorem1, CorrectionEstimator, CorrectionMode, ToyObjective, ToySpec};
use manitokan::env::{
    encode_observation, replay_trace, Action, ActionEffect, Cell, EnvConfig, EnvState, ManitokanEnv, ObsFlags,
    RewardEventKind, TraceRecorder, TurnOrder,
};
use manitokan::metrics::{EpisodeRecord, OPTIMAL_KEY_DROPS};
use manitokan::nn::{grad_of_grad, run_gradcheck, GradcheckSettings};
use manitokan::seed;
use manitokan::trainer::suite::{
    cumulative_individual_reward, desk_scale_arms, run_arm_seed, tail_key_drops, tail_success, windowed_seed_variance,
};
use manitokan::trainer::{run_random_baseline, BaselineReport, RunManifest};

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {criterion}: {verdict} | {detail}");
}

fn note(line: &str) {
    let _ = writeln!(std::io::stderr(), "  {line}");
}

// ---------------------------------------------------------------- 1

const INVARIANT_EPISODES: u64 = 100_000;

fn action(index: usize) -> Action {
    Action::from_index(index).unwrap()
}

/// Cells outside the 3x3 view of `agent` that could hold the key.
fn free_cell_out_of_view(state: &EnvState, agent: usize) -> Option<Cell> {
    let me = state.agents[agent].pos;
    (0..state.height as i32)
        .flat_map(|y| (0..state.width as i32).map(move |x| Cell::new(x, y)))
        .find(|&c| (c.x - me.x).abs() > 1 || (c.y - me.y).abs() > 1)
        .filter(|&c| state.is_free(c))
}

/// The observation of every agent that does not hold the key is the same
/// whether the key is held by someone else or lies somewhere out of sight.
fn check_opacity(state: &EnvState, config: &EnvConfig, last: &[Option<Action>]) -> Result<(), String> {
    let Some(holder) = state.key_holder else {
        return Ok(());
    };
    for j in (0..state.num_agents()).filter(|&j| j != holder) {
        let Some(cell) = free_cell_out_of_view(state, j) else {
            continue;
        };
        let mut counterfactual = state.clone();
        counterfactual.key_holder = None;
        counterfactual.key_cell = Some(cell);
        if encode_observation(state, j, config, last[j]) != encode_observation(&counterfactual, j, config, last[j]) {
            return Err(format!("agent {j} can tell that agent {holder} carries the key"));
        }
    }
    Ok(())
}

fn run_invariant_episode(config: &EnvConfig, env_seed: u64, episode: u64, rng: &mut impl Rng) -> Result<bool, String> {
    let mut env = ManitokanEnv::new(config.clone(), env_seed, episode).map_err(|e| e.to_string())?;
    let n = config.num_agents;
    let mut trace = TraceRecorder::new(config.clone(), env_seed, episode);
    let mut last: Vec<Option<Action>> = vec![None; n];
    let success = loop {
        let before = env.state().clone();
        let actions: Vec<Action> = (0..n).map(|_| action(rng.gen_range(0..Action::COUNT))).collect();
        let t = before.timestep;
        let (_, out) = env.step(&actions).map_err(|e| e.to_string())?;
        trace.record(t, &actions, &out);
        let s = env.state();
        s.check_invariants(config).map_err(|e| format!("t={t}: {e}"))?;
        for (a, b) in before.doors.iter().zip(&s.doors) {
            if a.open && !b.open {
                return Err(format!("t={t}: door {} closed again", a.owner));
            }
        }
        let mut expected = vec![0.0; n];
        for (i, effect) in out.effects.iter().enumerate() {
            let opened = *effect == ActionEffect::OpenedDoor;
            let paid: Vec<_> = out
                .events
                .iter()
                .filter(|e| e.agent == i && e.kind == RewardEventKind::OwnDoorOpened)
                .collect();
            if opened != (paid.len() == 1) || paid.len() > 1 {
                return Err(format!("t={t}: individual reward of agent {i} misplaced"));
            }
            if opened {
                if !s.doors[i].open || before.doors[i].open || paid[0].amount != config.reward_individual {
                    return Err(format!("t={t}: agent {i} paid for a door it did not open"));
                }
                expected[i] += config.reward_individual;
            }
        }
        let all_open = s.all_doors_open();
        let collective: Vec<_> = out
            .events
            .iter()
            .filter(|e| e.kind == RewardEventKind::AllDoorsOpened)
            .collect();
        if all_open {
            if collective.len() != n || collective.iter().any(|e| e.amount != config.collective_reward()) {
                return Err(format!("t={t}: collective reward not paid to every agent"));
            }
            for e in &collective {
                expected[e.agent] += e.amount;
            }
        } else if !collective.is_empty() {
            return Err(format!("t={t}: collective reward before the last door"));
        }
        if out.events.iter().any(|e| e.timestep != t) {
            return Err(format!("t={t}: event stamped with the wrong step"));
        }
        if out.rewards != expected {
            return Err(format!(
                "t={t}: rewards {:?} differ from events {expected:?}",
                out.rewards
            ));
        }
        if out.done != (all_open || s.timestep == config.max_steps) || s.done != out.done {
            return Err(format!("t={t}: wrong termination flag"));
        }
        for (slot, &a) in last.iter_mut().zip(&actions) {
            *slot = Some(a);
        }
        check_opacity(s, config, &last).map_err(|e| format!("t={t}: {e}"))?;
        if out.done {
            break all_open;
        }
    };
    if env.step(&vec![Action::Forward; n]).is_ok() {
        return Err("stepping a finished episode succeeded".into());
    }
    let replay = replay_trace(&trace).map_err(|e| e.to_string())?;
    if !replay.is_exact() {
        return Err(format!("replay diverged: {:?}", replay.mismatch));
    }
    Ok(success)
}

#[test]
fn criterion_1_environment_invariants() {
    let start = Instant::now();
    let orders = [TurnOrder::Fixed, TurnOrder::Alternating, TurnOrder::RandomEachEpisode];
    let flags = [ObsFlags::NONE, ObsFlags::with_last_action(), ObsFlags::all()];
    let mut rng = seed::rng_from(0x5EED_0001);
    let mut failure = None;
    let mut successes = 0u64;
    for k in 0..INVARIANT_EPISODES {
        let config = EnvConfig {
            turn_order: orders[(k % 3) as usize],
            obs_flags: flags[((k / 3) % 3) as usize],
            ..EnvConfig::default()
        };
        match run_invariant_episode(&config, seed::env_seed(7, k % 64), k / 64, &mut rng) {
            Ok(s) => successes += u64::from(s),
            Err(e) => {
                failure = Some(format!("episode {k}: {e}"));
                break;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failure.is_none() && secs < 120.0;
    report(
        1,
        pass,
        &format!(
            "{INVARIANT_EPISODES} random-action episodes ({successes} collective successes) in {secs:.1}s{}",
            failure.as_deref().map(|f| format!("; {f}")).unwrap_or_default()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_gradient_oracle() {
    let start = Instant::now();
    let settings = GradcheckSettings::default();
    let report_ = run_gradcheck(&settings);
    let secs = start.elapsed().as_secs_f64();
    let worst = report_.worst().expect("at least one configuration");
    let full = report_
        .cases
        .iter()
        .filter(|c| c.name.starts_with("policy_full"))
        .count();
    let pass = report_.passed() && report_.cases.len() >= 100 && secs < 120.0 && settings.full_steps == 150;
    report(
        2,
        pass,
        &format!(
            "{} configurations ({full} full {}-step episodes), worst relative error {:.2e} in {} (tolerance {:.0e}), {secs:.1}s",
            report_.cases.len(),
            settings.full_steps,
            worst.max_rel_error,
            worst.name,
            report_.tolerance
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_correction_identity() {
    let mut rng = seed::rng_from(3);
    let mut specs = vec![ToySpec::default()];
    while specs.len() < 26 {
        let s = ToySpec::random(&mut rng, 2.0);
        if !verify_theorem1(&s).degenerate {
            specs.push(s);
        }
    }
    let estimator = CorrectionEstimator::new(CorrectionMode::Cross, 1.0);
    let mut identity: f64 = 0.0;
    let mut estimated: f64 = 0.0;
    for spec in &specs {
        let r = verify_theorem1(spec);
        identity = identity.max(r.max_abs_diff);
        let objective = ToyObjective { spec: *spec };
        let adj = estimator.estimate(&objective, &spec.logits_j);
        for k in 0..2 {
            estimated = estimated.max((adj[k] - r.right[k]).abs());
        }
    }

    // f(θ) = ½ θᵀAθ + bᵀθ has gradient Aθ + b and Hessian A.
    let dim = 7;
    let mut hvp: f64 = 0.0;
    for _ in 0..20 {
        let m: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let a: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| m[i][j] + m[j][i]).collect())
            .collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let theta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grad = |p: &[f64]| -> Vec<f64> {
            (0..dim)
                .map(|i| b[i] + (0..dim).map(|j| a[i][j] * p[j]).sum::<f64>())
                .collect()
        };
        let got = grad_of_grad(grad, &theta, &w, 1e-5);
        for i in 0..dim {
            let exact: f64 = (0..dim).map(|j| a[i][j] * w[j]).sum();
            hvp = hvp.max((got[i] - exact).abs());
        }
    }
    let pass = identity < 1e-6 && estimated < 1e-6 && hvp < 1e-6;
    report(
        3,
        pass,
        &format!(
            "{} initialisations: max |left - right| {identity:.2e}, estimator vs right {estimated:.2e}; quadratic Hessian-vector oracle {hvp:.2e}",
            specs.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

const BASELINE_ROUNDS: usize = 1250;
const BASELINE_ENVS: usize = 8;

fn baseline() -> &'static BaselineReport {
    static REPORT: OnceLock<BaselineReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        run_random_baseline(&EnvConfig::default(), BASELINE_ROUNDS, BASELINE_ENVS, 0)
            .expect("random baseline")
            .0
    })
}

#[test]
fn criterion_4_random_baseline() {
    let r = baseline();
    let ci = r.success_ci95;
    let stationary = !r.trend.trend_detected(0.05);
    let pass = r.total_episodes >= 10_000 && ci.lower <= ci.estimate && ci.estimate <= ci.upper && stationary;
    report(
        4,
        pass,
        &format!(
            "{} episodes: success {:.4} (95% CI {:.4}..{:.4}); Mann-Kendall z {:.2}, p {:.3}",
            r.total_episodes, ci.estimate, ci.lower, ci.upper, r.trend.z, r.trend.p_value
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------- 5, 6, 7 (shared sweep)

const SWEEP_EPISODES: usize = 2000;
const SWEEP_ENVS: usize = 8;
const SWEEP_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const FINAL_WINDOW: usize = 500;
const BURN_IN: usize = 500;
const VARIANCE_WINDOW: usize = 100;

const TRAINING_SOURCES: &[&str] = &[
    include_str!("../src/seed.rs"),
    include_str!("../src/vec_env.rs"),
    include_str!("../src/env/mod.rs"),
    include_str!("../src/env/config.rs"),
    include_str!("../src/env/observation.rs"),
    include_str!("../src/env/reward.rs"),
    include_str!("../src/env/state.rs"),
    include_str!("../src/nn/categorical.rs"),
    include_str!("../src/nn/critic.rs"),
    include_str!("../src/nn/finite_diff.rs"),
    include_str!("../src/nn/kernels.rs"),
    include_str!("../src/nn/params.rs"),
    include_str!("../src/nn/policy.rs"),
    include_str!("../src/nn/rmsprop.rs"),
    include_str!("../src/agents/mod.rs"),
    include_str!("../src/agents/correction.rs"),
    include_str!("../src/agents/trajectory.rs"),
    include_str!("../src/metrics/mod.rs"),
    include_str!("../src/metrics/export.rs"),
    include_str!("../src/trainer/mod.rs"),
    include_str!("../src/trainer/config.rs"),
    include_str!("../src/trainer/rollout.rs"),
    include_str!("../src/trainer/suite.rs"),
];

fn fingerprint() -> String {
    let mut h = DefaultHasher::new();
    TRAINING_SOURCES.hash(&mut h);
    format!("{}-{:016x}", env!("CARGO_PKG_VERSION"), h.finish())
}

fn cache_root() -> PathBuf {
    std::env::var_os("MANITOKAN_ACCEPTANCE_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-sweep"))
}

/// Records per arm name, one list per seed.
type Sweep = BTreeMap<&'static str, Vec<Vec<EpisodeRecord>>>;

fn sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let root = cache_root();
        let print = fingerprint();
        let mut out = Sweep::new();
        let mut compute_secs = 0u64;
        let mut reused = 0;
        for arm in desk_scale_arms(SWEEP_EPISODES, SWEEP_ENVS) {
            let mut per_seed = Vec::new();
            for &s in &SWEEP_SEEDS {
                let (records, was_cached) = run_arm_seed(&root, &arm, s, &print).expect("training run");
                reused += usize::from(was_cached);
                let manifest_path = root.join(arm.name).join(format!("seed_{s}")).join("manifest.json");
                if let Ok(text) = fs::read_to_string(manifest_path) {
                    if let Ok(m) = serde_json::from_str::<RunManifest>(&text) {
                        compute_secs += m.finished_unix.unwrap_or(m.started_unix) - m.started_unix;
                    }
                }
                note(&format!(
                    "{} seed {s}: final-{FINAL_WINDOW} success {:.4}, key drops {:.3}{}",
                    arm.name,
                    tail_success(&records, FINAL_WINDOW),
                    tail_key_drops(&records, FINAL_WINDOW),
                    if was_cached { " (cached)" } else { "" }
                ));
                per_seed.push(records);
            }
            out.insert(arm.name, per_seed);
        }
        note(&format!(
            "sweep: {} runs of {SWEEP_EPISODES} episodes x {SWEEP_ENVS} envs, {reused} reused from {}, training time {:.2} h",
            out.len() * SWEEP_SEEDS.len(),
            root.display(),
            compute_secs as f64 / 3600.0
        ));
        out
    })
}

#[test]
fn criterion_5_action_history_enables_learning() {
    let upper = baseline().success_ci95.upper;
    let s = sweep();
    let rates = |arm: &str| -> Vec<f64> { s[arm].iter().map(|r| tail_success(r, FINAL_WINDOW)).collect() };
    let with = rates("vanilla_history");
    let without = rates("vanilla_no_history");
    let above_with = with.iter().filter(|&&r| r > upper).count();
    let above_without = without.iter().filter(|&&r| r > upper).count();
    let pass = above_with >= 4 && SWEEP_SEEDS.len() - above_without >= 4;
    report(
        5,
        pass,
        &format!(
            "baseline upper {upper:.4}; with history {above_with}/5 seeds above {with:.4?}; without history {above_without}/5 above {without:.4?}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_self_correction_lowers_seed_variance() {
    let s = sweep();
    let vanilla = windowed_seed_variance(&s["vanilla_history"], BURN_IN, VARIANCE_WINDOW);
    let corrected = windowed_seed_variance(&s["self_correction_history"], BURN_IN, VARIANCE_WINDOW);
    let lower = vanilla.iter().zip(&corrected).filter(|(v, c)| c < v).count();
    let frac = lower as f64 / vanilla.len().max(1) as f64;
    let pass = !vanilla.is_empty() && frac >= 0.7;
    report(
        6,
        pass,
        &format!(
            "self-correction variance lower in {lower}/{} windows of {VARIANCE_WINDOW} episodes ({:.0}%); mean variance {:.2e} vs vanilla {:.2e}",
            vanilla.len(),
            100.0 * frac,
            corrected.iter().sum::<f64>() / corrected.len().max(1) as f64,
            vanilla.iter().sum::<f64>() / vanilla.len().max(1) as f64
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_anti_collective_drops_less() {
    let s = sweep();
    let pooled = |arm: &str| -> Vec<EpisodeRecord> { s[arm].iter().flatten().cloned().collect() };
    let anti = pooled("anti_collective_history");
    let vanilla = pooled("vanilla_history");
    let drops_anti = tail_key_drops(&anti, FINAL_WINDOW);
    let drops_vanilla = tail_key_drops(&vanilla, FINAL_WINDOW);
    let individual: Vec<f64> = (0..2).map(|i| cumulative_individual_reward(&anti, i)).collect();
    let pass = drops_anti < drops_vanilla && individual.iter().all(|&r| r > 0.0);
    report(
        7,
        pass,
        &format!(
            "final-{FINAL_WINDOW} key drops {drops_anti:.3} (anti-collective) vs {drops_vanilla:.3} (vanilla); anti-collective cumulative individual reward {individual:.1?}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

struct KeyAccount {
    success: bool,
    drops: u32,
    exchanges: u32,
}

/// Re-simulates a trace and counts drops and hand-overs of the key between
/// different agents.
fn account(trace: &TraceRecorder) -> KeyAccount {
    let h = &trace.header;
    let mut state = EnvState::reset(&h.config, h.seed, h.episode_index).unwrap();
    let mut last_holder: Option<usize> = None;
    let mut drops = 0;
    let mut exchanges = 0;
    let mut success = false;
    for step in &trace.steps {
        let out = state.step(&h.config, &step.actions).unwrap();
        for (i, e) in out.effects.iter().enumerate() {
            match e {
                ActionEffect::Dropped => drops += 1,
                ActionEffect::PickedUp => {
                    if last_holder.is_some_and(|p| p != i) {
                        exchanges += 1;
                    }
                    last_holder = Some(i);
                }
                _ => {}
            }
        }
        success = state.all_doors_open();
    }
    KeyAccount {
        success,
        drops,
        exchanges,
    }
}

#[test]
fn criterion_8_optimal_drop_accounting() {
    let config = EnvConfig::default();
    let mut rng = seed::rng_from(8);
    let n = config.num_agents;
    let mut qualifying = 0;
    let mut successes = 0;
    let mut violations = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    for k in 0..20_000u64 {
        let env_seed = seed::env_seed(8, k);
        let mut env = ManitokanEnv::new(config.clone(), env_seed, 0).unwrap();
        let mut trace = TraceRecorder::new(config.clone(), env_seed, 0);
        loop {
            let t = env.state().timestep;
            let actions: Vec<Action> = (0..n)
                .map(|i| {
                    let mask = env.legal_mask(i);
                    loop {
                        let a = rng.gen_range(0..Action::COUNT);
                        if mask[a] {
                            break action(a);
                        }
                    }
                })
                .collect();
            let (_, out) = env.step(&actions).unwrap();
            trace.record(t, &actions, &out);
            if out.done {
                break;
            }
        }
        if !env.state().all_doors_open() {
            continue;
        }
        // Accounting is done on the trace as read back from disk.
        let path = dir.path().join("trace.jsonl");
        trace.write_jsonl(fs::File::create(&path).unwrap()).unwrap();
        let read = TraceRecorder::read_jsonl(BufReader::new(fs::File::open(&path).unwrap())).unwrap();
        let acc = account(&read);
        assert!(acc.success);
        successes += 1;
        if acc.exchanges == 1 {
            qualifying += 1;
            if acc.drops < 1 {
                violations.push(k);
            }
        }
    }
    let pass = qualifying > 0 && violations.is_empty() && OPTIMAL_KEY_DROPS == 1.0;
    report(
        8,
        pass,
        &format!(
            "{successes} successful traces, {qualifying} with exactly one key exchange, {} with fewer than one drop; optimum marker {OPTIMAL_KEY_DROPS}",
            violations.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 9

fn files_under(root: &Path) -> BTreeSet<PathBuf> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out
}

#[test]
fn criterion_9_end_to_end_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    fs::write(
        &config,
        r#"{
            "env": {"obs_flags": ["last_action"]},
            "variants": ["self_correction_pg", "correction_pg"],
            "episodes": 30,
            "parallel_envs": 3,
            "seeds": [0, 1],
            "checkpoint_every": 10
        }"#,
    )
    .unwrap();
    let run = |name: &str| -> PathBuf {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_manitokan"))
            .args(["train", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("RUST_LOG", "warn")
            .output()
            .expect("spawn manitokan");
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        out
    };
    let a = run("a");
    let b = run("b");
    let fa = files_under(&a);
    let fb = files_under(&b);
    // Only these two carry wall-clock times or the output path.
    let volatile = [PathBuf::from("manifest.json"), PathBuf::from("config.json")];
    let mut compared = 0;
    let mut differing = Vec::new();
    for f in fa.iter().filter(|f| !volatile.contains(f)) {
        compared += 1;
        if fs::read(a.join(f)).unwrap() != fs::read(b.join(f)).ok().unwrap_or_default() {
            differing.push(f.display().to_string());
        }
    }
    let csvs = fa.iter().filter(|f| f.extension().is_some_and(|e| e == "csv")).count();
    let checkpoints = fa.iter().filter(|f| f.extension().is_some_and(|e| e == "bin")).count();
    let pass = fa == fb && differing.is_empty() && csvs >= 5 && checkpoints >= 16;
    report(
        9,
        pass,
        &format!(
            "{compared} files compared ({csvs} CSV, {checkpoints} checkpoint blobs), {} differ{}",
            differing.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(": {}", differing.join(", "))
            }
        ),
    );
    assert!(pass);
}
