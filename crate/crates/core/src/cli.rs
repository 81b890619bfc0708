//! Command-line front end. `run` parses arguments and returns the process
//! exit code; the binary is a thin wrapper around it.

use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::agents::{verify_theorem1, AgentVariant, ToySpec};
use crate::env::{replay_trace, EnvConfig, ObsFlags, TraceRecorder};
use crate::metrics::{self, export::MetricsSummary, read_episodes_csv};
use crate::nn::{run_gradcheck, GradcheckSettings};
use crate::seed;
use crate::trainer::{self, RunConfig, TrainError};

pub const OUT_ENV: &str = "MANITOKAN_OUT";
pub const THEOREM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    Usage = 1,
    Config = 2,
    CheckFailed = 3,
    Io = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    fn new(status: ExitStatus, message: impl Into<String>) -> Self {
        CliError {
            status,
            message: message.into(),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let status = match &e {
            TrainError::Config(_) => ExitStatus::Config,
            TrainError::Agent(crate::agents::AgentError::Checkpoint(_)) => ExitStatus::Io,
            TrainError::Io { .. } | TrainError::Metrics(_) => ExitStatus::Io,
            _ => ExitStatus::Config,
        };
        CliError::new(status, e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "manitokan",
    version,
    about = "Hidden-gift grid world: training, checks and reports"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Simulation seed; repeat for several.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Episodes per parallel environment.
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub parallel_envs: Option<usize>,
    /// Threads used to step the environment batch.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Agent variant, e.g. vanilla_pg or self_correction_pg.
    #[arg(long)]
    pub variant: Option<String>,
    /// Comma-separated observation extras: door_key_status,last_action (or `none`).
    #[arg(long)]
    pub obs_flags: Option<String>,
    /// Output directory; overrides MANITOKAN_OUT and the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted-path override, e.g. --set env.max_steps=50.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train agents and write metrics, checkpoints and a trace.
    Train(RunArgs),
    /// Roll out a checkpoint without updating it.
    Eval {
        /// Checkpoint directory (contains env.json and agent_*/).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 8)]
        parallel_envs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Must match the checkpoint's observation flags.
        #[arg(long)]
        obs_flags: Option<String>,
        /// Write metrics and charts here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Masked-uniform agents: success rate with a 95% interval and a trend test.
    BaselineRandom(RunArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        configurations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 150)]
        steps: usize,
    },
    /// Check the correction identity on the enumerable two-agent toy.
    TheoremCheck {
        /// Random initialisations in addition to the symmetric one.
        #[arg(long, default_value_t = 20)]
        inits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest logit gap of the random initialisations.
        #[arg(long, default_value_t = 2.0)]
        max_gap: f64,
    },
    /// Aggregate a run directory's episode files into metrics and charts.
    Report {
        /// Directory holding seed_*/episodes.csv.
        #[arg(long)]
        run: PathBuf,
        /// Output directory (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-simulate a JSONL trace and check it bit for bit.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn parse_variant(name: &str) -> Result<AgentVariant, CliError> {
    AgentVariant::parse(name).ok_or_else(|| {
        let known: Vec<_> = AgentVariant::ALL.iter().map(|v| v.name()).collect();
        CliError::new(
            ExitStatus::Config,
            format!("unknown variant `{name}` (known: {})", known.join(", ")),
        )
    })
}

fn parse_flags(list: &str) -> Result<ObsFlags, CliError> {
    if list.trim().eq_ignore_ascii_case("none") || list.trim().is_empty() {
        return Ok(ObsFlags::NONE);
    }
    ObsFlags::parse_list(list).map_err(|e| CliError::new(ExitStatus::Config, e.to_string()))
}

/// Config file, then `--set` overrides, then the dedicated flags.
pub fn resolve_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        config.apply_override(o)?;
    }
    if !args.seeds.is_empty() {
        config.seeds = args.seeds.clone();
    }
    if let Some(e) = args.episodes {
        config.episodes = e;
    }
    if let Some(p) = args.parallel_envs {
        config.parallel_envs = p;
    }
    if let Some(w) = args.workers {
        config.workers = w;
    }
    if let Some(v) = &args.variant {
        config.agent.variant = parse_variant(v)?;
        config.variants.clear();
    }
    if let Some(f) = &args.obs_flags {
        config.env.obs_flags = parse_flags(f)?;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    } else if let Some(root) = std::env::var_os(OUT_ENV) {
        config.output_dir = PathBuf::from(root);
    }
    config.validate()?;
    Ok(config)
}

fn print_config(config: &impl serde::Serialize) {
    println!("resolved config:");
    println!("{}", serde_json::to_string_pretty(config).unwrap_or_default());
}

fn print_summary(s: &MetricsSummary) {
    println!(
        "episodes {} | success {:.4} (final {} : {:.4}) | key drops (final) {:.3} | optimum {}",
        s.episodes,
        s.overall_success_rate,
        s.final_window,
        s.final_success_rate,
        s.final_key_drop_rate,
        s.optimal_key_drops
    );
    for (i, r) in s.final_cumulative_reward.iter().enumerate() {
        println!("agent {i}: final cumulative reward {r:.4}");
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::new(ExitStatus::Io, format!("{}: {e}", path.display()))
}

fn train(args: &RunArgs) -> Result<(), CliError> {
    let config = resolve_config(args)?;
    print_config(&config);
    let outcome = trainer::run_training(&config)?;
    for s in &outcome.manifest.seeds {
        println!(
            "seed {}: {} episodes, final success {:.4}",
            s.seed, s.episodes_recorded, s.final_success_rate
        );
    }
    if let Some(summary) = &outcome.manifest.summary {
        print_summary(summary);
    }
    println!("wrote {}", config.output_dir.display());
    Ok(())
}

fn baseline(args: &RunArgs) -> Result<(), CliError> {
    let mut config = resolve_config(&RunArgs {
        episodes: args.episodes.or(Some(1250)),
        ..RunArgs {
            config: args.config.clone(),
            seeds: args.seeds.clone(),
            episodes: None,
            parallel_envs: args.parallel_envs,
            workers: args.workers,
            variant: None,
            obs_flags: args.obs_flags.clone(),
            out: args.out.clone(),
            overrides: args.overrides.clone(),
        }
    })?;
    config.agent.variant = AgentVariant::Random;
    config.variants.clear();
    print_config(&config);
    let seed = config.seeds[0];
    let (report, outcome) = trainer::run_random_baseline(&config.env, config.episodes, config.parallel_envs, seed)?;
    let ci = report.success_ci95;
    println!(
        "random baseline: {} episodes, success {:.5} (95% CI {:.5}..{:.5})",
        report.total_episodes, ci.estimate, ci.lower, ci.upper
    );
    println!(
        "Mann-Kendall: S = {}, z = {:.3}, p = {:.4} ({})",
        report.trend.s,
        report.trend.z,
        report.trend.p_value,
        if report.trend.trend_detected(0.01) {
            "trend at 0.01"
        } else {
            "no trend at 0.01"
        }
    );
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(io(out))?;
    let json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::new(ExitStatus::Io, e.to_string()))?;
    let path = out.join("baseline.json");
    crate::nn::checkpoint::write_atomic(&path, &json).map_err(io(&path))?;
    metrics::export::write_episodes_csv(&out.join("episodes.csv"), &outcome.records)
        .map_err(|e| CliError::new(ExitStatus::Io, e.to_string()))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn eval(
    checkpoint: &Path,
    episodes: usize,
    parallel_envs: usize,
    seed: u64,
    obs_flags: Option<&str>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let env_override = match obs_flags {
        Some(list) => {
            let text = fs::read_to_string(checkpoint.join("env.json")).map_err(io(checkpoint))?;
            let mut env: EnvConfig =
                serde_json::from_str(&text).map_err(|e| CliError::new(ExitStatus::Config, e.to_string()))?;
            env.obs_flags = parse_flags(list)?;
            Some(env)
        }
        None => None,
    };
    println!(
        "resolved config: checkpoint {}, episodes {episodes}, parallel_envs {parallel_envs}, seed {seed}",
        checkpoint.display()
    );
    let outcome = trainer::evaluate(checkpoint, episodes, parallel_envs, seed, env_override.as_ref())?;
    print_summary(&MetricsSummary::from_metrics(&outcome.metrics));
    if let Some(dir) = out {
        metrics::export(&outcome.metrics, dir, true).map_err(|e| CliError::new(ExitStatus::Io, e.to_string()))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn gradcheck(configurations: usize, seed: u64, steps: usize) -> Result<(), CliError> {
    let settings = GradcheckSettings {
        configurations,
        seed,
        full_steps: steps,
        ..GradcheckSettings::default()
    };
    print_config(&settings);
    let report = run_gradcheck(&settings);
    let worst = report.worst().map_or(0.0, |c| c.max_rel_error);
    println!(
        "{} configurations, worst relative error {worst:.3e} (tolerance {:.0e})",
        report.cases.len(),
        report.tolerance
    );
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::new(ExitStatus::CheckFailed, "gradient check failed"))
    }
}

fn theorem_check(inits: usize, seed: u64, max_gap: f64) -> Result<(), CliError> {
    let mut rng = seed::rng_from(seed);
    let mut specs = vec![ToySpec::default()];
    specs.extend((0..inits).map(|_| ToySpec::random(&mut rng, max_gap)));
    let mut worst: f64 = 0.0;
    let mut degenerate = 0;
    for spec in &specs {
        let r = verify_theorem1(spec);
        if r.degenerate {
            degenerate += 1;
            continue;
        }
        worst = worst.max(r.max_abs_diff);
    }
    let first = verify_theorem1(&specs[0]);
    println!("symmetric toy: left {:?} right {:?}", first.left, first.right);
    println!(
        "{} initialisations ({} degenerate, skipped): max |left - right| = {worst:.3e}",
        specs.len(),
        degenerate
    );
    if worst < THEOREM_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::new(
            ExitStatus::CheckFailed,
            format!("identity violated: {worst:.3e}"),
        ))
    }
}

fn report(run: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(run)
        .map_err(io(run))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("seed_")))
        .map(|p| p.join("episodes.csv"))
        .filter(|p| p.exists())
        .collect();
    if run.join("episodes.csv").exists() {
        files.push(run.join("episodes.csv"));
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::new(
            ExitStatus::Io,
            format!("no episodes.csv under {}", run.display()),
        ));
    }
    let mut records = Vec::new();
    for f in &files {
        records.extend(read_episodes_csv(f).map_err(|e| CliError::new(ExitStatus::Io, e.to_string()))?);
    }
    let m = metrics::summarize(&records).map_err(|e| CliError::new(ExitStatus::Io, e.to_string()))?;
    let dir = out.unwrap_or(run);
    let exported = metrics::export(&m, dir, true).map_err(|e| CliError::new(ExitStatus::Io, e.to_string()))?;
    print_summary(&MetricsSummary::from_metrics(&m));
    println!(
        "wrote {} and {} charts",
        exported.metrics_csv.display(),
        exported.charts.len()
    );
    Ok(())
}

fn replay(path: &Path) -> Result<(), CliError> {
    let file = fs::File::open(path).map_err(io(path))?;
    let trace = TraceRecorder::read_jsonl(BufReader::new(file))
        .map_err(|e| CliError::new(ExitStatus::Io, format!("{}: {e}", path.display())))?;
    let report = replay_trace(&trace).map_err(|e| CliError::new(ExitStatus::Config, e.to_string()))?;
    match report.mismatch {
        None => {
            println!("replayed {} steps bit-exactly", report.steps_checked);
            Ok(())
        }
        Some((step, why)) => Err(CliError::new(
            ExitStatus::CheckFailed,
            format!("mismatch at step {step}: {why}"),
        )),
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => train(&args),
        Command::BaselineRandom(args) => baseline(&args),
        Command::Eval {
            checkpoint,
            episodes,
            parallel_envs,
            seed,
            obs_flags,
            out,
        } => eval(
            &checkpoint,
            episodes,
            parallel_envs,
            seed,
            obs_flags.as_deref(),
            out.as_deref(),
        ),
        Command::Gradcheck {
            configurations,
            seed,
            steps,
        } => gradcheck(configurations, seed, steps),
        Command::TheoremCheck { inits, seed, max_gap } => theorem_check(inits, seed, max_gap),
        Command::Report { run, out } => report(&run, out.as_deref()),
        Command::Replay { trace } => replay(&trace),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitStatus::Ok as i32,
                _ => ExitStatus::Usage as i32,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitStatus::Ok as i32,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.status as i32
        }
    }
}
