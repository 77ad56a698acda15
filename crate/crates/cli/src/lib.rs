//! Command-line front end. [`run`] parses arguments, dispatches and returns
//! the process exit code.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use orchestrion::bandit::{FixedArm, LinUcbState};
use orchestrion::config::{ConfigError, ExperimentConfig};
use orchestrion::dataset::{is_balanced, label_counts, synthesize, DatasetSplit};
use orchestrion::experiment::{
    compare_runs, comparison_csv, evaluate, evaluation_csv, for_each_seed, parse_reports_json, parse_training_log,
    periodic_evaluation_csv, read_file, replay_checkpoints, reports_json, run_adaptive, run_static, static_curve_csv,
    summary_csv, training_log_csv, trajectories_csv, write_file, Environment, EvaluationReport, ExperimentError,
    RunManifest,
};
use orchestrion::graph::PipelineGraph;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "orchestrion", version, about = "Context-aware pipeline selection for simulated question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Experiment config file (TOML)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR", env = "ORCHESTRION_OUT", default_value = "orchestrion-out")]
    out: PathBuf,
    /// Single seed, replacing the configured seed list
    #[arg(long, value_name = "N", conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seed list
    #[arg(long, value_name = "N,M,...", value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Correctness weight of the reward
    #[arg(long, value_name = "F", conflicts_with = "time_aware", allow_negative_numbers = true)]
    beta: Option<f64>,
    /// LinUCB exploration width
    #[arg(long, value_name = "F", allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Training steps
    #[arg(long, value_name = "N")]
    timesteps: Option<usize>,
    /// false scores F1 only; true keeps the configured latency penalty
    #[arg(long, value_name = "true|false", action = ArgAction::Set)]
    time_aware: Option<bool>,
    /// Suppress the summary line
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Adaptive,
    Static,
}

impl PolicyKind {
    fn name(self) -> &'static str {
        match self {
            PolicyKind::Adaptive => "adaptive",
            PolicyKind::Static => "static",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List every valid pipeline
    Enumerate {
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic labelled dataset
    SynthData {
        #[arg(long, value_name = "N")]
        n_train: Option<usize>,
        #[arg(long, value_name = "N")]
        n_test: Option<usize>,
        /// Destination file (default: <out>/dataset.jsonl)
        #[arg(long, value_name = "PATH")]
        file: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Check a dataset file and report label counts
    ValidateData {
        #[arg(value_name = "PATH")]
        path: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate a policy
    Train {
        #[arg(long, value_enum, default_value = "adaptive")]
        policy: PolicyKind,
        #[command(flatten)]
        common: Common,
    },
    /// Re-evaluate a trained run on the configured test split
    Eval {
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare an adaptive run against a static one
    Compare {
        #[arg(long, value_name = "DIR")]
        adaptive: PathBuf,
        #[arg(long = "static", value_name = "DIR")]
        fixed: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rebuild expected-reward trajectories from a training log
    Export {
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
        #[arg(long, value_name = "N")]
        checkpoint_interval: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Config(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(format!("config error: {e}"))
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => c.into(),
            other => Failure::Runtime(format!("error: {other}")),
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("orchestrion: {}", f.message());
            f.code()
        }
    }
}

fn load_config(common: &Common, fallback: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match (&common.config, fallback) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(path)) if path.exists() => ExperimentConfig::load(path)?,
        _ => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.experiment.seeds = vec![seed];
    }
    if let Some(seeds) = &common.seeds {
        cfg.experiment.seeds = seeds.clone();
    }
    if let Some(beta) = common.beta {
        cfg.reward.beta = beta;
    }
    match common.time_aware {
        Some(false) => cfg.reward.beta = 1.0,
        Some(true) if cfg.reward.beta == 1.0 => cfg.reward.beta = orchestrion::RewardConfig::default().beta,
        _ => {}
    }
    if let Some(alpha) = common.alpha {
        cfg.bandit.alpha = alpha;
    }
    if let Some(t) = common.timesteps {
        cfg.experiment.timesteps = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn say(common: &Common, line: String) {
    if !common.quiet {
        println!("{line}");
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Enumerate { common } => enumerate(&common),
        Command::SynthData { n_train, n_test, file, common } => synth_data(&common, n_train, n_test, file),
        Command::ValidateData { path, common } => validate_data(&common, &path),
        Command::Train { policy, common } => train(&common, policy),
        Command::Eval { run, common } => eval(&common, &run),
        Command::Compare { adaptive, fixed, common } => compare(&common, &adaptive, &fixed),
        Command::Export { run, checkpoint_interval, common } => export(&common, &run, checkpoint_interval),
    }
}

fn enumerate(common: &Common) -> Result<(), Failure> {
    let cfg = load_config(common, None)?;
    let env = Environment::from_config(&cfg)?;
    let mut out = std::io::stdout().lock();
    for (i, id) in env.arm_ids().iter().enumerate() {
        // A closed pipe (`| head`) just ends the listing.
        if writeln!(out, "{i}\t{}\t{id}", env.arm_label(i)).is_err() {
            return Ok(());
        }
    }
    if !common.quiet {
        eprintln!("{} valid pipelines", env.arm_count());
    }
    Ok(())
}

fn synth_data(
    common: &Common,
    n_train: Option<usize>,
    n_test: Option<usize>,
    file: Option<PathBuf>,
) -> Result<(), Failure> {
    let cfg = load_config(common, None)?;
    let seed = common.seed.unwrap_or(cfg.dataset.seed);
    let split = synthesize(n_train.unwrap_or(cfg.dataset.n_train), n_test.unwrap_or(cfg.dataset.n_test), seed)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let path = file.unwrap_or_else(|| common.out.join("dataset.jsonl"));
    split.save(&path).map_err(|e| Failure::Runtime(e.to_string()))?;
    say(common, format!("wrote {} train / {} test queries to {}", split.train.len(), split.test.len(), path.display()));
    Ok(())
}

fn validate_data(common: &Common, path: &Path) -> Result<(), Failure> {
    let split = DatasetSplit::load(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let fmt = |c: [usize; 3]| format!("A={} B={} C={}", c[0], c[1], c[2]);
    say(
        common,
        format!(
            "{}: {} train ({}, {}) / {} test ({}, {})",
            path.display(),
            split.train.len(),
            fmt(label_counts(&split.train)),
            if is_balanced(&split.train) { "balanced" } else { "unbalanced" },
            split.test.len(),
            fmt(label_counts(&split.test)),
            if is_balanced(&split.test) { "balanced" } else { "unbalanced" },
        ),
    );
    Ok(())
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    Ok(write_file(path, contents)?)
}

fn overall_line(reports: &[EvaluationReport]) -> String {
    let n = reports.len() as f64;
    let f1 = reports.iter().map(|r| r.overall.mean_f1).sum::<f64>() / n;
    let reward = reports.iter().map(|r| r.overall.mean_reward).sum::<f64>() / n;
    format!("mean test F1 {f1:.4}, mean test reward {reward:.4}")
}

fn write_run_root(
    out: &Path,
    cfg: &ExperimentConfig,
    env: &Environment,
    policy: &str,
    split: &DatasetSplit,
    reports: &[EvaluationReport],
) -> Result<RunManifest, Failure> {
    let manifest = RunManifest {
        policy: policy.to_string(),
        seeds: reports.iter().map(|r| r.seed).collect(),
        per_seed_dirs: reports.len() > 1,
        timesteps: cfg.experiment.timesteps,
        beta: cfg.reward.beta,
        alpha: cfg.bandit.alpha,
        split_fingerprint: split.fingerprint(),
        arms: env.arm_ids().iter().map(|a| a.to_string()).collect(),
    };
    write(&out.join("config.toml"), &cfg.to_toml())?;
    write(&out.join("manifest.json"), &manifest.to_json())?;
    write(&out.join("reports.json"), &reports_json(reports))?;
    write(&out.join("summary.csv"), &summary_csv(reports)?)?;
    Ok(manifest)
}

fn train(common: &Common, policy: PolicyKind) -> Result<(), Failure> {
    let cfg = load_config(common, None)?;
    let env = Environment::from_config(&cfg)?;
    let split = cfg.load_dataset()?;
    let seeds = cfg.experiment.seeds.clone();
    let multi = seeds.len() > 1;
    let dir = |seed: u64| if multi { common.out.join(format!("seed-{seed}")) } else { common.out.clone() };
    let reports = match policy {
        PolicyKind::Adaptive => for_each_seed(&seeds, |seed| {
            let run = run_adaptive(&env, &split, &cfg.experiment, seed)?;
            let d = dir(seed);
            write_file(&d.join("training_log.csv"), &training_log_csv(&run.log)?)?;
            write_file(&d.join("trajectories.csv"), &trajectories_csv(&env, &run.log.checkpoints).unwrap_or_default())?;
            write_file(&d.join("bandit_state.txt"), &run.state.to_text())?;
            write_file(&d.join("periodic_eval.csv"), &periodic_evaluation_csv(&run.log)?)?;
            write_file(&d.join("evaluation.csv"), &evaluation_csv(&run.report)?)?;
            Ok(run.report)
        })?,
        PolicyKind::Static => for_each_seed(&seeds, |seed| {
            let run = run_static(&env, &split, cfg.baseline, &cfg.experiment, seed)?;
            let d = dir(seed);
            write_file(&d.join("static_graph.txt"), &run.graph.to_text())?;
            write_file(&d.join("static_curve.csv"), &static_curve_csv(run.model.tasks(), &run.curve)?)?;
            write_file(&d.join("evaluation.csv"), &evaluation_csv(&run.report)?)?;
            Ok(run.report)
        })?,
    };
    write_run_root(&common.out, &cfg, &env, policy.name(), &split, &reports)?;
    say(
        common,
        format!(
            "trained {} policy on {} seed(s): {} -> {}",
            policy.name(),
            seeds.len(),
            overall_line(&reports),
            common.out.display()
        ),
    );
    Ok(())
}

fn read_manifest(run: &Path) -> Result<RunManifest, Failure> {
    Ok(RunManifest::from_json(&read_file(&run.join("manifest.json"))?)?)
}

fn eval(common: &Common, run: &Path) -> Result<(), Failure> {
    let manifest = read_manifest(run)?;
    let mut cfg = load_config(common, Some(&run.join("config.toml")))?;
    if common.seed.is_none() && common.seeds.is_none() {
        cfg.experiment.seeds = manifest.seeds.clone();
    }
    let env = Environment::from_config(&cfg)?;
    let split = cfg.load_dataset()?;
    let reports = for_each_seed(&manifest.seeds, |seed| {
        let d = manifest.seed_dir(run, seed);
        let report = if manifest.policy == "static" {
            let graph = PipelineGraph::from_text(&read_file(&d.join("static_graph.txt"))?)?;
            let arm = env.arm_index(graph.arm_id().as_str())?;
            evaluate(&env, &FixedArm(arm), &split, cfg.experiment.eval_repeats, seed)?
        } else {
            let state = LinUcbState::from_text(&read_file(&d.join("bandit_state.txt"))?)?;
            if state.arms() != env.arm_ids().as_slice() {
                return Err(ExperimentError::UnknownArm(
                    "saved bandit arms differ from the configured registry".into(),
                ));
            }
            evaluate(&env, &state, &split, cfg.experiment.eval_repeats, seed)?
        };
        let target = if manifest.per_seed_dirs { common.out.join(format!("seed-{seed}")) } else { common.out.clone() };
        write_file(&target.join("evaluation.csv"), &evaluation_csv(&report)?)?;
        Ok(report)
    })?;
    write_run_root(&common.out, &cfg, &env, &manifest.policy, &split, &reports)?;
    say(common, format!("evaluated {} run on {} seed(s): {}", manifest.policy, reports.len(), overall_line(&reports)));
    Ok(())
}

fn compare(common: &Common, adaptive: &Path, fixed: &Path) -> Result<(), Failure> {
    let a = parse_reports_json(&read_file(&adaptive.join("reports.json"))?)?;
    let s = parse_reports_json(&read_file(&fixed.join("reports.json"))?)?;
    let comparisons = compare_runs(&a, &s)?;
    write(&common.out.join("comparison.csv"), &comparison_csv(&comparisons)?)?;
    let n = comparisons.len() as f64;
    let mean_gap = comparisons.iter().map(|c| c.overall.f1).sum::<f64>() / n;
    let ge = comparisons.iter().filter(|c| c.per_context.iter().all(|d| d.adaptive_ge_static)).count();
    say(
        common,
        format!(
            "adaptive - static overall F1 {mean_gap:+.4} over {} seed(s); adaptive >= static in every context on {ge} -> {}",
            comparisons.len(),
            common.out.join("comparison.csv").display()
        ),
    );
    Ok(())
}

fn export(common: &Common, run: &Path, interval: Option<usize>) -> Result<(), Failure> {
    let manifest = read_manifest(run)?;
    if manifest.policy != "adaptive" {
        return Err(Failure::Runtime(format!("{}: only adaptive runs have a training log", run.display())));
    }
    let cfg = load_config(common, Some(&run.join("config.toml")))?;
    let env = Environment::from_config(&cfg)?;
    let interval = interval.unwrap_or(cfg.experiment.checkpoint_interval);
    if interval == 0 {
        return Err(Failure::Usage("--checkpoint-interval must be >= 1".into()));
    }
    let mut blocks = 0;
    for seed in &manifest.seeds {
        let rows = parse_training_log(&read_file(&manifest.seed_dir(run, *seed).join("training_log.csv"))?, &env)?;
        let checkpoints = replay_checkpoints(&env, &rows, interval)?;
        blocks += checkpoints.len();
        let name =
            if manifest.per_seed_dirs { format!("trajectories-seed-{seed}.csv") } else { "trajectories.csv".into() };
        write(&common.out.join(name), &trajectories_csv(&env, &checkpoints)?)?;
    }
    say(
        common,
        format!(
            "exported {blocks} checkpoint blocks from {} seed(s) -> {}",
            manifest.seeds.len(),
            common.out.display()
        ),
    );
    Ok(())
}
