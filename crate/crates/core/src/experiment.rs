//! Training and evaluation loops, reports and their CSV forms.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{oracle_policy, BanditConfig, BanditError, LinUcbState, OracleTable, Policy, QueryContext};
use crate::baseline::{
    finalize, train_static, BaselineConfig, BaselineError, ConfigurationSpace, CurvePoint, EdgeProbabilityModel,
};
use crate::config::{ConfigError, ExperimentConfig, RunConfig};
use crate::dataset::{DatasetError, DatasetSplit};
use crate::graph::{enumerate_valid, terminal_plan, ArmId, ExecutionPlan, GraphError, PipelineGraph};
use crate::registry::ModuleRegistry;
use crate::reward::{reward, token_f1, RewardConfig, RewardError};
use crate::rng::stream;
use crate::simulation::{execute_pipeline, ContextLabel, ExecutorProfile, Query, SimError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("registry admits no valid pipeline")]
    NoArms,
    #[error("training split is empty")]
    EmptyTrainSplit,
    #[error("test split is empty")]
    EmptyTestSplit,
    #[error("training log is empty")]
    EmptyLog,
    #[error("reports were computed on different data: {0}")]
    SplitMismatch(String),
    #[error("unknown arm `{0}`")]
    UnknownArm(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed run output: {0}")]
    Csv(String),
}

impl From<csv::Error> for ExperimentError {
    fn from(e: csv::Error) -> Self {
        ExperimentError::Csv(e.to_string())
    }
}

const QUERY_STREAM: u64 = 1;
const EXEC_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;
const UNIFORM_STREAM: u64 = 4;

/// Everything a run needs besides data: the arm set and how arms behave and
/// are scored.
#[derive(Debug, Clone)]
pub struct Environment {
    pub registry: ModuleRegistry,
    pub graphs: Vec<PipelineGraph>,
    pub plans: Vec<ExecutionPlan>,
    pub profiles: ExecutorProfile,
    pub reward: RewardConfig,
    pub bandit: BanditConfig,
}

impl Environment {
    pub fn new(
        registry: ModuleRegistry,
        profiles: ExecutorProfile,
        reward: RewardConfig,
        bandit: BanditConfig,
    ) -> Result<Self, ExperimentError> {
        reward.validate()?;
        let graphs = enumerate_valid(&registry)?;
        if graphs.is_empty() {
            return Err(ExperimentError::NoArms);
        }
        let plans = graphs.iter().map(|g| terminal_plan(g, &registry)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { registry, graphs, plans, profiles, reward, bandit })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        Self::new(cfg.build_registry()?, cfg.build_profiles()?, cfg.reward, cfg.bandit)
    }

    pub fn with_reward(&self, reward: RewardConfig) -> Self {
        Self { reward, ..self.clone() }
    }

    pub fn arm_count(&self) -> usize {
        self.graphs.len()
    }

    pub fn arm_ids(&self) -> Vec<ArmId> {
        self.graphs.iter().map(PipelineGraph::arm_id).collect()
    }

    pub fn arm_label(&self, arm: usize) -> String {
        self.graphs[arm].label(&self.registry)
    }

    pub fn arm_index(&self, id: &str) -> Result<usize, ExperimentError> {
        self.graphs
            .iter()
            .position(|g| g.arm_id().as_str() == id)
            .ok_or_else(|| ExperimentError::UnknownArm(id.to_string()))
    }

    pub fn context(&self, q: &Query) -> QueryContext {
        QueryContext::one_hot(q.context, &q.id, self.bandit.bias)
    }

    pub fn fresh_bandit(&self) -> Result<LinUcbState, ExperimentError> {
        Ok(LinUcbState::init(self.arm_ids(), crate::bandit::context_dimension(self.bandit.bias), self.bandit.alpha)?)
    }

    pub fn oracle(&self) -> Result<OracleTable, ExperimentError> {
        Ok(oracle_policy(&self.profiles, &self.reward, &self.plans)?)
    }

    /// Runs `arm` on `q` and scores it.
    pub fn play<R: Rng + ?Sized>(&self, arm: usize, q: &Query, rng: &mut R) -> Result<Outcome, ExperimentError> {
        let trace = execute_pipeline(&self.plans[arm], q, &self.profiles, rng)?;
        let f1 = token_f1(&trace.final_answer, &q.gold_answers);
        let signal = reward(f1, trace.total_latency, &self.reward)?;
        Ok(Outcome { f1, seconds: signal.seconds, time_cost: signal.time_cost, reward: signal.reward })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub f1: f64,
    pub seconds: f64,
    pub time_cost: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: usize,
    pub query_id: String,
    pub context: ContextLabel,
    pub arm_id: String,
    pub f1: f64,
    pub seconds: f64,
    pub time_cost: f64,
    pub reward: f64,
    #[serde(skip)]
    pub arm: usize,
}

/// Reward estimates of every arm in every context after step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: usize,
    /// `expected[arm][context]`.
    pub expected: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub seed: u64,
    pub rows: Vec<LogRow>,
    pub checkpoints: Vec<Checkpoint>,
    pub evaluations: Vec<(usize, EvaluationReport)>,
}

impl TrainingLog {
    pub fn cumulative_reward(&self) -> f64 {
        self.rows.iter().map(|r| r.reward).sum()
    }

    /// Most frequent arm per context over the last `window` steps; ties go to
    /// the lower arm index.
    pub fn modal_arms(&self, window: usize, arms: usize) -> [Option<usize>; 3] {
        let start = self.rows.len().saturating_sub(window);
        let mut counts = vec![[0usize; 3]; arms];
        for r in &self.rows[start..] {
            counts[r.arm][r.context.index()] += 1;
        }
        let mut out = [None; 3];
        for ctx in ContextLabel::ALL {
            let c = ctx.index();
            let mut best: Option<(usize, usize)> = None;
            for (arm, row) in counts.iter().enumerate() {
                if row[c] > 0 && best.is_none_or(|(_, n)| row[c] > n) {
                    best = Some((arm, row[c]));
                }
            }
            out[c] = best.map(|b| b.0);
        }
        out
    }
}

fn checkpoint<P: Policy + ?Sized>(
    env: &Environment,
    policy: &P,
    t: usize,
) -> Result<Option<Checkpoint>, ExperimentError> {
    let mut expected = vec![[0.0; 3]; env.arm_count()];
    for ctx in ContextLabel::ALL {
        let q = QueryContext::one_hot(ctx, "", env.bandit.bias);
        let Some(values) = policy.expected_rewards(&q)? else {
            return Ok(None);
        };
        for (arm, v) in values.into_iter().enumerate() {
            expected[arm][ctx.index()] = v;
        }
    }
    Ok(Some(Checkpoint { t, expected }))
}

/// Online loop: each step samples a training query uniformly with
/// replacement, lets `policy` pick an arm, plays it and feeds back the
/// reward.
///
/// The query sequence and every task outcome depend only on `seed`, so two
/// policies trained with the same seed face the same questions and, when
/// they pick the same task, the same task result.
pub fn train_policy<P: Policy + ?Sized>(
    env: &Environment,
    policy: &mut P,
    split: &DatasetSplit,
    run: &RunConfig,
    seed: u64,
) -> Result<TrainingLog, ExperimentError> {
    if split.train.is_empty() {
        return Err(ExperimentError::EmptyTrainSplit);
    }
    let ids = env.arm_ids();
    let mut queries = stream(seed, &[QUERY_STREAM]);
    let mut log =
        TrainingLog { seed, rows: Vec::with_capacity(run.timesteps), checkpoints: Vec::new(), evaluations: Vec::new() };
    for t in 1..=run.timesteps {
        let q = &split.train[queries.random_range(0..split.train.len())];
        let ctx = env.context(q);
        let arm = policy.select(&ctx)?;
        if arm >= env.arm_count() {
            return Err(BanditError::ArmOutOfRange { index: arm, arms: env.arm_count() }.into());
        }
        let out = env.play(arm, q, &mut stream(seed, &[EXEC_STREAM, t as u64]))?;
        policy.update(arm, &ctx, out.reward)?;
        log.rows.push(LogRow {
            t,
            query_id: q.id.clone(),
            context: q.context,
            arm_id: ids[arm].to_string(),
            f1: out.f1,
            seconds: out.seconds,
            time_cost: out.time_cost,
            reward: out.reward,
            arm,
        });
        if t % run.checkpoint_interval == 0 {
            if let Some(c) = checkpoint(env, &*policy, t)? {
                log.checkpoints.push(c);
            }
        }
        if run.eval_interval > 0 && t % run.eval_interval == 0 && !split.test.is_empty() {
            log.evaluations.push((t, evaluate(env, &*policy, split, run.eval_repeats, seed)?));
        }
    }
    Ok(log)
}

pub fn train_bandit(
    env: &Environment,
    split: &DatasetSplit,
    run: &RunConfig,
    seed: u64,
) -> Result<(LinUcbState, TrainingLog), ExperimentError> {
    let mut state = env.fresh_bandit()?;
    let log = train_policy(env, &mut state, split, run, seed)?;
    Ok((state, log))
}

/// Uniform-random arm choice on the same query and outcome streams as
/// [`train_bandit`].
pub fn train_uniform(
    env: &Environment,
    split: &DatasetSplit,
    run: &RunConfig,
    seed: u64,
) -> Result<TrainingLog, ExperimentError> {
    let mut policy = crate::bandit::UniformRandom::new(env.arm_count(), stream(seed, &[UNIFORM_STREAM]))?;
    train_policy(env, &mut policy, split, run, seed)
}

/// Rebuilds the bandit's checkpoints by replaying logged updates.
pub fn replay_checkpoints(
    env: &Environment,
    rows: &[LogRow],
    interval: usize,
) -> Result<Vec<Checkpoint>, ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::EmptyLog);
    }
    let mut state = env.fresh_bandit()?;
    let mut out = Vec::new();
    for r in rows {
        let arm = env.arm_index(&r.arm_id)?;
        state.update(arm, &QueryContext::one_hot(r.context, &r.query_id, env.bandit.bias).x, r.reward)?;
        if interval > 0 && r.t % interval == 0 {
            out.extend(checkpoint(env, &state, r.t)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub queries: usize,
    pub mean_f1: f64,
    pub mean_seconds: f64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmUsage {
    pub arm_id: String,
    pub label: String,
    /// Selections per context.
    pub selections: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub seed: u64,
    pub repeats: usize,
    pub split_fingerprint: String,
    pub per_context: [Metrics; 3],
    pub overall: Metrics,
    pub arms: Vec<ArmUsage>,
}

impl EvaluationReport {
    pub fn context(&self, ctx: ContextLabel) -> &Metrics {
        &self.per_context[ctx.index()]
    }

    pub fn selection_rate(&self, arm: usize, ctx: Option<ContextLabel>) -> f64 {
        let (chosen, total) = match ctx {
            Some(c) => (self.arms[arm].selections[c.index()], self.context(c).queries),
            None => (self.arms[arm].selections.iter().sum(), self.overall.queries),
        };
        if total == 0 {
            0.0
        } else {
            chosen as f64 / total as f64
        }
    }
}

fn finish(sum: [f64; 3], n: usize) -> Metrics {
    let d = n.max(1) as f64;
    Metrics { queries: n, mean_f1: sum[0] / d, mean_seconds: sum[1] / d, mean_reward: sum[2] / d }
}

/// Greedy evaluation over the test split, `repeats` passes.
///
/// Task outcomes are keyed by (seed, pass, query), so policies evaluated
/// with the same seed see the same task results.
pub fn evaluate<P: Policy + ?Sized>(
    env: &Environment,
    policy: &P,
    split: &DatasetSplit,
    repeats: usize,
    seed: u64,
) -> Result<EvaluationReport, ExperimentError> {
    if split.test.is_empty() {
        return Err(ExperimentError::EmptyTestSplit);
    }
    let ids = env.arm_ids();
    let mut arms: Vec<ArmUsage> = (0..env.arm_count())
        .map(|a| ArmUsage { arm_id: ids[a].to_string(), label: env.arm_label(a), selections: [0; 3] })
        .collect();
    let mut sums = [[0.0; 3]; 3];
    let mut counts = [0usize; 3];
    for pass in 0..repeats.max(1) {
        for (i, q) in split.test.iter().enumerate() {
            let arm = policy.greedy(&env.context(q))?;
            if arm >= env.arm_count() {
                return Err(BanditError::ArmOutOfRange { index: arm, arms: env.arm_count() }.into());
            }
            let out = env.play(arm, q, &mut stream(seed, &[EVAL_STREAM, pass as u64, i as u64]))?;
            let c = q.context.index();
            arms[arm].selections[c] += 1;
            counts[c] += 1;
            sums[c][0] += out.f1;
            sums[c][1] += out.seconds;
            sums[c][2] += out.reward;
        }
    }
    let per_context = [0, 1, 2].map(|c| finish(sums[c], counts[c]));
    let total = (0..3).fold([0.0; 3], |acc, c| [acc[0] + sums[c][0], acc[1] + sums[c][1], acc[2] + sums[c][2]]);
    Ok(EvaluationReport {
        seed,
        repeats: repeats.max(1),
        split_fingerprint: split.fingerprint(),
        per_context,
        overall: finish(total, counts.iter().sum()),
        arms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub context: String,
    pub f1: f64,
    pub seconds: f64,
    pub reward: f64,
    pub adaptive_ge_static: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub per_context: Vec<MetricDelta>,
    pub overall: MetricDelta,
}

fn delta(context: &str, a: &Metrics, s: &Metrics) -> MetricDelta {
    MetricDelta {
        context: context.to_string(),
        f1: a.mean_f1 - s.mean_f1,
        seconds: a.mean_seconds - s.mean_seconds,
        reward: a.mean_reward - s.mean_reward,
        adaptive_ge_static: a.mean_f1 >= s.mean_f1,
    }
}

/// Adaptive minus static, per context and overall.
pub fn compare(adaptive: &EvaluationReport, fixed: &EvaluationReport) -> Result<ComparisonReport, ExperimentError> {
    if adaptive.split_fingerprint != fixed.split_fingerprint {
        return Err(ExperimentError::SplitMismatch(format!(
            "split fingerprints differ ({} vs {})",
            &adaptive.split_fingerprint[..12.min(adaptive.split_fingerprint.len())],
            &fixed.split_fingerprint[..12.min(fixed.split_fingerprint.len())]
        )));
    }
    if adaptive.seed != fixed.seed || adaptive.repeats != fixed.repeats {
        return Err(ExperimentError::SplitMismatch(format!(
            "seed/repeats differ ({}/{} vs {}/{})",
            adaptive.seed, adaptive.repeats, fixed.seed, fixed.repeats
        )));
    }
    Ok(ComparisonReport {
        seed: adaptive.seed,
        per_context: ContextLabel::ALL
            .iter()
            .map(|c| delta(c.as_str(), adaptive.context(*c), fixed.context(*c)))
            .collect(),
        overall: delta("overall", &adaptive.overall, &fixed.overall),
    })
}

/// Pairs reports by seed; both sides must cover the same seeds.
pub fn compare_runs(
    adaptive: &[EvaluationReport],
    fixed: &[EvaluationReport],
) -> Result<Vec<ComparisonReport>, ExperimentError> {
    let seeds = |r: &[EvaluationReport]| r.iter().map(|x| x.seed).collect::<Vec<_>>();
    if seeds(adaptive) != seeds(fixed) {
        return Err(ExperimentError::SplitMismatch(format!(
            "seed sets differ ({:?} vs {:?})",
            seeds(adaptive),
            seeds(fixed)
        )));
    }
    adaptive.iter().zip(fixed).map(|(a, s)| compare(a, s)).collect()
}

#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    pub seed: u64,
    pub state: LinUcbState,
    pub log: TrainingLog,
    pub report: EvaluationReport,
}

pub fn run_adaptive(
    env: &Environment,
    split: &DatasetSplit,
    run: &RunConfig,
    seed: u64,
) -> Result<AdaptiveRun, ExperimentError> {
    let (state, log) = train_bandit(env, split, run, seed)?;
    let report = evaluate(env, &state, split, run.eval_repeats, seed)?;
    Ok(AdaptiveRun { seed, state, log, report })
}

#[derive(Debug, Clone)]
pub struct StaticRun {
    pub seed: u64,
    pub model: EdgeProbabilityModel,
    pub curve: Vec<CurvePoint>,
    pub graph: PipelineGraph,
    pub arm: usize,
    pub report: EvaluationReport,
}

pub fn run_static(
    env: &Environment,
    split: &DatasetSplit,
    baseline: BaselineConfig,
    run: &RunConfig,
    seed: u64,
) -> Result<StaticRun, ExperimentError> {
    let space = ConfigurationSpace::new(&env.registry)?;
    let trained = train_static(&space, &split.train, &env.profiles, baseline, seed)?;
    let graph = finalize(&trained.model, &space)?.clone();
    let arm = env.arm_index(graph.arm_id().as_str())?;
    let report = evaluate(env, &crate::bandit::FixedArm(arm), split, run.eval_repeats, seed)?;
    Ok(StaticRun { seed, model: trained.model, curve: trained.curve, graph, arm, report })
}

/// Runs `f` once per seed on scoped threads; results come back in seed
/// order.
pub fn for_each_seed<T, F>(seeds: &[u64], f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(u64) -> Result<T, ExperimentError> + Sync,
{
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = sorted.iter().map(|seed| s.spawn(move || f(*seed))).collect();
        handles.into_iter().map(|h| h.join().expect("seed worker panicked")).collect()
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn csv_string(
    write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w)?;
    let bytes = w.into_inner().map_err(|e| ExperimentError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn training_log_csv(log: &TrainingLog) -> Result<String, ExperimentError> {
    csv_string(|w| {
        w.write_record(["t", "query_id", "context", "arm_id", "f1", "seconds", "time_cost", "reward"])?;
        for r in &log.rows {
            w.serialize((r.t, &r.query_id, r.context.as_str(), &r.arm_id, r.f1, r.seconds, r.time_cost, r.reward))?;
        }
        Ok(())
    })
}

pub fn parse_training_log(text: &str, env: &Environment) -> Result<Vec<LogRow>, ExperimentError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let mut row: LogRow = rec?;
        row.arm = env.arm_index(&row.arm_id)?;
        rows.push(row);
    }
    Ok(rows)
}

/// Checkpointed estimates next to the oracle's expected reward for the same
/// arm and context.
pub fn trajectories_csv(env: &Environment, checkpoints: &[Checkpoint]) -> Result<String, ExperimentError> {
    if checkpoints.is_empty() {
        return Err(ExperimentError::EmptyLog);
    }
    let oracle = env.oracle()?;
    let ids = env.arm_ids();
    csv_string(|w| {
        w.write_record(["checkpoint_t", "context", "arm_id", "expected_reward", "oracle_reward"])?;
        for c in checkpoints {
            for ctx in ContextLabel::ALL {
                for (arm, id) in ids.iter().enumerate() {
                    w.serialize((
                        c.t,
                        ctx.as_str(),
                        id.as_str(),
                        c.expected[arm][ctx.index()],
                        oracle.expected[arm][ctx.index()],
                    ))?;
                }
            }
        }
        Ok(())
    })
}

pub fn export_trajectories(env: &Environment, log: &TrainingLog, path: &Path) -> Result<(), ExperimentError> {
    if log.rows.is_empty() {
        return Err(ExperimentError::EmptyLog);
    }
    write_file(path, &trajectories_csv(env, &log.checkpoints)?)
}

pub fn evaluation_csv(report: &EvaluationReport) -> Result<String, ExperimentError> {
    csv_string(|w| {
        w.write_record(["context", "mean_f1", "mean_seconds", "mean_reward", "arm_id", "selection_rate"])?;
        let rows = ContextLabel::ALL
            .iter()
            .map(|c| (c.as_str(), report.context(*c), Some(*c)))
            .chain(std::iter::once(("overall", &report.overall, None)));
        for (name, m, ctx) in rows {
            for (arm, usage) in report.arms.iter().enumerate() {
                w.serialize((
                    name,
                    m.mean_f1,
                    m.mean_seconds,
                    m.mean_reward,
                    &usage.arm_id,
                    report.selection_rate(arm, ctx),
                ))?;
            }
        }
        Ok(())
    })
}

pub fn periodic_evaluation_csv(log: &TrainingLog) -> Result<String, ExperimentError> {
    csv_string(|w| {
        w.write_record(["t", "context", "mean_f1", "mean_seconds", "mean_reward"])?;
        for (t, report) in &log.evaluations {
            for ctx in ContextLabel::ALL {
                let m = report.context(ctx);
                w.serialize((t, ctx.as_str(), m.mean_f1, m.mean_seconds, m.mean_reward))?;
            }
            let m = &report.overall;
            w.serialize((t, "overall", m.mean_f1, m.mean_seconds, m.mean_reward))?;
        }
        Ok(())
    })
}

pub fn static_curve_csv(tasks: &[String], curve: &[CurvePoint]) -> Result<String, ExperimentError> {
    csv_string(|w| {
        let mut header = vec!["epoch".to_string(), "mean_f1".to_string()];
        header.extend(tasks.iter().map(|t| format!("p_{t}")));
        w.write_record(&header)?;
        for p in curve {
            let mut rec = vec![p.epoch.to_string(), p.mean_f1.to_string()];
            rec.extend(p.probabilities.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

pub fn comparison_csv(reports: &[ComparisonReport]) -> Result<String, ExperimentError> {
    csv_string(|w| {
        w.write_record(["seed", "context", "delta_f1", "delta_seconds", "delta_reward", "adaptive_ge_static"])?;
        for r in reports {
            for d in r.per_context.iter().chain(std::iter::once(&r.overall)) {
                w.serialize((r.seed, &d.context, d.f1, d.seconds, d.reward, d.adaptive_ge_static))?;
            }
        }
        Ok(())
    })
}

/// Per-context mean and standard deviation of mean F1 and mean reward across
/// seeds.
pub fn summary_csv(reports: &[EvaluationReport]) -> Result<String, ExperimentError> {
    csv_string(|w| {
        w.write_record(["context", "seeds", "mean_f1", "std_f1", "mean_reward", "std_reward"])?;
        let pick = |f: &dyn Fn(&EvaluationReport) -> &Metrics| {
            let f1: Vec<f64> = reports.iter().map(|r| f(r).mean_f1).collect();
            let rw: Vec<f64> = reports.iter().map(|r| f(r).mean_reward).collect();
            (mean_std(&f1), mean_std(&rw))
        };
        for ctx in ContextLabel::ALL {
            let ((mf, sf), (mr, sr)) = pick(&|r: &EvaluationReport| r.context(ctx));
            w.serialize((ctx.as_str(), reports.len(), mf, sf, mr, sr))?;
        }
        let ((mf, sf), (mr, sr)) = pick(&|r: &EvaluationReport| &r.overall);
        w.serialize(("overall", reports.len(), mf, sf, mr, sr))?;
        Ok(())
    })
}

/// What a run directory holds, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// `adaptive` or `static`.
    pub policy: String,
    pub seeds: Vec<u64>,
    /// Outputs of each seed live in `seed-<n>/` when true, else at the top.
    pub per_seed_dirs: bool,
    pub timesteps: usize,
    pub beta: f64,
    pub alpha: f64,
    pub split_fingerprint: String,
    pub arms: Vec<String>,
}

impl RunManifest {
    pub fn seed_dir(&self, root: &Path, seed: u64) -> std::path::PathBuf {
        if self.per_seed_dirs {
            root.join(format!("seed-{seed}"))
        } else {
            root.to_path_buf()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest always serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Csv(format!("manifest: {e}")))
    }
}

pub fn reports_json(reports: &[EvaluationReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports always serialize") + "\n"
}

pub fn parse_reports_json(text: &str) -> Result<Vec<EvaluationReport>, ExperimentError> {
    serde_json::from_str(text).map_err(|e| ExperimentError::Csv(format!("reports: {e}")))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    crate::persist::write_atomic(path, contents.as_bytes())
        .map_err(|e| ExperimentError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn read_file(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path)
        .map_err(|e| ExperimentError::Io { path: path.display().to_string(), message: e.to_string() })
}
