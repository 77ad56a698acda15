//! Simulated executors calibrated from per-task measurements.
//!
//! Each answer task succeeds with a per-context probability and takes a
//! jittered, per-context mean latency. A pipeline runs its answer tasks in
//! parallel, so its latency is the slowest task plus the aggregation stage.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ArmId, ExecutionPlan};
use crate::registry::ids;
use crate::rng::{derive_seed, label_hash, StreamRng};
use rand::SeedableRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("no executor profile for task `{task}` in context {context}")]
    MissingProfile { task: String, context: ContextLabel },
    #[error("cannot aggregate an empty list of answers")]
    EmptyInput,
    #[error("invalid profile for `{task}`/{context}: {reason}")]
    InvalidProfile { task: String, context: ContextLabel, reason: String },
}

/// Query complexity label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ContextLabel {
    A,
    B,
    C,
}

impl ContextLabel {
    pub const ALL: [ContextLabel; 3] = [ContextLabel::A, ContextLabel::B, ContextLabel::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContextLabel::A => "A",
            ContextLabel::B => "B",
            ContextLabel::C => "C",
        }
    }
}

impl fmt::Display for ContextLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContextLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(ContextLabel::A),
            "B" => Ok(ContextLabel::B),
            "C" => Ok(ContextLabel::C),
            other => Err(format!("unknown complexity label `{other}` (expected A, B or C)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: Option<String>,
    pub context: ContextLabel,
    pub gold_answers: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub success_prob: f64,
    pub latency_mean: f64,
    pub latency_jitter: f64,
}

/// One flat profile entry, as found in experiment config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileRecord {
    pub task: String,
    pub context: ContextLabel,
    pub success_prob: f64,
    pub latency_mean: f64,
    #[serde(default = "default_jitter")]
    pub latency_jitter: f64,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

pub const DEFAULT_JITTER: f64 = 0.05;

/// How the aggregator resolves a vote where several answers share the top
/// count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// No answer is produced.
    #[default]
    NoConsensus,
    /// The tied answer given by the earliest task wins.
    FirstInTaskOrder,
}

/// Behavior of every simulated executor.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutorProfile {
    entries: BTreeMap<(String, ContextLabel), TaskProfile>,
    pub aggregate_latency: f64,
    pub tie_rule: TieRule,
}

impl Default for ExecutorProfile {
    fn default() -> Self {
        Self { entries: BTreeMap::new(), aggregate_latency: 0.0, tie_rule: TieRule::default() }
    }
}

impl ExecutorProfile {
    pub fn insert(&mut self, task: &str, context: ContextLabel, profile: TaskProfile) -> Result<(), SimError> {
        let invalid =
            |reason: &str| SimError::InvalidProfile { task: task.to_string(), context, reason: reason.to_string() };
        if !(0.0..=1.0).contains(&profile.success_prob) {
            return Err(invalid("success_prob must lie in [0, 1]"));
        }
        if !(profile.latency_mean > 0.0 && profile.latency_mean.is_finite()) {
            return Err(invalid("latency_mean must be positive"));
        }
        if !(profile.latency_jitter >= 0.0 && profile.latency_jitter.is_finite()) {
            return Err(invalid("latency_jitter must be non-negative"));
        }
        self.entries.insert((task.to_string(), context), profile);
        Ok(())
    }

    pub fn from_records(records: &[ProfileRecord]) -> Result<Self, SimError> {
        let mut p = Self::default();
        for r in records {
            p.insert(
                &r.task,
                r.context,
                TaskProfile {
                    success_prob: r.success_prob,
                    latency_mean: r.latency_mean,
                    latency_jitter: r.latency_jitter,
                },
            )?;
        }
        Ok(p)
    }

    pub fn records(&self) -> Vec<ProfileRecord> {
        self.entries
            .iter()
            .map(|((task, context), p)| ProfileRecord {
                task: task.clone(),
                context: *context,
                success_prob: p.success_prob,
                latency_mean: p.latency_mean,
                latency_jitter: p.latency_jitter,
            })
            .collect()
    }

    pub fn get(&self, task: &str, context: ContextLabel) -> Result<&TaskProfile, SimError> {
        self.entries
            .get(&(task.to_string(), context))
            .ok_or_else(|| SimError::MissingProfile { task: task.to_string(), context })
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        for p in self.entries.values_mut() {
            p.latency_jitter = jitter;
        }
        self
    }

    pub fn with_tie_rule(mut self, rule: TieRule) -> Self {
        self.tie_rule = rule;
        self
    }
}

/// Per-task calibration measured on the training questions: mean F1 is the
/// success probability, mean wall time the latency.
pub fn default_profiles() -> ExecutorProfile {
    use ContextLabel::*;
    let table = [
        (ids::NOR, A, 0.914, 0.66),
        (ids::NOR, B, 0.061, 0.66),
        (ids::NOR, C, 0.066, 0.67),
        (ids::ONER, A, 0.677, 6.46),
        (ids::ONER, B, 0.518, 7.34),
        (ids::ONER, C, 0.146, 6.41),
        (ids::IRCOT, A, 0.730, 189.78),
        (ids::IRCOT, B, 0.580, 192.30),
        (ids::IRCOT, C, 0.458, 184.85),
    ];
    let mut p = ExecutorProfile::default();
    for (task, ctx, success_prob, latency_mean) in table {
        p.insert(task, ctx, TaskProfile { success_prob, latency_mean, latency_jitter: DEFAULT_JITTER })
            .expect("built-in profiles are valid");
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub task: String,
    pub answer: String,
    pub correct: bool,
    pub latency: f64,
}

/// Floor on the latency multiplier so a sampled latency stays positive.
const MIN_LATENCY_FACTOR: f64 = 1e-6;

pub fn simulate_task<R: Rng + ?Sized>(
    task: &str,
    query: &Query,
    profiles: &ExecutorProfile,
    rng: &mut R,
) -> Result<TaskOutcome, SimError> {
    let p = profiles.get(task, query.context)?;
    let correct = rng.random::<f64>() < p.success_prob;
    let nonce: u64 = rng.random();
    let noise: f64 = rng.sample(StandardNormal);
    let factor = (1.0 + p.latency_jitter * noise).max(MIN_LATENCY_FACTOR);
    let answer = if correct {
        query.gold_answers.first().cloned().unwrap_or_default()
    } else {
        format!("{}-{nonce:016x}", task.to_lowercase())
    };
    Ok(TaskOutcome { task: task.to_string(), answer, correct, latency: p.latency_mean * factor })
}

/// Plurality vote; ties go to the answer of the earliest task.
pub fn aggregate_majority(answers: &[String]) -> Result<String, SimError> {
    aggregate(answers, TieRule::FirstInTaskOrder)
}

/// Plurality vote over answers listed in task order.
pub fn aggregate(answers: &[String], rule: TieRule) -> Result<String, SimError> {
    if answers.is_empty() {
        return Err(SimError::EmptyInput);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for a in answers {
        *counts.entry(a.as_str()).or_default() += 1;
    }
    let top = *counts.values().max().unwrap();
    let leaders = counts.values().filter(|c| **c == top).count();
    if leaders > 1 && rule == TieRule::NoConsensus {
        return Ok(String::new());
    }
    let winner = answers.iter().find(|a| counts[a.as_str()] == top).unwrap();
    Ok(winner.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub arm: ArmId,
    pub per_task: Vec<TaskOutcome>,
    pub final_answer: String,
    pub total_latency: f64,
}

impl ExecutionTrace {
    pub fn is_correct(&self, query: &Query) -> bool {
        query.gold_answers.contains(&self.final_answer)
    }
}

/// Runs a plan on one query.
///
/// One value is drawn from `rng`; each task then gets its own stream derived
/// from that value and the task id, so a task's outcome for a given stream
/// does not depend on which other tasks share the pipeline.
pub fn execute_pipeline<R: RngCore + ?Sized>(
    plan: &ExecutionPlan,
    query: &Query,
    profiles: &ExecutorProfile,
    rng: &mut R,
) -> Result<ExecutionTrace, SimError> {
    let base = rng.next_u64();
    let mut per_task = Vec::with_capacity(plan.parallel.len());
    for t in &plan.parallel {
        let mut task_rng = StreamRng::seed_from_u64(derive_seed(base, &[label_hash(&t.task)]));
        per_task.push(simulate_task(&t.task, query, profiles, &mut task_rng)?);
    }
    let slowest = per_task.iter().map(|o| o.latency).fold(0.0, f64::max);
    let (final_answer, total_latency) = match &plan.aggregate {
        Some(_) => {
            let answers: Vec<String> = per_task.iter().map(|o| o.answer.clone()).collect();
            (aggregate(&answers, profiles.tie_rule)?, slowest + profiles.aggregate_latency)
        }
        None => (per_task[0].answer.clone(), slowest),
    };
    Ok(ExecutionTrace { arm: plan.arm.clone(), per_task, final_answer, total_latency })
}

/// Probability that a pipeline over independent tasks with the given success
/// probabilities (in task order) returns the gold answer.
///
/// Wrong answers never coincide, so the gold answer wins outright with two or
/// more correct tasks; with exactly one, every answer is tied.
pub fn pipeline_success_probability(success: &[f64], aggregated: bool, rule: TieRule) -> f64 {
    let n = success.len();
    if n == 0 {
        return 0.0;
    }
    if !aggregated {
        return success[0];
    }
    let mut total = 0.0;
    for pattern in 0u32..(1 << n) {
        let prob: f64 = (0..n).map(|i| if pattern >> i & 1 == 1 { success[i] } else { 1.0 - success[i] }).product();
        let k = pattern.count_ones();
        let wins = k >= 2 || (k == 1 && (n == 1 || (rule == TieRule::FirstInTaskOrder && pattern & 1 == 1)));
        if wins {
            total += prob;
        }
    }
    total
}
