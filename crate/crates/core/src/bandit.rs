//! Contextual policies over the enumerated pipelines.
//!
//! [`LinUcbState`] is the disjoint LinUCB learner: one ridge regression per
//! arm, scored by `θᵀx + α·sqrt(xᵀA⁻¹x)` with `θ = A⁻¹b`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ArmId, ExecutionPlan};
use crate::reward::{time_cost, RewardConfig, RewardError};
use crate::rng::StreamRng;
use crate::simulation::{pipeline_success_probability, ContextLabel, ExecutorProfile, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    #[error("a policy needs at least one arm")]
    EmptyArmSet,
    #[error("context has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("exploration width must be finite and >= 0, got {0}")]
    InvalidAlpha(f64),
    #[error("dimension must be >= 1")]
    InvalidDimension,
    #[error("arm index {index} out of range for {arms} arms")]
    ArmOutOfRange { index: usize, arms: usize },
    #[error("design matrix of arm {0} is not positive definite")]
    NotPositiveDefinite(usize),
    #[error("reward must be finite, got {0}")]
    NonFiniteReward(f64),
    #[error("state snapshot line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Feature vector of one query: a one-hot complexity encoding, optionally
/// followed by a constant bias coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryContext {
    pub x: Vec<f64>,
    pub label: ContextLabel,
    pub query_id: String,
}

impl QueryContext {
    pub fn one_hot(label: ContextLabel, query_id: &str, bias: bool) -> Self {
        let mut x = vec![0.0; context_dimension(bias)];
        x[label.index()] = 1.0;
        if bias {
            x[ContextLabel::ALL.len()] = 1.0;
        }
        Self { x, label, query_id: query_id.to_string() }
    }
}

pub fn context_dimension(bias: bool) -> usize {
    ContextLabel::ALL.len() + usize::from(bias)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditConfig {
    pub alpha: f64,
    pub bias: bool,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self { alpha: 1.0, bias: false }
    }
}

/// Something that picks an arm per context and may learn from rewards.
pub trait Policy {
    /// Arm to play during training.
    fn select(&mut self, ctx: &QueryContext) -> Result<usize, BanditError>;

    fn update(&mut self, _arm: usize, _ctx: &QueryContext, _reward: f64) -> Result<(), BanditError> {
        Ok(())
    }

    /// Arm to play at evaluation time: no exploration, no learning.
    fn greedy(&self, ctx: &QueryContext) -> Result<usize, BanditError>;

    /// Current reward estimate of every arm, for policies that keep one.
    fn expected_rewards(&self, _ctx: &QueryContext) -> Result<Option<Vec<f64>>, BanditError> {
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinUcbState {
    arms: Vec<ArmId>,
    dim: usize,
    alpha: f64,
    design: Vec<DMatrix<f64>>,
    response: Vec<DVector<f64>>,
}

impl LinUcbState {
    pub fn init(arms: Vec<ArmId>, dim: usize, alpha: f64) -> Result<Self, BanditError> {
        if arms.is_empty() {
            return Err(BanditError::EmptyArmSet);
        }
        if dim == 0 {
            return Err(BanditError::InvalidDimension);
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(BanditError::InvalidAlpha(alpha));
        }
        let n = arms.len();
        Ok(Self {
            arms,
            dim,
            alpha,
            design: vec![DMatrix::identity(dim, dim); n],
            response: vec![DVector::zeros(dim); n],
        })
    }

    pub fn arms(&self) -> &[ArmId] {
        &self.arms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn design_matrix(&self, arm: usize) -> &DMatrix<f64> {
        &self.design[arm]
    }

    pub fn response_vector(&self, arm: usize) -> &DVector<f64> {
        &self.response[arm]
    }

    fn check(&self, arm: Option<usize>, x: &[f64]) -> Result<(), BanditError> {
        if x.len() != self.dim {
            return Err(BanditError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if let Some(index) = arm {
            if index >= self.arms.len() {
                return Err(BanditError::ArmOutOfRange { index, arms: self.arms.len() });
            }
        }
        Ok(())
    }

    /// `(A⁻¹b, A⁻¹x)` via a Cholesky factorization of `A`.
    fn solve(&self, arm: usize, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>), BanditError> {
        let chol = self.design[arm].clone().cholesky().ok_or(BanditError::NotPositiveDefinite(arm))?;
        Ok((chol.solve(&self.response[arm]), chol.solve(x)))
    }

    /// Per-arm `(ucb, mean, bonus)`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<(f64, f64, f64)>, BanditError> {
        self.check(None, x)?;
        let xv = DVector::from_column_slice(x);
        (0..self.arms.len())
            .map(|a| {
                let (theta, a_inv_x) = self.solve(a, &xv)?;
                let mean = theta.dot(&xv);
                let bonus = self.alpha * xv.dot(&a_inv_x).max(0.0).sqrt();
                Ok((mean + bonus, mean, bonus))
            })
            .collect()
    }

    /// Arm with the highest upper confidence bound; ties go to the lowest
    /// index.
    pub fn select_arm(&self, x: &[f64]) -> Result<usize, BanditError> {
        let scores = self.scores(x)?;
        Ok(argmax(scores.iter().map(|s| s.0)))
    }

    pub fn update(&mut self, arm: usize, x: &[f64], reward: f64) -> Result<(), BanditError> {
        self.check(Some(arm), x)?;
        if !reward.is_finite() {
            return Err(BanditError::NonFiniteReward(reward));
        }
        let xv = DVector::from_column_slice(x);
        self.design[arm] += &xv * xv.transpose();
        self.response[arm] += reward * xv;
        Ok(())
    }

    /// `θᵀx` without the exploration bonus.
    pub fn expected_reward(&self, arm: usize, x: &[f64]) -> Result<f64, BanditError> {
        self.check(Some(arm), x)?;
        let xv = DVector::from_column_slice(x);
        let (theta, _) = self.solve(arm, &xv)?;
        Ok(theta.dot(&xv))
    }

    pub fn greedy_arm(&self, x: &[f64]) -> Result<usize, BanditError> {
        self.check(None, x)?;
        let means = (0..self.arms.len()).map(|a| self.expected_reward(a, x)).collect::<Result<Vec<_>, _>>()?;
        Ok(argmax(means.into_iter()))
    }

    /// Text snapshot: a header line, then one line per arm with the arm id,
    /// the design matrix row-major and the response vector, tab-separated.
    pub fn to_text(&self) -> String {
        let join = |xs: &mut dyn Iterator<Item = f64>| xs.map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = format!("linucb\t{}\t{}\t{}\n", self.dim, self.alpha, self.arms.len());
        for (i, arm) in self.arms.iter().enumerate() {
            let a = &self.design[i];
            let row_major = &mut (0..self.dim).flat_map(|r| (0..self.dim).map(move |c| a[(r, c)]));
            out.push_str(&format!("{}\t{}\t{}\n", arm, join(row_major), join(&mut self.response[i].iter().copied())));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, BanditError> {
        let err = |line: usize, message: &str| BanditError::Parse { line, message: message.to_string() };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty snapshot"))?;
        let h: Vec<&str> = header.split('\t').collect();
        if h.len() != 4 || h[0] != "linucb" {
            return Err(err(1, "expected `linucb<TAB>d<TAB>alpha<TAB>arms` header"));
        }
        let dim: usize = h[1].parse().map_err(|_| err(1, "bad dimension"))?;
        let alpha: f64 = h[2].parse().map_err(|_| err(1, "bad alpha"))?;
        let n: usize = h[3].parse().map_err(|_| err(1, "bad arm count"))?;
        let mut arms = Vec::with_capacity(n);
        let mut design = Vec::with_capacity(n);
        let mut response = Vec::with_capacity(n);
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(err(i + 1, "expected 3 tab-separated fields"));
            }
            let nums = |s: &str| -> Result<Vec<f64>, BanditError> {
                s.split(' ').map(|v| v.parse::<f64>().map_err(|_| err(i + 1, "bad number"))).collect()
            };
            let a = nums(f[1])?;
            let b = nums(f[2])?;
            if a.len() != dim * dim || b.len() != dim {
                return Err(err(i + 1, "entry count does not match dimension"));
            }
            arms.push(ArmId::from_raw(f[0]));
            design.push(DMatrix::from_row_slice(dim, dim, &a));
            response.push(DVector::from_vec(b));
        }
        if arms.len() != n {
            return Err(err(1, "arm count does not match header"));
        }
        let mut state = Self::init(arms, dim, alpha)?;
        state.design = design;
        state.response = response;
        Ok(state)
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

impl Policy for LinUcbState {
    fn select(&mut self, ctx: &QueryContext) -> Result<usize, BanditError> {
        self.select_arm(&ctx.x)
    }

    fn update(&mut self, arm: usize, ctx: &QueryContext, reward: f64) -> Result<(), BanditError> {
        LinUcbState::update(self, arm, &ctx.x, reward)
    }

    fn greedy(&self, ctx: &QueryContext) -> Result<usize, BanditError> {
        self.greedy_arm(&ctx.x)
    }

    fn expected_rewards(&self, ctx: &QueryContext) -> Result<Option<Vec<f64>>, BanditError> {
        (0..self.arms.len()).map(|a| self.expected_reward(a, &ctx.x)).collect::<Result<Vec<_>, _>>().map(Some)
    }
}

/// Picks arms uniformly at random; never learns.
#[derive(Debug, Clone)]
pub struct UniformRandom {
    arms: usize,
    rng: StreamRng,
}

impl UniformRandom {
    pub fn new(arms: usize, rng: StreamRng) -> Result<Self, BanditError> {
        if arms == 0 {
            return Err(BanditError::EmptyArmSet);
        }
        Ok(Self { arms, rng })
    }
}

impl Policy for UniformRandom {
    fn select(&mut self, _ctx: &QueryContext) -> Result<usize, BanditError> {
        Ok(self.rng.random_range(0..self.arms))
    }

    fn greedy(&self, _ctx: &QueryContext) -> Result<usize, BanditError> {
        Ok(0)
    }
}

/// Always the same arm, whatever the context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedArm(pub usize);

impl Policy for FixedArm {
    fn select(&mut self, _ctx: &QueryContext) -> Result<usize, BanditError> {
        Ok(self.0)
    }

    fn greedy(&self, _ctx: &QueryContext) -> Result<usize, BanditError> {
        Ok(self.0)
    }
}

/// Closed-form expected reward of every arm in every context, and the best
/// arm per context.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTable {
    /// `expected[arm][context]`.
    pub expected: Vec<[f64; 3]>,
    pub best: [usize; 3],
}

impl OracleTable {
    pub fn best_arm(&self, ctx: ContextLabel) -> usize {
        self.best[ctx.index()]
    }

    pub fn best_reward(&self, ctx: ContextLabel) -> f64 {
        self.expected[self.best_arm(ctx)][ctx.index()]
    }
}

impl Policy for OracleTable {
    fn select(&mut self, ctx: &QueryContext) -> Result<usize, BanditError> {
        Ok(self.best_arm(ctx.label))
    }

    fn greedy(&self, ctx: &QueryContext) -> Result<usize, BanditError> {
        Ok(self.best_arm(ctx.label))
    }
}

/// Expected correctness of a plan's final answer in `ctx`.
pub fn expected_correctness(
    plan: &ExecutionPlan,
    ctx: ContextLabel,
    profiles: &ExecutorProfile,
) -> Result<f64, BanditError> {
    let success = plan
        .parallel
        .iter()
        .map(|t| profiles.get(&t.task, ctx).map(|p| p.success_prob))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(pipeline_success_probability(&success, plan.aggregate.is_some(), profiles.tie_rule))
}

/// Expected reward from success probabilities and mean latencies: the
/// pipeline's latency is its slowest mean task latency plus aggregation.
pub fn expected_arm_reward(
    plan: &ExecutionPlan,
    ctx: ContextLabel,
    profiles: &ExecutorProfile,
    cfg: &RewardConfig,
) -> Result<f64, BanditError> {
    let correctness = expected_correctness(plan, ctx, profiles)?;
    let mut seconds = 0.0f64;
    for t in &plan.parallel {
        seconds = seconds.max(profiles.get(&t.task, ctx)?.latency_mean);
    }
    if plan.aggregate.is_some() {
        seconds += profiles.aggregate_latency;
    }
    Ok(cfg.beta * correctness - (1.0 - cfg.beta) * time_cost(seconds, cfg)?)
}

pub fn oracle_policy(
    profiles: &ExecutorProfile,
    cfg: &RewardConfig,
    arms: &[ExecutionPlan],
) -> Result<OracleTable, BanditError> {
    if arms.is_empty() {
        return Err(BanditError::EmptyArmSet);
    }
    let mut expected = Vec::with_capacity(arms.len());
    for plan in arms {
        let mut row = [0.0; 3];
        for ctx in ContextLabel::ALL {
            row[ctx.index()] = expected_arm_reward(plan, ctx, profiles, cfg)?;
        }
        expected.push(row);
    }
    let mut best = [0; 3];
    for ctx in ContextLabel::ALL {
        best[ctx.index()] = argmax(expected.iter().map(|row| row[ctx.index()]));
    }
    Ok(OracleTable { expected, best })
}
