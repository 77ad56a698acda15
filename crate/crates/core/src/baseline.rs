//! Context-free baseline: REINFORCE over the inclusion probability of each
//! answer-task edge, pruned into one fixed pipeline after training.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_pipeline, terminal_plan, ExecutionPlan, GraphError, PipelineGraph};
use crate::registry::ModuleRegistry;
use crate::reward::token_f1;
use crate::rng::{stream, StreamRng};
use crate::simulation::{execute_pipeline, ExecutorProfile, Query, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("no nonempty configuration sampled in {attempts} attempts")]
    DegenerateModel { attempts: usize },
    #[error("every edge probability is below the prune threshold")]
    EmptyAfterPruning,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("registry has no answer tasks")]
    NoAnswerTasks,
    #[error("{0} answer tasks is more than the 16 the baseline supports")]
    TooManyEdges(usize),
    #[error("mask has {got} entries, expected {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error("invalid baseline config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub prune_threshold: f64,
    pub max_resample: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, epochs: 200, batch_size: 8, prune_threshold: 0.5, max_resample: 10_000 }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        let bad = |m: &str| Err(BaselineError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("baseline.learning_rate must be finite and >= 0");
        }
        if self.batch_size == 0 {
            return bad("baseline.batch_size must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.prune_threshold) {
            return bad("baseline.prune_threshold must lie in [0, 1]");
        }
        if self.max_resample == 0 {
            return bad("baseline.max_resample must be >= 1");
        }
        Ok(())
    }
}

fn sigmoid(logit: f64) -> f64 {
    1.0 / (1.0 + (-logit).exp())
}

/// One logit per answer-task edge, in registry order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProbabilityModel {
    tasks: Vec<String>,
    logits: Vec<f64>,
    pub config: BaselineConfig,
}

impl EdgeProbabilityModel {
    /// Uniform model: every edge at probability 0.5.
    pub fn uniform(tasks: Vec<String>, config: BaselineConfig) -> Self {
        let logits = vec![0.0; tasks.len()];
        Self { tasks, logits, config }
    }

    /// Model with the given probabilities; 0 and 1 map to infinite logits.
    pub fn from_probabilities(
        tasks: Vec<String>,
        probs: &[f64],
        config: BaselineConfig,
    ) -> Result<Self, BaselineError> {
        if probs.len() != tasks.len() {
            return Err(BaselineError::MaskLength { expected: tasks.len(), got: probs.len() });
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(BaselineError::InvalidConfig("edge probabilities must lie in [0, 1]".into()));
        }
        let logits = probs.iter().map(|p| (p / (1.0 - p)).ln()).collect();
        Ok(Self { tasks, logits, config })
    }

    pub fn tasks(&self) -> &[String] {
        &self.tasks
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.logits.iter().map(|l| sigmoid(*l)).collect()
    }

    /// Independent Bernoulli draw per edge, redrawn while empty.
    pub fn sample_mask<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<bool>, BaselineError> {
        let probs = self.probabilities();
        for _ in 0..self.config.max_resample {
            let mask: Vec<bool> = probs.iter().map(|p| rng.random::<f64>() < *p).collect();
            if mask.iter().any(|b| *b) {
                return Ok(mask);
            }
        }
        Err(BaselineError::DegenerateModel { attempts: self.config.max_resample })
    }

    /// Gradient of the log-probability of `mask` under the sampling
    /// distribution conditioned on a nonempty draw.
    pub fn score(&self, mask: &[bool]) -> Vec<f64> {
        let probs = self.probabilities();
        let none: f64 = probs.iter().map(|p| 1.0 - p).product();
        let z = 1.0 - none;
        probs
            .iter()
            .zip(mask)
            .map(|(p, &c)| {
                let c = if c { 1.0 } else { 0.0 };
                let norm = if none == 0.0 { 0.0 } else { p * none / z };
                c - p - norm
            })
            .collect()
    }

    /// Probability of `mask` under the conditional sampling distribution.
    pub fn mask_probability(&self, mask: &[bool]) -> f64 {
        if !mask.iter().any(|b| *b) {
            return 0.0;
        }
        let probs = self.probabilities();
        let none: f64 = probs.iter().map(|p| 1.0 - p).product();
        let joint: f64 = probs.iter().zip(mask).map(|(p, &c)| if c { *p } else { 1.0 - p }).product();
        joint / (1.0 - none)
    }

    /// One ascent step over a batch of `batch_len` sampled configurations.
    /// `f1_of(i, mask)` scores the `i`-th sample; the batch-mean F1 is the
    /// baseline. Returns the F1 of every sample.
    pub fn reinforce_step_with<R, F>(
        &mut self,
        batch_len: usize,
        rng: &mut R,
        mut f1_of: F,
    ) -> Result<Vec<f64>, BaselineError>
    where
        R: Rng + ?Sized,
        F: FnMut(usize, &[bool], &mut R) -> Result<f64, BaselineError>,
    {
        if batch_len == 0 {
            return Err(BaselineError::EmptyBatch);
        }
        let mut samples = Vec::with_capacity(batch_len);
        for i in 0..batch_len {
            let mask = self.sample_mask(rng)?;
            let f1 = f1_of(i, &mask, rng)?;
            samples.push((mask, f1));
        }
        if samples.iter().all(|s| s.1 == samples[0].1) {
            return Ok(samples.into_iter().map(|s| s.1).collect());
        }
        let mean = samples.iter().map(|s| s.1).sum::<f64>() / batch_len as f64;
        let mut grad = vec![0.0; self.logits.len()];
        for (mask, f1) in &samples {
            let advantage = f1 - mean;
            for (g, s) in grad.iter_mut().zip(self.score(mask)) {
                *g += advantage * s;
            }
        }
        for (l, g) in self.logits.iter_mut().zip(grad) {
            *l += self.config.learning_rate * g;
        }
        Ok(samples.into_iter().map(|s| s.1).collect())
    }

    /// Pruned mask: edges with probability at least the threshold.
    pub fn pruned_mask(&self) -> Vec<bool> {
        self.probabilities().iter().map(|p| *p >= self.config.prune_threshold).collect()
    }
}

/// Every nonempty subset of answer tasks with its pipeline, keyed by
/// inclusion mask.
#[derive(Debug, Clone)]
pub struct ConfigurationSpace {
    tasks: Vec<String>,
    entries: BTreeMap<Vec<bool>, (PipelineGraph, ExecutionPlan)>,
}

impl ConfigurationSpace {
    pub fn new(registry: &ModuleRegistry) -> Result<Self, BaselineError> {
        let tasks: Vec<String> = registry.answer_tasks().iter().map(|d| d.id.clone()).collect();
        let n = tasks.len();
        if n == 0 {
            return Err(BaselineError::NoAnswerTasks);
        }
        if n > 16 {
            return Err(BaselineError::TooManyEdges(n));
        }
        let aggregator = registry.aggregator_tasks().first().map(|d| d.id.clone());
        let mut entries = BTreeMap::new();
        for bits in 1u32..(1 << n) {
            let mask: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            let chosen: Vec<&str> = tasks.iter().zip(&mask).filter(|(_, m)| **m).map(|(t, _)| t.as_str()).collect();
            let agg = if chosen.len() >= 2 { aggregator.as_deref() } else { None };
            let graph = build_pipeline(registry, &chosen, agg)?;
            let plan = terminal_plan(&graph, registry)?;
            entries.insert(mask, (graph, plan));
        }
        Ok(Self { tasks, entries })
    }

    pub fn tasks(&self) -> &[String] {
        &self.tasks
    }

    fn entry(&self, mask: &[bool]) -> Result<&(PipelineGraph, ExecutionPlan), BaselineError> {
        if mask.len() != self.tasks.len() {
            return Err(BaselineError::MaskLength { expected: self.tasks.len(), got: mask.len() });
        }
        self.entries.get(mask).ok_or(BaselineError::EmptyAfterPruning)
    }

    pub fn graph(&self, mask: &[bool]) -> Result<&PipelineGraph, BaselineError> {
        Ok(&self.entry(mask)?.0)
    }

    pub fn plan(&self, mask: &[bool]) -> Result<&ExecutionPlan, BaselineError> {
        Ok(&self.entry(mask)?.1)
    }

    pub fn uniform_model(&self, config: BaselineConfig) -> EdgeProbabilityModel {
        EdgeProbabilityModel::uniform(self.tasks.clone(), config)
    }
}

pub fn sample_configuration<'s, R: Rng + ?Sized>(
    model: &EdgeProbabilityModel,
    space: &'s ConfigurationSpace,
    rng: &mut R,
) -> Result<&'s PipelineGraph, BaselineError> {
    space.graph(&model.sample_mask(rng)?)
}

/// One REINFORCE step on `batch`, each sample scored by the token F1 of the
/// simulated pipeline.
pub fn reinforce_step<R: Rng + ?Sized>(
    model: &mut EdgeProbabilityModel,
    space: &ConfigurationSpace,
    batch: &[Query],
    profiles: &ExecutorProfile,
    rng: &mut R,
) -> Result<Vec<f64>, BaselineError> {
    model.reinforce_step_with(batch.len(), rng, |i, mask, rng| {
        let trace = execute_pipeline(space.plan(mask)?, &batch[i], profiles, rng)?;
        Ok(token_f1(&trace.final_answer, &batch[i].gold_answers))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub mean_f1: f64,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StaticRun {
    pub model: EdgeProbabilityModel,
    pub curve: Vec<CurvePoint>,
}

/// Trains for `config.epochs` full shuffled passes over `train`.
pub fn train_static(
    space: &ConfigurationSpace,
    train: &[Query],
    profiles: &ExecutorProfile,
    config: BaselineConfig,
    seed: u64,
) -> Result<StaticRun, BaselineError> {
    config.validate()?;
    if train.is_empty() {
        return Err(BaselineError::EmptyBatch);
    }
    let mut model = space.uniform_model(config);
    let mut curve = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        let mut rng: StreamRng = stream(seed, &[0x5747, epoch as u64]);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Query> = chunk.iter().map(|i| train[*i].clone()).collect();
            total += reinforce_step(&mut model, space, &batch, profiles, &mut rng)?.iter().sum::<f64>();
        }
        curve.push(CurvePoint { epoch, mean_f1: total / train.len() as f64, probabilities: model.probabilities() });
    }
    Ok(StaticRun { model, curve })
}

/// Fixed pipeline keeping the edges at or above the prune threshold.
pub fn finalize<'s>(
    model: &EdgeProbabilityModel,
    space: &'s ConfigurationSpace,
) -> Result<&'s PipelineGraph, BaselineError> {
    let mask = model.pruned_mask();
    if !mask.iter().any(|b| *b) {
        return Err(BaselineError::EmptyAfterPruning);
    }
    space.graph(&mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::paper_qa_registry;

    fn toy(probs: &[f64]) -> EdgeProbabilityModel {
        let tasks = (0..probs.len()).map(|i| format!("t{i}")).collect();
        EdgeProbabilityModel::from_probabilities(tasks, probs, BaselineConfig::default()).unwrap()
    }

    fn all_masks(n: usize) -> Vec<Vec<bool>> {
        (1u32..(1 << n)).map(|b| (0..n).map(|i| b >> i & 1 == 1).collect()).collect()
    }

    #[test]
    fn certain_edges_give_full_graph() {
        let reg = paper_qa_registry();
        let space = ConfigurationSpace::new(&reg).unwrap();
        let m = EdgeProbabilityModel::from_probabilities(space.tasks().to_vec(), &[1.0; 3], BaselineConfig::default())
            .unwrap();
        let mut rng = stream(1, &[]);
        for _ in 0..20 {
            let g = sample_configuration(&m, &space, &mut rng).unwrap();
            assert_eq!(g.label(&reg), "NoR+OneR+IRCoT+Aggregate");
        }
        let single = EdgeProbabilityModel::from_probabilities(
            space.tasks().to_vec(),
            &[0.0, 1.0, 0.0],
            BaselineConfig::default(),
        )
        .unwrap();
        for _ in 0..20 {
            assert_eq!(sample_configuration(&single, &space, &mut rng).unwrap().label(&reg), "OneR");
        }
    }

    #[test]
    fn all_zero_is_degenerate() {
        let m = toy(&[0.0, 0.0]);
        assert!(matches!(m.sample_mask(&mut stream(0, &[])), Err(BaselineError::DegenerateModel { .. })));
    }

    #[test]
    fn uniform_sampling_matches_conditional_distribution() {
        let m = toy(&[0.5; 3]);
        let mut rng = stream(3, &[]);
        let mut counts: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
        let n = 100_000;
        for _ in 0..n {
            *counts.entry(m.sample_mask(&mut rng).unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), 7);
        for mask in all_masks(3) {
            let exact = m.mask_probability(&mask);
            assert!((exact - 1.0 / 7.0).abs() < 1e-12);
            let freq = counts[&mask] as f64 / n as f64;
            assert!((freq - exact).abs() < 0.006, "{mask:?}: {freq}");
        }
    }

    #[test]
    fn score_matches_finite_difference() {
        let m = toy(&[0.3, 0.6, 0.8]);
        for mask in all_masks(3) {
            let s = m.score(&mask);
            for (i, si) in s.iter().enumerate() {
                let h = 1e-6;
                let mut up = m.clone();
                up.logits[i] += h;
                let mut down = m.clone();
                down.logits[i] -= h;
                let fd = (up.mask_probability(&mask).ln() - down.mask_probability(&mask).ln()) / (2.0 * h);
                assert!((fd - si).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_reward_and_zero_rate_leave_model_unchanged() {
        let mut m = toy(&[0.5; 3]);
        let before = m.clone();
        m.reinforce_step_with(8, &mut stream(5, &[]), |_, _, _| Ok(0.7)).unwrap();
        assert_eq!(m, before);
        let mut frozen = toy(&[0.5; 3]);
        frozen.config.learning_rate = 0.0;
        let before = frozen.clone();
        frozen.reinforce_step_with(8, &mut stream(5, &[]), |_, mask, _| Ok(if mask[0] { 1.0 } else { 0.0 })).unwrap();
        assert_eq!(frozen, before);
        assert_eq!(
            toy(&[0.5]).reinforce_step_with(0, &mut stream(5, &[]), |_, _, _| Ok(0.0)),
            Err(BaselineError::EmptyBatch)
        );
    }

    // Edge 1's task is always right and edge 2's always wrong; with both
    // present the tie goes to the earlier task, so only edge 1 matters.
    fn toy_reward(mask: &[bool]) -> f64 {
        if mask[0] {
            1.0
        } else {
            0.0
        }
    }

    #[test]
    fn toy_expected_update_favours_winning_edge() {
        for p1 in [0.05, 0.3, 0.5, 0.8, 0.97] {
            for p2 in [0.02, 0.4, 0.5, 0.9] {
                let m = toy(&[p1, p2]);
                let mean: f64 = all_masks(2).iter().map(|k| m.mask_probability(k) * toy_reward(k)).sum();
                let drift: f64 =
                    all_masks(2).iter().map(|k| m.mask_probability(k) * (toy_reward(k) - mean) * m.score(k)[0]).sum();
                assert!(drift > 0.0, "p=({p1},{p2}) drift {drift}");
            }
        }
    }

    #[test]
    fn toy_converges() {
        for seed in 0..5 {
            let mut m = toy(&[0.5, 0.5]);
            m.config.batch_size = 8;
            let mut rng = stream(seed, &[]);
            let mut step = 0;
            while m.probabilities()[0] <= 0.99 {
                m.reinforce_step_with(8, &mut rng, |_, mask, _| Ok(toy_reward(mask))).unwrap();
                step += 1;
                assert!(step < 10_000, "seed {seed} stalled at {:?}", m.probabilities());
            }
        }
    }

    #[test]
    fn finalize_thresholds() {
        let reg = paper_qa_registry();
        let space = ConfigurationSpace::new(&reg).unwrap();
        let tasks = space.tasks().to_vec();
        let m = EdgeProbabilityModel::from_probabilities(tasks.clone(), &[0.2, 0.4, 0.9], BaselineConfig::default())
            .unwrap();
        assert_eq!(finalize(&m, &space).unwrap().label(&reg), "IRCoT");
        let m = EdgeProbabilityModel::from_probabilities(tasks.clone(), &[0.2, 0.5, 0.9], BaselineConfig::default())
            .unwrap();
        assert_eq!(finalize(&m, &space).unwrap().label(&reg), "OneR+IRCoT+Aggregate");
        let m = EdgeProbabilityModel::from_probabilities(tasks, &[0.1, 0.4, 0.49], BaselineConfig::default()).unwrap();
        assert_eq!(finalize(&m, &space).unwrap_err(), BaselineError::EmptyAfterPruning);
    }

    #[test]
    fn probabilities_stay_open_during_training() {
        let reg = paper_qa_registry();
        let space = ConfigurationSpace::new(&reg).unwrap();
        let train = crate::dataset::synthesize(30, 3, 1).unwrap().train;
        let cfg = BaselineConfig { epochs: 5, ..BaselineConfig::default() };
        let run = train_static(&space, &train, &crate::simulation::default_profiles(), cfg, 9).unwrap();
        assert_eq!(run.curve.len(), 5);
        for point in &run.curve {
            assert!(point.probabilities.iter().all(|p| *p > 0.0 && *p < 1.0));
            assert!((0.0..=1.0).contains(&point.mean_f1));
        }
    }
}
