//! Answer correctness and the correctness-minus-latency reward.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("duration must be non-negative and finite, got {0}")]
    NegativeDuration(f64),
    #[error("f1 must lie in [0, 1], got {0}")]
    F1OutOfRange(f64),
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
}

/// Weights and breakpoints of the latency penalty.
///
/// `time_cost(s)` is zero up to `low_threshold`, `s / mid_divisor` on
/// `(low_threshold, high_threshold]` and `s / high_divisor` above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub beta: f64,
    pub low_threshold: f64,
    pub high_threshold: f64,
    pub mid_divisor: f64,
    pub high_divisor: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { beta: 0.5, low_threshold: 1.0, high_threshold: 10.0, mid_divisor: 10_000.0, high_divisor: 50.0 }
    }
}

impl RewardConfig {
    /// Reward that ignores latency entirely.
    pub fn time_agnostic() -> Self {
        Self { beta: 1.0, ..Self::default() }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(RewardError::InvalidConfig(format!("reward.beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.low_threshold > 0.0 && self.low_threshold < self.high_threshold && self.high_threshold.is_finite()) {
            return Err(RewardError::InvalidConfig(
                "reward thresholds must satisfy 0 < low_threshold < high_threshold".into(),
            ));
        }
        if !(self.mid_divisor > 0.0 && self.high_divisor > 0.0) {
            return Err(RewardError::InvalidConfig("reward divisors must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSignal {
    pub f1: f64,
    pub seconds: f64,
    pub time_cost: f64,
    pub reward: f64,
}

pub fn time_cost(seconds: f64, cfg: &RewardConfig) -> Result<f64, RewardError> {
    if !seconds.is_finite() || seconds < 0.0 {
        return Err(RewardError::NegativeDuration(seconds));
    }
    Ok(if seconds <= cfg.low_threshold {
        0.0
    } else if seconds <= cfg.high_threshold {
        seconds / cfg.mid_divisor
    } else {
        seconds / cfg.high_divisor
    })
}

pub fn reward(f1: f64, seconds: f64, cfg: &RewardConfig) -> Result<RewardSignal, RewardError> {
    if !(0.0..=1.0).contains(&f1) {
        return Err(RewardError::F1OutOfRange(f1));
    }
    let cost = time_cost(seconds, cfg)?;
    Ok(RewardSignal { f1, seconds, time_cost: cost, reward: cfg.beta * f1 - (1.0 - cfg.beta) * cost })
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercases, strips ASCII punctuation, drops articles and splits on
/// whitespace.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect();
    cleaned.split_whitespace().filter(|t| !ARTICLES.contains(t)).map(str::to_string).collect()
}

fn f1_against(prediction: &[String], gold: &[String]) -> f64 {
    if prediction.is_empty() || gold.is_empty() {
        return if prediction.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in prediction {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / prediction.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best token-overlap F1 of `prediction` against any gold answer.
pub fn token_f1(prediction: &str, gold_answers: &[String]) -> f64 {
    let pred = normalize_tokens(prediction);
    gold_answers.iter().map(|g| f1_against(&pred, &normalize_tokens(g))).fold(0.0, f64::max)
}
