//! Context-aware selection of question-answering pipelines.
//!
//! A [`registry::ModuleRegistry`] describes tasks, executors and resources.
//! [`graph`] enumerates every valid pipeline over it, [`simulation`] runs
//! pipelines against per-context executor profiles, and [`bandit`] learns
//! which pipeline to pick for each query complexity. [`baseline`] trains a
//! single context-free pipeline for comparison.

pub mod bandit;
pub mod baseline;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod graph;
pub mod persist;
pub mod registry;
pub mod reward;
pub mod rng;
pub mod simulation;

pub use bandit::{BanditConfig, LinUcbState, Policy, QueryContext};
pub use graph::{enumerate_valid, terminal_plan, ArmId, ExecutionPlan, PipelineGraph};
pub use registry::{paper_qa_registry, ModuleRegistry};
pub use reward::{reward, token_f1, RewardConfig};
pub use simulation::{default_profiles, ContextLabel, ExecutorProfile, Query};
