//! Module catalog: tasks, executors and resources, plus the structural rules
//! that constrain how they may be wired into a pipeline.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("module id `{0}` is already registered")]
    DuplicateId(String),
    #[error("invalid descriptor `{id}`: {reason}")]
    InvalidDescriptor { id: String, reason: String },
    #[error("registry is not usable: {0}")]
    Unsatisfiable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Standalone,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutorKind {
    Agent,
    Tool,
}

impl fmt::Display for ExecutorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecutorKind::Agent => f.write_str("agent"),
            ExecutorKind::Tool => f.write_str("tool"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    Structured,
    SemiStructured,
    Unstructured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Availability {
    Public,
    Private,
    Proprietary,
}

/// Properties every resource carries. Stored and validated; the QA setup does
/// not act on them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceProperties {
    pub structure: Structure,
    pub modalities: BTreeSet<String>,
    pub availability: Availability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModuleKind {
    Task { task: TaskKind },
    Executor { executor: ExecutorKind },
    Resource { properties: ResourceProperties },
}

impl ModuleKind {
    pub fn is_task(&self) -> bool {
        matches!(self, ModuleKind::Task { .. })
    }

    pub fn is_executor(&self) -> bool {
        matches!(self, ModuleKind::Executor { .. })
    }

    pub fn is_resource(&self) -> bool {
        matches!(self, ModuleKind::Resource { .. })
    }

    pub fn executor_kind(&self) -> Option<ExecutorKind> {
        match self {
            ModuleKind::Executor { executor } => Some(*executor),
            _ => None,
        }
    }
}

/// One registry entry.
///
/// `preferred_executors` and `default_resources` carry the concrete bindings
/// used when pipelines are enumerated; when empty, the first registered
/// modules that satisfy the requirements are used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDescriptor {
    pub id: String,
    pub name: String,
    pub kind: ModuleKind,
    #[serde(default)]
    pub executor_requirements: BTreeSet<ExecutorKind>,
    #[serde(default)]
    pub resource_requirements: usize,
    #[serde(default)]
    pub produces_answer: bool,
    #[serde(default)]
    pub preferred_executors: Vec<String>,
    #[serde(default)]
    pub default_resources: Vec<String>,
}

impl ModuleDescriptor {
    pub fn task(
        id: &str,
        name: &str,
        kind: TaskKind,
        executors: &[ExecutorKind],
        resources: usize,
        produces_answer: bool,
    ) -> Self {
        Self {
            id: id.to_string(),
            name: name.to_string(),
            kind: ModuleKind::Task { task: kind },
            executor_requirements: executors.iter().copied().collect(),
            resource_requirements: resources,
            produces_answer,
            preferred_executors: Vec::new(),
            default_resources: Vec::new(),
        }
    }

    pub fn executor(id: &str, name: &str, kind: ExecutorKind) -> Self {
        Self {
            id: id.to_string(),
            name: name.to_string(),
            kind: ModuleKind::Executor { executor: kind },
            executor_requirements: BTreeSet::new(),
            resource_requirements: 0,
            produces_answer: false,
            preferred_executors: Vec::new(),
            default_resources: Vec::new(),
        }
    }

    pub fn resource(id: &str, name: &str, properties: ResourceProperties) -> Self {
        Self {
            id: id.to_string(),
            name: name.to_string(),
            kind: ModuleKind::Resource { properties },
            executor_requirements: BTreeSet::new(),
            resource_requirements: 0,
            produces_answer: false,
            preferred_executors: Vec::new(),
            default_resources: Vec::new(),
        }
    }

    pub fn with_preferred_executors(mut self, ids: &[&str]) -> Self {
        self.preferred_executors = ids.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_default_resources(mut self, ids: &[&str]) -> Self {
        self.default_resources = ids.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn is_answer_task(&self) -> bool {
        self.kind.is_task() && self.produces_answer
    }

    /// Checks the per-descriptor invariants.
    pub fn check(&self) -> Result<(), RegistryError> {
        let invalid =
            |reason: &str| RegistryError::InvalidDescriptor { id: self.id.clone(), reason: reason.to_string() };
        if self.id.trim().is_empty() {
            return Err(invalid("id must be non-empty"));
        }
        if self.id == crate::graph::INPUT || self.id == crate::graph::OUTPUT {
            return Err(invalid("id is reserved for a pseudo-node"));
        }
        if self.id.chars().any(|c| c.is_whitespace() || matches!(c, '|' | '#' | '>' | ',' | ':')) {
            return Err(invalid("id must not contain whitespace or any of `|#>,:`"));
        }
        match &self.kind {
            ModuleKind::Task { .. } => {
                if self.executor_requirements.is_empty() {
                    return Err(invalid("a task must accept at least one executor kind"));
                }
                if !self.default_resources.is_empty() && self.default_resources.len() != self.resource_requirements {
                    return Err(invalid("default_resources must list exactly resource_requirements entries"));
                }
            }
            ModuleKind::Executor { .. } | ModuleKind::Resource { .. } => {
                if !self.executor_requirements.is_empty() {
                    return Err(invalid("only tasks carry executor requirements"));
                }
                if self.resource_requirements != 0 {
                    return Err(invalid("only tasks carry resource requirements"));
                }
                if self.produces_answer {
                    return Err(invalid("only tasks may produce answers"));
                }
                if !self.preferred_executors.is_empty() || !self.default_resources.is_empty() {
                    return Err(invalid("only tasks carry default bindings"));
                }
            }
        }
        if let ModuleKind::Resource { properties } = &self.kind {
            if properties.modalities.is_empty() {
                return Err(invalid("a resource needs at least one modality tag"));
            }
        }
        Ok(())
    }
}

/// Rules restricting how answer tasks and aggregators combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralRules {
    pub answer_tasks_parallel_only: bool,
    pub aggregate_required_if_multiple: bool,
    pub aggregate_forbidden_if_single: bool,
}

impl Default for StructuralRules {
    fn default() -> Self {
        Self {
            answer_tasks_parallel_only: true,
            aggregate_required_if_multiple: true,
            aggregate_forbidden_if_single: true,
        }
    }
}

/// Ordered module catalog. Iteration follows insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModuleRegistry {
    descriptors: Vec<ModuleDescriptor>,
    #[serde(default)]
    pub rules: StructuralRules,
}

impl ModuleRegistry {
    pub fn new(rules: StructuralRules) -> Self {
        Self { descriptors: Vec::new(), rules }
    }

    pub fn register(mut self, descriptor: ModuleDescriptor) -> Result<Self, RegistryError> {
        self.insert(descriptor)?;
        Ok(self)
    }

    pub fn insert(&mut self, descriptor: ModuleDescriptor) -> Result<(), RegistryError> {
        descriptor.check()?;
        if self.get(&descriptor.id).is_some() {
            return Err(RegistryError::DuplicateId(descriptor.id));
        }
        self.descriptors.push(descriptor);
        Ok(())
    }

    pub fn from_descriptors(
        descriptors: impl IntoIterator<Item = ModuleDescriptor>,
        rules: StructuralRules,
    ) -> Result<Self, RegistryError> {
        let mut registry = Self::new(rules);
        for d in descriptors {
            registry.insert(d)?;
        }
        Ok(registry)
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModuleDescriptor> {
        self.descriptors.iter()
    }

    pub fn get(&self, id: &str) -> Option<&ModuleDescriptor> {
        self.descriptors.iter().find(|d| d.id == id)
    }

    /// Position of a module in registry order.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.descriptors.iter().position(|d| d.id == id)
    }

    pub fn modules_of_kind<F>(&self, predicate: F) -> Vec<&ModuleDescriptor>
    where
        F: Fn(&ModuleDescriptor) -> bool,
    {
        self.descriptors.iter().filter(|d| predicate(d)).collect()
    }

    pub fn answer_tasks(&self) -> Vec<&ModuleDescriptor> {
        self.modules_of_kind(ModuleDescriptor::is_answer_task)
    }

    /// Tasks that do not produce answers themselves; under the QA rules these
    /// can only combine the output of answer tasks.
    pub fn aggregator_tasks(&self) -> Vec<&ModuleDescriptor> {
        self.modules_of_kind(|d| d.kind.is_task() && !d.produces_answer)
    }

    /// Concrete executor bound to `task` during enumeration.
    pub fn default_executor(&self, task: &ModuleDescriptor) -> Option<&ModuleDescriptor> {
        let accepts =
            |e: &&ModuleDescriptor| e.kind.executor_kind().is_some_and(|k| task.executor_requirements.contains(&k));
        if !task.preferred_executors.is_empty() {
            return task.preferred_executors.iter().filter_map(|id| self.get(id)).find(accepts);
        }
        self.descriptors.iter().find(accepts)
    }

    /// Concrete resources bound to `task` during enumeration.
    pub fn default_resources(&self, task: &ModuleDescriptor) -> Option<Vec<&ModuleDescriptor>> {
        if task.resource_requirements == 0 {
            return Some(Vec::new());
        }
        let chosen: Vec<&ModuleDescriptor> = if task.default_resources.is_empty() {
            self.descriptors.iter().filter(|d| d.kind.is_resource()).take(task.resource_requirements).collect()
        } else {
            task.default_resources.iter().filter_map(|id| self.get(id).filter(|d| d.kind.is_resource())).collect()
        };
        (chosen.len() == task.resource_requirements).then_some(chosen)
    }

    /// Every task must be executable by a registered executor with enough
    /// registered resources, and default bindings must resolve.
    pub fn validate(&self) -> Result<(), RegistryError> {
        for task in self.descriptors.iter().filter(|d| d.kind.is_task()) {
            if self.default_executor(task).is_none() {
                return Err(RegistryError::Unsatisfiable(format!(
                    "task `{}` has no registered executor of kind {:?}",
                    task.id, task.executor_requirements
                )));
            }
            if self.default_resources(task).is_none() {
                return Err(RegistryError::Unsatisfiable(format!(
                    "task `{}` needs {} resource(s) that cannot be bound",
                    task.id, task.resource_requirements
                )));
            }
        }
        if self.answer_tasks().is_empty() {
            return Err(RegistryError::Unsatisfiable("no answer-producing task".into()));
        }
        Ok(())
    }
}

pub mod ids {
    pub const NOR: &str = "NoR";
    pub const ONER: &str = "OneR";
    pub const IRCOT: &str = "IRCoT";
    pub const AGGREGATE: &str = "Aggregate";
    pub const LLM_AGENT: &str = "llm-agent";
    pub const RETRIEVER: &str = "retriever-tool";
    pub const AGGREGATOR: &str = "aggregator-tool";
    pub const WIKIPEDIA: &str = "wikipedia-corpus";
    pub const MULTIHOP: &str = "multihop-passage-corpus";
}

fn text_corpus() -> ResourceProperties {
    ResourceProperties {
        structure: Structure::Unstructured,
        modalities: ["text".to_string()].into_iter().collect(),
        availability: Availability::Public,
    }
}

/// The built-in question-answering setup: four tasks, three executors and two
/// corpora.
pub fn paper_qa_registry() -> ModuleRegistry {
    use ids::*;
    use ExecutorKind::{Agent, Tool};
    let descriptors = vec![
        ModuleDescriptor::task(NOR, "NoR", TaskKind::Complex, &[Agent], 0, true).with_preferred_executors(&[LLM_AGENT]),
        ModuleDescriptor::task(ONER, "OneR", TaskKind::Complex, &[Agent], 1, true)
            .with_preferred_executors(&[LLM_AGENT])
            .with_default_resources(&[WIKIPEDIA]),
        ModuleDescriptor::task(IRCOT, "IRCoT", TaskKind::Complex, &[Agent], 1, true)
            .with_preferred_executors(&[LLM_AGENT])
            .with_default_resources(&[MULTIHOP]),
        ModuleDescriptor::task(AGGREGATE, "Aggregate", TaskKind::Standalone, &[Tool, Agent], 0, false)
            .with_preferred_executors(&[AGGREGATOR]),
        ModuleDescriptor::executor(LLM_AGENT, "LLM agent", Agent),
        ModuleDescriptor::executor(RETRIEVER, "Retriever tool", Tool),
        ModuleDescriptor::executor(AGGREGATOR, "Majority-vote aggregator", Tool),
        ModuleDescriptor::resource(WIKIPEDIA, "Wikipedia", text_corpus()),
        ModuleDescriptor::resource(MULTIHOP, "Multihop passage corpus", text_corpus()),
    ];
    ModuleRegistry::from_descriptors(descriptors, StructuralRules::default()).expect("built-in registry is well-formed")
}
