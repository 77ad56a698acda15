//! Typed pipeline graphs over registry modules.
//!
//! A pipeline is a DAG whose nodes are module ids plus the `INPUT` and
//! `OUTPUT` pseudo-nodes. Edges are typed: task flow between tasks, executor
//! assignment from an executor to a task, and resource allocation from a
//! resource to a task.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{ModuleDescriptor, ModuleRegistry};

pub const INPUT: &str = "INPUT";
pub const OUTPUT: &str = "OUTPUT";

/// Default cap on the number of enumerated pipelines.
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node `{0}` is not a registered module")]
    UnknownModuleRef(String),
    #[error("enumeration would produce {count} pipelines, above the cap of {cap}")]
    ExplosionGuard { count: u128, cap: usize },
    #[error("enumeration only supports registries whose answer tasks run in parallel")]
    UnsupportedRules,
    #[error("graph is not a valid pipeline: {0}")]
    InvalidGraph(String),
    #[error("cannot build pipeline: {0}")]
    Build(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    TaskFlow,
    ExecutorAssignment,
    ResourceAllocation,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::TaskFlow => "flow",
            EdgeKind::ExecutorAssignment => "executor",
            EdgeKind::ResourceAllocation => "resource",
        }
    }
}

impl FromStr for EdgeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flow" => Ok(EdgeKind::TaskFlow),
            "executor" => Ok(EdgeKind::ExecutorAssignment),
            "resource" => Ok(EdgeKind::ResourceAllocation),
            other => Err(format!("unknown edge kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub kind: EdgeKind,
    pub src: String,
    pub dst: String,
}

impl Edge {
    pub fn new(kind: EdgeKind, src: &str, dst: &str) -> Self {
        Self { kind, src: src.to_string(), dst: dst.to_string() }
    }

    pub fn flow(src: &str, dst: &str) -> Self {
        Self::new(EdgeKind::TaskFlow, src, dst)
    }

    pub fn executor(src: &str, dst: &str) -> Self {
        Self::new(EdgeKind::ExecutorAssignment, src, dst)
    }

    pub fn resource(src: &str, dst: &str) -> Self {
        Self::new(EdgeKind::ResourceAllocation, src, dst)
    }
}

/// Canonical, insertion-order independent identifier of a pipeline.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArmId(String);

impl ArmId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn from_raw(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PipelineGraph {
    nodes: BTreeSet<String>,
    edges: BTreeSet<Edge>,
}

impl PipelineGraph {
    /// A graph holding only the `INPUT` and `OUTPUT` pseudo-nodes.
    pub fn new() -> Self {
        let mut g = Self::default();
        g.nodes.insert(INPUT.to_string());
        g.nodes.insert(OUTPUT.to_string());
        g
    }

    pub fn add_node(&mut self, id: &str) {
        self.nodes.insert(id.to_string());
    }

    /// Adds an edge, inserting its endpoints as nodes.
    pub fn add_edge(&mut self, edge: Edge) {
        self.nodes.insert(edge.src.clone());
        self.nodes.insert(edge.dst.clone());
        self.edges.insert(edge);
    }

    pub fn with_edges(edges: impl IntoIterator<Item = Edge>) -> Self {
        let mut g = Self::new();
        for e in edges {
            g.add_edge(e);
        }
        g
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(String::as_str)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.nodes.contains(id)
    }

    fn module_nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes().filter(|n| *n != INPUT && *n != OUTPUT)
    }

    /// Task nodes in registry order.
    pub fn tasks<'r>(&self, registry: &'r ModuleRegistry) -> Vec<&'r ModuleDescriptor> {
        registry.iter().filter(|d| d.kind.is_task() && self.nodes.contains(&d.id)).collect()
    }

    /// Human-readable label such as `NoR+OneR+Aggregate`.
    pub fn label(&self, registry: &ModuleRegistry) -> String {
        let mut answer: Vec<&str> = Vec::new();
        let mut other: Vec<&str> = Vec::new();
        for t in self.tasks(registry) {
            if t.produces_answer {
                answer.push(&t.name);
            } else {
                other.push(&t.name);
            }
        }
        answer.extend(other);
        answer.join("+")
    }

    pub fn arm_id(&self) -> ArmId {
        let nodes: Vec<&str> = self.nodes().collect();
        let edges: Vec<String> =
            self.edges.iter().map(|e| format!("{}:{}>{}", e.kind.as_str(), e.src, e.dst)).collect();
        ArmId(format!("{}#{}", nodes.join("|"), edges.join("|")))
    }

    /// Line-oriented form: one `kind<TAB>src<TAB>dst` line per edge, in
    /// canonical edge order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(e.kind.as_str());
            out.push('\t');
            out.push_str(&e.src);
            out.push('\t');
            out.push_str(&e.dst);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GraphError> {
        let mut g = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| GraphError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 tab-separated fields, got {}", fields.len())));
            }
            let kind = fields[0].parse::<EdgeKind>().map_err(parse_err)?;
            g.add_edge(Edge::new(kind, fields[1], fields[2]));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub subject: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.rule, self.subject)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn push(&mut self, rule: &'static str, subject: impl Into<String>) {
        self.violations.push(Violation { rule, subject: subject.into() });
    }
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

pub mod rules {
    pub const MISSING_PSEUDO_NODE: &str = "missing pseudo-node";
    pub const DANGLING_EDGE: &str = "edge endpoint not in node set";
    pub const FLOW_ENDPOINT: &str = "task flow connects only INPUT, tasks and OUTPUT";
    pub const FLOW_CYCLE: &str = "task flow must be acyclic";
    pub const ASSIGNMENT_ENDPOINT: &str = "executor assignment goes from an executor to a task";
    pub const ALLOCATION_ENDPOINT: &str = "resource allocation goes from a resource to a task";
    pub const EXECUTOR_COUNT: &str = "exactly one executor per task";
    pub const EXECUTOR_KIND: &str = "executor kind not accepted by task";
    pub const RESOURCES_UNMET: &str = "resource_requirements unmet";
    pub const TERMINAL_COUNT: &str = "exactly one task feeds OUTPUT";
    pub const DISCONNECTED_TASK: &str = "task must have incoming and outgoing task flow";
    pub const UNUSED_MODULE: &str = "executor or resource is unused";
    pub const NO_ANSWER: &str = "pipeline has no answer task";
    pub const PARALLEL_ONLY: &str = "answer tasks parallel only";
    pub const AGGREGATE_INPUTS: &str = "aggregate consumes only answer-task outputs";
    pub const AGGREGATE_REQUIRED: &str = "aggregate required for multiple answer tasks";
    pub const AGGREGATE_FORBIDDEN: &str = "aggregate forbidden for a single answer task";
}

/// Checks every pipeline invariant and the registry's structural rules.
///
/// Pure: the report depends only on the graph and the registry.
pub fn validate(g: &PipelineGraph, registry: &ModuleRegistry) -> Result<ValidityReport, GraphError> {
    let mut lookup: BTreeMap<&str, &ModuleDescriptor> = BTreeMap::new();
    for node in g.module_nodes() {
        let d = registry.get(node).ok_or_else(|| GraphError::UnknownModuleRef(node.to_string()))?;
        lookup.insert(node, d);
    }
    for e in g.edges() {
        for end in [&e.src, &e.dst] {
            if end != INPUT && end != OUTPUT && registry.get(end).is_none() {
                return Err(GraphError::UnknownModuleRef(end.clone()));
            }
        }
    }

    let mut report = ValidityReport::default();
    for pseudo in [INPUT, OUTPUT] {
        if !g.contains_node(pseudo) {
            report.push(rules::MISSING_PSEUDO_NODE, pseudo);
        }
    }

    let is_task = |n: &str| lookup.get(n).is_some_and(|d| d.kind.is_task());
    let edge_name = |e: &Edge| format!("{} {} -> {}", e.kind.as_str(), e.src, e.dst);

    for e in g.edges() {
        if !g.contains_node(&e.src) || !g.contains_node(&e.dst) {
            report.push(rules::DANGLING_EDGE, edge_name(e));
        }
        match e.kind {
            EdgeKind::TaskFlow => {
                let src_ok = e.src == INPUT || is_task(&e.src);
                let dst_ok = e.dst == OUTPUT || is_task(&e.dst);
                if !src_ok || !dst_ok {
                    report.push(rules::FLOW_ENDPOINT, edge_name(e));
                }
            }
            EdgeKind::ExecutorAssignment => {
                let src_ok = lookup.get(e.src.as_str()).is_some_and(|d| d.kind.is_executor());
                if !src_ok || !is_task(&e.dst) {
                    report.push(rules::ASSIGNMENT_ENDPOINT, edge_name(e));
                }
            }
            EdgeKind::ResourceAllocation => {
                let src_ok = lookup.get(e.src.as_str()).is_some_and(|d| d.kind.is_resource());
                if !src_ok || !is_task(&e.dst) {
                    report.push(rules::ALLOCATION_ENDPOINT, edge_name(e));
                }
            }
        }
    }

    if flow_topological_order(g, registry).is_none() {
        report.push(rules::FLOW_CYCLE, "task flow");
    }

    let tasks: Vec<&ModuleDescriptor> = g.tasks(registry);
    let flows = |pred: &dyn Fn(&Edge) -> bool| g.edges().filter(|e| e.kind == EdgeKind::TaskFlow && pred(e)).count();

    for t in &tasks {
        let executors: Vec<&Edge> =
            g.edges().filter(|e| e.kind == EdgeKind::ExecutorAssignment && e.dst == t.id).collect();
        if executors.len() != 1 {
            report.push(rules::EXECUTOR_COUNT, format!("{} has {}", t.id, executors.len()));
        }
        for e in executors {
            let accepted = lookup
                .get(e.src.as_str())
                .and_then(|d| d.kind.executor_kind())
                .is_some_and(|k| t.executor_requirements.contains(&k));
            if !accepted {
                report.push(rules::EXECUTOR_KIND, format!("{} by {}", t.id, e.src));
            }
        }
        let resources = g.edges().filter(|e| e.kind == EdgeKind::ResourceAllocation && e.dst == t.id).count();
        if resources != t.resource_requirements {
            report.push(rules::RESOURCES_UNMET, format!("{} has {} of {}", t.id, resources, t.resource_requirements));
        }
        let incoming = flows(&|e| e.dst == t.id);
        let outgoing = flows(&|e| e.src == t.id);
        if incoming == 0 || outgoing == 0 {
            report.push(rules::DISCONNECTED_TASK, t.id.clone());
        }
    }

    let terminals = flows(&|e| e.dst == OUTPUT && is_task(&e.src));
    if terminals != 1 {
        report.push(rules::TERMINAL_COUNT, format!("{terminals} terminal tasks"));
    }

    for node in g.module_nodes() {
        let d = lookup[node];
        if (d.kind.is_executor() || d.kind.is_resource()) && !g.edges().any(|e| e.src == node) {
            report.push(rules::UNUSED_MODULE, node);
        }
    }

    check_structural_rules(g, registry, &tasks, &mut report);
    Ok(report)
}

fn check_structural_rules(
    g: &PipelineGraph,
    registry: &ModuleRegistry,
    tasks: &[&ModuleDescriptor],
    report: &mut ValidityReport,
) {
    let rules_cfg = registry.rules;
    let answers: Vec<&&ModuleDescriptor> = tasks.iter().filter(|t| t.produces_answer).collect();
    let aggregators: Vec<&&ModuleDescriptor> = tasks.iter().filter(|t| !t.produces_answer).collect();
    let is_answer = |n: &str| answers.iter().any(|t| t.id == n);
    let is_aggregator = |n: &str| aggregators.iter().any(|t| t.id == n);

    if answers.is_empty() {
        report.push(rules::NO_ANSWER, "pipeline");
    }

    if rules_cfg.answer_tasks_parallel_only {
        for e in g.edges().filter(|e| e.kind == EdgeKind::TaskFlow) {
            let into_answer = is_answer(&e.dst) && e.src != INPUT;
            let out_of_answer = is_answer(&e.src) && !(e.dst == OUTPUT || is_aggregator(&e.dst));
            if into_answer || out_of_answer {
                report.push(rules::PARALLEL_ONLY, format!("{} -> {}", e.src, e.dst));
            }
            if is_aggregator(&e.dst) && !is_answer(&e.src) {
                report.push(rules::AGGREGATE_INPUTS, format!("{} -> {}", e.src, e.dst));
            }
        }
    }

    if rules_cfg.aggregate_required_if_multiple && answers.len() >= 2 {
        let feeds_all = |agg: &str| {
            answers.iter().all(|t| g.edges().any(|e| e.kind == EdgeKind::TaskFlow && e.src == t.id && e.dst == agg))
        };
        let terminal_aggregator = aggregators.iter().any(|a| {
            feeds_all(&a.id) && g.edges().any(|e| e.kind == EdgeKind::TaskFlow && e.src == a.id && e.dst == OUTPUT)
        });
        if aggregators.len() != 1 || !terminal_aggregator {
            report.push(rules::AGGREGATE_REQUIRED, format!("{} answer tasks", answers.len()));
        }
    }

    if rules_cfg.aggregate_forbidden_if_single && answers.len() == 1 && !aggregators.is_empty() {
        report.push(rules::AGGREGATE_FORBIDDEN, aggregators[0].id.clone());
    }
}

/// Topological order of the task-flow subgraph, ties broken by registry
/// order; `None` if the flow contains a cycle.
pub fn flow_topological_order(g: &PipelineGraph, registry: &ModuleRegistry) -> Option<Vec<String>> {
    let rank = |n: &str| match n {
        INPUT => (0, 0),
        OUTPUT => (2, 0),
        other => (1, registry.position(other).unwrap_or(usize::MAX)),
    };
    let flow: Vec<&Edge> = g.edges().filter(|e| e.kind == EdgeKind::TaskFlow).collect();
    let mut members: BTreeSet<&str> = BTreeSet::new();
    for e in &flow {
        members.insert(&e.src);
        members.insert(&e.dst);
    }
    let mut indegree: BTreeMap<&str, usize> = members.iter().map(|n| (*n, 0)).collect();
    for e in &flow {
        *indegree.get_mut(e.dst.as_str()).unwrap() += 1;
    }
    let mut ready: Vec<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
    let mut order = Vec::with_capacity(members.len());
    while !ready.is_empty() {
        ready.sort_by_key(|n| std::cmp::Reverse(rank(n)));
        let next = ready.pop().unwrap();
        order.push(next.to_string());
        for e in flow.iter().filter(|e| e.src == next) {
            let d = indegree.get_mut(e.dst.as_str()).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(&e.dst);
            }
        }
    }
    (order.len() == members.len()).then_some(order)
}

/// Builds the pipeline running `answer_tasks` in parallel, optionally merged
/// by `aggregator`, using the registry's default bindings.
pub fn build_pipeline(
    registry: &ModuleRegistry,
    answer_tasks: &[&str],
    aggregator: Option<&str>,
) -> Result<PipelineGraph, GraphError> {
    if answer_tasks.is_empty() {
        return Err(GraphError::Build("no answer task selected".into()));
    }
    let mut g = PipelineGraph::new();
    let bind = |g: &mut PipelineGraph, id: &str| -> Result<(), GraphError> {
        let task = registry
            .get(id)
            .filter(|d| d.kind.is_task())
            .ok_or_else(|| GraphError::UnknownModuleRef(id.to_string()))?;
        let exec =
            registry.default_executor(task).ok_or_else(|| GraphError::Build(format!("no executor for `{id}`")))?;
        g.add_edge(Edge::executor(&exec.id, id));
        let resources = registry
            .default_resources(task)
            .ok_or_else(|| GraphError::Build(format!("resources for `{id}` cannot be bound")))?;
        for r in resources {
            g.add_edge(Edge::resource(&r.id, id));
        }
        Ok(())
    };
    for t in answer_tasks {
        bind(&mut g, t)?;
        g.add_edge(Edge::flow(INPUT, t));
        g.add_edge(Edge::flow(t, aggregator.unwrap_or(OUTPUT)));
    }
    if let Some(agg) = aggregator {
        bind(&mut g, agg)?;
        g.add_edge(Edge::flow(agg, OUTPUT));
    }
    Ok(g)
}

/// Every valid pipeline under the registry's rules and default bindings,
/// sorted by [`ArmId`].
pub fn enumerate_valid(registry: &ModuleRegistry) -> Result<Vec<PipelineGraph>, GraphError> {
    enumerate_valid_capped(registry, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_valid_capped(registry: &ModuleRegistry, cap: usize) -> Result<Vec<PipelineGraph>, GraphError> {
    let rules_cfg = registry.rules;
    if !rules_cfg.answer_tasks_parallel_only {
        return Err(GraphError::UnsupportedRules);
    }
    let answers: Vec<&str> = registry.answer_tasks().iter().map(|d| d.id.as_str()).collect();
    let aggregators: Vec<&str> = registry.aggregator_tasks().iter().map(|d| d.id.as_str()).collect();
    let n = answers.len();
    if n >= 100 {
        return Err(GraphError::ExplosionGuard { count: u128::MAX, cap });
    }

    let singles_with_agg = if rules_cfg.aggregate_forbidden_if_single { 0 } else { aggregators.len() as u128 };
    let subsets = (1u128 << n) - 1;
    let multi = subsets - n as u128;
    let count = n as u128 * (1 + singles_with_agg) + multi * aggregators.len() as u128;
    if count > cap as u128 {
        return Err(GraphError::ExplosionGuard { count, cap });
    }

    let mut out = Vec::with_capacity(count as usize);
    for mask in 1u64..(1u64 << n) {
        let subset: Vec<&str> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| answers[i]).collect();
        if subset.len() == 1 {
            out.push(build_pipeline(registry, &subset, None)?);
            if !rules_cfg.aggregate_forbidden_if_single {
                for agg in &aggregators {
                    out.push(build_pipeline(registry, &subset, Some(agg))?);
                }
            }
        } else {
            for agg in &aggregators {
                out.push(build_pipeline(registry, &subset, Some(agg))?);
            }
        }
    }
    out.retain(|g| validate(g, registry).is_ok_and(|r| r.is_valid()));
    out.sort_by_cached_key(PipelineGraph::arm_id);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedTask {
    pub task: String,
    pub executor: String,
    pub resources: Vec<String>,
}

/// Execution schedule of a pipeline: answer tasks run in parallel, then an
/// optional aggregation stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionPlan {
    pub arm: ArmId,
    pub parallel: Vec<PlannedTask>,
    pub aggregate: Option<PlannedTask>,
    pub topological_order: Vec<String>,
}

pub fn terminal_plan(g: &PipelineGraph, registry: &ModuleRegistry) -> Result<ExecutionPlan, GraphError> {
    let report = validate(g, registry)?;
    if !report.is_valid() {
        return Err(GraphError::InvalidGraph(report.to_string()));
    }
    let order = flow_topological_order(g, registry).expect("validated graphs are acyclic");
    let planned = |id: &str| PlannedTask {
        task: id.to_string(),
        executor: g
            .edges()
            .find(|e| e.kind == EdgeKind::ExecutorAssignment && e.dst == id)
            .map(|e| e.src.clone())
            .unwrap_or_default(),
        resources: g
            .edges()
            .filter(|e| e.kind == EdgeKind::ResourceAllocation && e.dst == id)
            .map(|e| e.src.clone())
            .collect(),
    };
    let fed_by_input =
        |id: &str| g.edges().filter(|e| e.kind == EdgeKind::TaskFlow && e.dst == id).all(|e| e.src == INPUT);
    let mut parallel = Vec::new();
    let mut later = Vec::new();
    for t in g.tasks(registry) {
        if fed_by_input(&t.id) {
            parallel.push(planned(&t.id));
        } else {
            later.push(t);
        }
    }
    if later.len() > 1 {
        return Err(GraphError::InvalidGraph("pipeline has more than one stage after the parallel stage".into()));
    }
    let aggregate = later.first().map(|t| planned(&t.id));
    Ok(ExecutionPlan { arm: g.arm_id(), parallel, aggregate, topological_order: order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{ids, paper_qa_registry, ExecutorKind, ModuleDescriptor, StructuralRules, TaskKind};

    fn nor_graph() -> PipelineGraph {
        PipelineGraph::with_edges([
            Edge::flow(INPUT, ids::NOR),
            Edge::flow(ids::NOR, OUTPUT),
            Edge::executor(ids::LLM_AGENT, ids::NOR),
        ])
    }

    #[test]
    fn nor_pipeline_is_valid() {
        let report = validate(&nor_graph(), &paper_qa_registry()).unwrap();
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn oner_without_resource_is_flagged() {
        let g = PipelineGraph::with_edges([
            Edge::flow(INPUT, ids::ONER),
            Edge::flow(ids::ONER, OUTPUT),
            Edge::executor(ids::LLM_AGENT, ids::ONER),
        ]);
        let report = validate(&g, &paper_qa_registry()).unwrap();
        assert!(report.has(rules::RESOURCES_UNMET), "{report}");
    }

    #[test]
    fn chained_answer_tasks_are_flagged() {
        let g = PipelineGraph::with_edges([
            Edge::flow(INPUT, ids::NOR),
            Edge::flow(ids::NOR, ids::ONER),
            Edge::flow(ids::ONER, OUTPUT),
            Edge::executor(ids::LLM_AGENT, ids::NOR),
            Edge::executor(ids::LLM_AGENT, ids::ONER),
            Edge::resource(ids::WIKIPEDIA, ids::ONER),
        ]);
        let report = validate(&g, &paper_qa_registry()).unwrap();
        assert!(report.has(rules::PARALLEL_ONLY), "{report}");
    }

    #[test]
    fn unknown_module_is_an_error() {
        let g = PipelineGraph::with_edges([Edge::flow(INPUT, "Mystery")]);
        assert_eq!(validate(&g, &paper_qa_registry()), Err(GraphError::UnknownModuleRef("Mystery".into())));
    }

    #[test]
    fn cycles_are_flagged() {
        let reg = ModuleRegistry::from_descriptors(
            [
                ModuleDescriptor::task("a", "a", TaskKind::Standalone, &[ExecutorKind::Tool], 0, true),
                ModuleDescriptor::task("b", "b", TaskKind::Standalone, &[ExecutorKind::Tool], 0, true),
                ModuleDescriptor::executor("t", "t", ExecutorKind::Tool),
            ],
            StructuralRules {
                answer_tasks_parallel_only: false,
                aggregate_required_if_multiple: false,
                aggregate_forbidden_if_single: false,
            },
        )
        .unwrap();
        let g = PipelineGraph::with_edges([
            Edge::flow(INPUT, "a"),
            Edge::flow("a", "b"),
            Edge::flow("b", "a"),
            Edge::flow("b", OUTPUT),
            Edge::executor("t", "a"),
            Edge::executor("t", "b"),
        ]);
        let report = validate(&g, &reg).unwrap();
        assert!(report.has(rules::FLOW_CYCLE));
        assert_eq!(enumerate_valid(&reg), Err(GraphError::UnsupportedRules));
    }

    #[test]
    fn wrong_executor_kind_and_extra_executor() {
        let g = PipelineGraph::with_edges([
            Edge::flow(INPUT, ids::NOR),
            Edge::flow(ids::NOR, OUTPUT),
            Edge::executor(ids::RETRIEVER, ids::NOR),
        ]);
        let report = validate(&g, &paper_qa_registry()).unwrap();
        assert!(report.has(rules::EXECUTOR_KIND));

        let mut g = nor_graph();
        g.add_edge(Edge::executor(ids::AGGREGATOR, ids::NOR));
        assert!(validate(&g, &paper_qa_registry()).unwrap().has(rules::EXECUTOR_COUNT));
    }

    #[test]
    fn aggregate_rules() {
        let reg = paper_qa_registry();
        let single_with_agg = build_pipeline(&reg, &[ids::NOR], Some(ids::AGGREGATE)).unwrap();
        assert!(validate(&single_with_agg, &reg).unwrap().has(rules::AGGREGATE_FORBIDDEN));

        let pair_without_agg = build_pipeline(&reg, &[ids::NOR, ids::ONER], None).unwrap();
        let report = validate(&pair_without_agg, &reg).unwrap();
        assert!(report.has(rules::AGGREGATE_REQUIRED));
        assert!(report.has(rules::TERMINAL_COUNT));
    }

    #[test]
    fn validate_is_pure() {
        let reg = paper_qa_registry();
        let g = build_pipeline(&reg, &[ids::NOR, ids::ONER], None).unwrap();
        assert_eq!(validate(&g, &reg), validate(&g, &reg));
    }

    #[test]
    fn paper_registry_yields_seven_arms() {
        let reg = paper_qa_registry();
        let arms = enumerate_valid(&reg).unwrap();
        assert_eq!(arms.len(), 7);
        let mut labels: Vec<String> = arms.iter().map(|g| g.label(&reg)).collect();
        labels.sort();
        assert_eq!(
            labels,
            [
                "IRCoT",
                "NoR",
                "NoR+IRCoT+Aggregate",
                "NoR+OneR+Aggregate",
                "NoR+OneR+IRCoT+Aggregate",
                "OneR",
                "OneR+IRCoT+Aggregate",
            ]
        );
        let ids: BTreeSet<ArmId> = arms.iter().map(PipelineGraph::arm_id).collect();
        assert_eq!(ids.len(), 7);
        let sorted: Vec<ArmId> = arms.iter().map(PipelineGraph::arm_id).collect();
        assert!(sorted.windows(2).all(|w| w[0] < w[1]));
        for g in &arms {
            assert!(flow_topological_order(g, &reg).is_some());
        }
    }

    #[test]
    fn small_registries() {
        let only_nor = ModuleRegistry::from_descriptors(
            paper_qa_registry().iter().filter(|d| d.id != ids::ONER && d.id != ids::IRCOT).cloned(),
            StructuralRules::default(),
        )
        .unwrap();
        assert_eq!(enumerate_valid(&only_nor).unwrap().len(), 1);

        let two = ModuleRegistry::from_descriptors(
            paper_qa_registry().iter().filter(|d| d.id != ids::IRCOT).cloned(),
            StructuralRules::default(),
        )
        .unwrap();
        assert_eq!(enumerate_valid(&two).unwrap().len(), 3);
    }

    #[test]
    fn explosion_guard() {
        let reg = paper_qa_registry();
        assert_eq!(enumerate_valid_capped(&reg, 6), Err(GraphError::ExplosionGuard { count: 7, cap: 6 }));
    }

    #[test]
    fn arm_id_is_order_independent() {
        let edges = [
            Edge::flow(INPUT, ids::ONER),
            Edge::flow(ids::ONER, OUTPUT),
            Edge::executor(ids::LLM_AGENT, ids::ONER),
            Edge::resource(ids::WIKIPEDIA, ids::ONER),
        ];
        let forward = PipelineGraph::with_edges(edges.clone());
        let backward = PipelineGraph::with_edges(edges.into_iter().rev());
        assert_eq!(forward.arm_id(), backward.arm_id());
        assert_ne!(forward.arm_id(), nor_graph().arm_id());
    }

    #[test]
    fn plans() {
        let reg = paper_qa_registry();
        let plan = terminal_plan(&nor_graph(), &reg).unwrap();
        assert_eq!(plan.parallel.len(), 1);
        assert_eq!(plan.parallel[0].executor, ids::LLM_AGENT);
        assert!(plan.aggregate.is_none());

        let g = build_pipeline(&reg, &[ids::ONER, ids::IRCOT], Some(ids::AGGREGATE)).unwrap();
        let plan = terminal_plan(&g, &reg).unwrap();
        let tasks: Vec<&str> = plan.parallel.iter().map(|t| t.task.as_str()).collect();
        assert_eq!(tasks, [ids::ONER, ids::IRCOT]);
        assert_eq!(plan.parallel[1].resources, [ids::MULTIHOP]);
        assert_eq!(plan.aggregate.unwrap().executor, ids::AGGREGATOR);
        assert_eq!(plan.topological_order, [INPUT, ids::ONER, ids::IRCOT, ids::AGGREGATE, OUTPUT]);

        assert!(matches!(terminal_plan(&PipelineGraph::new(), &reg), Err(GraphError::InvalidGraph(_))));
    }

    #[test]
    fn text_form_round_trips() {
        let reg = paper_qa_registry();
        for g in enumerate_valid(&reg).unwrap() {
            let text = g.to_text();
            assert_eq!(PipelineGraph::from_text(&text).unwrap(), g);
            assert!(text.lines().all(|l| l.split('\t').count() == 3));
        }
        assert!(matches!(PipelineGraph::from_text("flow\tINPUT\n"), Err(GraphError::Parse { line: 1, .. })));
        assert!(PipelineGraph::from_text("pipe\ta\tb\n").is_err());
    }

    #[test]
    fn nor_text_form_is_stable() {
        assert_eq!(nor_graph().to_text(), "flow\tINPUT\tNoR\nflow\tNoR\tOUTPUT\nexecutor\tllm-agent\tNoR\n");
    }
}
