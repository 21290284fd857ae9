//! Logical dataflow graphs, physical expansion, and failure-recovery regions.
//!
//! A logical graph of operators and edges is expanded into a physical
//! execution graph of per-subtask tasks and channels. Edge descriptors are
//! deduplicated: channels sharing a (strategy, partition-scheme) record
//! reference one shared descriptor. Regions are connected components of the
//! task graph over channels; since every streaming edge here is pipelined,
//! that is exactly the failure-recovery unit.

use crate::shuffle::{self, Dispatch, ShuffleStrategy};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Source,
    Filter,
    WindowCount,
    Lookup,
    Join,
    Sink,
}

impl OpKind {
    /// Operators eligible for active-standby replication must be
    /// deterministic; windowed aggregation over processing time is not.
    pub fn deterministic(&self) -> bool {
        !matches!(self, OpKind::WindowCount)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub id: String,
    pub kind: OpKind,
    pub parallelism: u32,
    #[serde(default = "one")]
    pub selectivity: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    pub strategy: ShuffleStrategy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogicalGraph {
    pub operators: Vec<OperatorSpec>,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph contains a cycle")]
    Cyclic,
    #[error("operator {0} has zero parallelism")]
    ZeroParallelism(String),
    #[error("unknown operator {0} referenced by an edge")]
    UnknownOperator(String),
    #[error("non-source operator {0} has no inbound edge")]
    MissingInbound(String),
    #[error("negative selectivity on operator {0}")]
    NegativeSelectivity(String),
    #[error("forward edge {from}->{to} requires equal parallelism")]
    ForwardMismatch { from: String, to: String },
    #[error("group_rescale edge {from}->{to}: groups must be in 1..=min(up, down)")]
    BadGroups { from: String, to: String },
    #[error("cluster too small: need {needed} slots, have {available}")]
    InsufficientSlots { needed: usize, available: usize },
}

/// (operator index, subtask index)
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskId {
    pub op: u32,
    pub sub: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelDef {
    pub producer: usize,
    pub consumer: usize,
    pub descriptor: usize,
    pub edge: usize,
}

/// Deduplicated edge descriptor: the partition scheme shared by every
/// channel of semantically identical edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EdgeDescriptor {
    pub strategy: ShuffleStrategy,
    pub up: u32,
    pub down: u32,
}

/// One out-edge of a producer task: the channels it may route to, ordered by
/// consumer subtask index.
#[derive(Debug, Clone)]
pub struct OutEdge {
    pub edge: usize,
    pub descriptor: usize,
    /// channel indices, one per reachable consumer
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ExecutionGraph {
    pub tasks: Vec<TaskId>,
    /// task index range per operator
    pub op_tasks: Vec<Range<usize>>,
    pub channels: Vec<ChannelDef>,
    pub edge_descriptors: Vec<EdgeDescriptor>,
    /// task -> TaskManager index
    pub placement: Vec<usize>,
    pub num_tms: usize,
    pub slots_per_tm: u32,
    pub task_inputs: Vec<Vec<usize>>,
    pub task_outputs: Vec<Vec<OutEdge>>,
}

impl LogicalGraph {
    pub fn operator_index(&self, id: &str) -> Option<usize> {
        self.operators.iter().position(|o| o.id == id)
    }

    /// Returns operator indices in topological order, or an error on cycles.
    pub fn topo_order(&self) -> Result<Vec<usize>, GraphError> {
        let n = self.operators.len();
        let mut indeg = vec![0usize; n];
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            let f = self
                .operator_index(&e.from)
                .ok_or_else(|| GraphError::UnknownOperator(e.from.clone()))?;
            let t = self
                .operator_index(&e.to)
                .ok_or_else(|| GraphError::UnknownOperator(e.to.clone()))?;
            adj[f].push(t);
            indeg[t] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        stack.reverse();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = stack.pop() {
            order.push(i);
            for &t in &adj[i] {
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    stack.push(t);
                }
            }
        }
        if order.len() != n {
            return Err(GraphError::Cyclic);
        }
        Ok(order)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for op in &self.operators {
            if op.parallelism == 0 {
                return Err(GraphError::ZeroParallelism(op.id.clone()));
            }
            if op.selectivity < 0.0 {
                return Err(GraphError::NegativeSelectivity(op.id.clone()));
            }
        }
        self.topo_order()?;
        for (i, op) in self.operators.iter().enumerate() {
            if op.kind != OpKind::Source {
                let has_in = self.edges.iter().any(|e| self.operator_index(&e.to) == Some(i));
                if !has_in {
                    return Err(GraphError::MissingInbound(op.id.clone()));
                }
            }
        }
        for e in &self.edges {
            let up = self.operators[self.operator_index(&e.from).unwrap()].parallelism;
            let down = self.operators[self.operator_index(&e.to).unwrap()].parallelism;
            match e.strategy {
                ShuffleStrategy::Forward if up != down => {
                    return Err(GraphError::ForwardMismatch {
                        from: e.from.clone(),
                        to: e.to.clone(),
                    });
                }
                ShuffleStrategy::GroupRescale { groups }
                    if groups == 0 || groups > up.min(down) =>
                {
                    return Err(GraphError::BadGroups {
                        from: e.from.clone(),
                        to: e.to.clone(),
                    });
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Consumer subtask indices reachable from one producer subtask of an edge.
pub fn edge_connectivity(strategy: &ShuffleStrategy, producer: u32, up: u32, down: u32) -> Vec<usize> {
    match strategy {
        ShuffleStrategy::Forward => vec![producer as usize],
        ShuffleStrategy::Rescale => shuffle::rescale_range(producer, up, down),
        ShuffleStrategy::GroupRescale { groups } => {
            shuffle::group_members(producer, up, down, *groups)
        }
        _ => (0..down as usize).collect(),
    }
}

/// Expands a logical graph to a physical execution graph on exactly as many
/// TaskManagers as the task count requires.
pub fn expand(logical: &LogicalGraph, slots_per_tm: u32) -> Result<ExecutionGraph, GraphError> {
    let total: usize = logical.operators.iter().map(|o| o.parallelism as usize).sum();
    let tms = total.div_ceil(slots_per_tm.max(1) as usize);
    expand_on(logical, slots_per_tm, tms)
}

/// Expands onto a fixed TaskManager pool. Placement fills TMs slot-first in
/// task order, which is deterministic for a given graph.
pub fn expand_on(
    logical: &LogicalGraph,
    slots_per_tm: u32,
    num_tms: usize,
) -> Result<ExecutionGraph, GraphError> {
    logical.validate()?;
    let slots_per_tm = slots_per_tm.max(1);

    let mut tasks = Vec::new();
    let mut op_tasks = Vec::new();
    for (oi, op) in logical.operators.iter().enumerate() {
        let start = tasks.len();
        for sub in 0..op.parallelism {
            tasks.push(TaskId { op: oi as u32, sub });
        }
        op_tasks.push(start..tasks.len());
    }

    let available = num_tms * slots_per_tm as usize;
    if tasks.len() > available {
        return Err(GraphError::InsufficientSlots { needed: tasks.len(), available });
    }
    let placement: Vec<usize> = (0..tasks.len()).map(|i| i / slots_per_tm as usize).collect();

    let mut descriptors: Vec<EdgeDescriptor> = Vec::new();
    let mut desc_index: HashMap<EdgeDescriptor, usize> = HashMap::new();
    let mut channels: Vec<ChannelDef> = Vec::new();
    let mut task_inputs: Vec<Vec<usize>> = vec![Vec::new(); tasks.len()];
    let mut task_outputs: Vec<Vec<OutEdge>> = vec![Vec::new(); tasks.len()];

    for (ei, e) in logical.edges.iter().enumerate() {
        let from = logical.operator_index(&e.from).unwrap();
        let to = logical.operator_index(&e.to).unwrap();
        let up = logical.operators[from].parallelism;
        let down = logical.operators[to].parallelism;
        let desc = EdgeDescriptor { strategy: e.strategy, up, down };
        let di = *desc_index.entry(desc.clone()).or_insert_with(|| {
            descriptors.push(desc);
            descriptors.len() - 1
        });
        for p in 0..up {
            let ptask = op_tasks[from].start + p as usize;
            let mut out = OutEdge { edge: ei, descriptor: di, channels: Vec::new() };
            for c in edge_connectivity(&e.strategy, p, up, down) {
                let ctask = op_tasks[to].start + c;
                let ci = channels.len();
                channels.push(ChannelDef { producer: ptask, consumer: ctask, descriptor: di, edge: ei });
                task_inputs[ctask].push(ci);
                out.channels.push(ci);
            }
            task_outputs[ptask].push(out);
        }
    }

    Ok(ExecutionGraph {
        tasks,
        op_tasks,
        channels,
        edge_descriptors: descriptors,
        placement,
        num_tms,
        slots_per_tm,
        task_inputs,
        task_outputs,
    })
}

/// Disjoint failure-recovery regions plus the total task-to-region map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionPartition {
    pub regions: Vec<Vec<usize>>,
    pub task_to_region: Vec<usize>,
}

impl RegionPartition {
    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }
}

/// Regions are connected components of the task graph over channels,
/// enumerated in order of their smallest task index so the partition is
/// independent of channel ordering.
pub fn derive_regions(exec: &ExecutionGraph) -> RegionPartition {
    let n = exec.tasks.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for ch in &exec.channels {
        adj[ch.producer].push(ch.consumer);
        adj[ch.consumer].push(ch.producer);
    }
    let mut region = vec![usize::MAX; n];
    let mut regions = Vec::new();
    for start in 0..n {
        if region[start] != usize::MAX {
            continue;
        }
        let r = regions.len();
        let mut members = vec![start];
        region[start] = r;
        let mut stack = vec![start];
        while let Some(t) = stack.pop() {
            for &u in &adj[t] {
                if region[u] == usize::MAX {
                    region[u] = r;
                    members.push(u);
                    stack.push(u);
                }
            }
        }
        members.sort_unstable();
        regions.push(members);
    }
    RegionPartition { regions, task_to_region: region }
}

/// Descriptor statistics after dedup: (distinct descriptors, channels per
/// descriptor reuse ratio).
pub fn dedup_edge_descriptors(exec: &ExecutionGraph) -> (usize, f64) {
    let d = exec.edge_descriptors.len();
    if d == 0 {
        return (0, 0.0);
    }
    (d, exec.channels.len() as f64 / d as f64)
}

// ---------------------------------------------------------------------------
// Job definition file (JSON)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobFile {
    pub operators: Vec<OperatorSpec>,
    pub edges: Vec<EdgeFileSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeFileSpec {
    pub from: String,
    pub to: String,
    pub strategy: String,
    #[serde(default)]
    pub params: EdgeParams,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EdgeParams {
    pub threshold: Option<u32>,
    pub k: Option<u32>,
    pub dispatch: Option<Dispatch>,
    pub groups: Option<u32>,
}

#[derive(Debug, Error)]
pub enum JobFileError {
    #[error("unknown shuffle strategy {0:?}")]
    UnknownStrategy(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Default backlog threshold: half the default channel capacity.
pub const DEFAULT_BACKLOG_THRESHOLD: u32 = 16;

pub fn strategy_from_name(name: &str, params: &EdgeParams) -> Result<ShuffleStrategy, JobFileError> {
    Ok(match name {
        "forward" => ShuffleStrategy::Forward,
        "keyhash" | "key_hash" | "hash" => ShuffleStrategy::KeyHash,
        "rebalance" => ShuffleStrategy::Rebalance,
        "rescale" => ShuffleStrategy::Rescale,
        "group_rescale" => ShuffleStrategy::GroupRescale { groups: params.groups.unwrap_or(1) },
        "backlog_aware" | "backlog" => ShuffleStrategy::BacklogAware {
            threshold: params.threshold.unwrap_or(DEFAULT_BACKLOG_THRESHOLD),
        },
        "weakhash" | "weak_hash" => ShuffleStrategy::WeakHash {
            k: params.k.unwrap_or(2),
            dispatch: params.dispatch.unwrap_or(Dispatch::LeastLoaded),
        },
        other => return Err(JobFileError::UnknownStrategy(other.to_string())),
    })
}

impl JobFile {
    pub fn to_logical(&self) -> Result<LogicalGraph, JobFileError> {
        let edges = self
            .edges
            .iter()
            .map(|e| {
                Ok(EdgeSpec {
                    from: e.from.clone(),
                    to: e.to.clone(),
                    strategy: strategy_from_name(&e.strategy, &e.params)?,
                })
            })
            .collect::<Result<Vec<_>, JobFileError>>()?;
        let g = LogicalGraph { operators: self.operators.clone(), edges };
        g.validate()?;
        Ok(g)
    }
}

// ---------------------------------------------------------------------------
// Convenience builders used by workloads and tests
// ---------------------------------------------------------------------------

pub fn chain(ops: Vec<(&str, OpKind, u32, f64)>, strategies: Vec<ShuffleStrategy>) -> LogicalGraph {
    assert_eq!(strategies.len() + 1, ops.len());
    let operators = ops
        .iter()
        .map(|(id, kind, p, sel)| OperatorSpec {
            id: id.to_string(),
            kind: *kind,
            parallelism: *p,
            selectivity: *sel,
        })
        .collect::<Vec<_>>();
    let edges = strategies
        .into_iter()
        .enumerate()
        .map(|(i, s)| EdgeSpec {
            from: operators[i].id.clone(),
            to: operators[i + 1].id.clone(),
            strategy: s,
        })
        .collect();
    LogicalGraph { operators, edges }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q2_like(p: u32) -> LogicalGraph {
        chain(
            vec![("src", OpKind::Source, p, 1.0), ("filter", OpKind::Filter, p, 0.8)],
            vec![ShuffleStrategy::Rebalance],
        )
    }

    #[test]
    fn q2_expands_to_2p_tasks() {
        let exec = expand(&q2_like(4), 2).unwrap();
        assert_eq!(exec.tasks.len(), 8);
        assert_eq!(exec.channels.len(), 16);
    }

    #[test]
    fn degenerate_single_task() {
        let g = LogicalGraph {
            operators: vec![OperatorSpec {
                id: "solo".into(),
                kind: OpKind::Source,
                parallelism: 1,
                selectivity: 1.0,
            }],
            edges: vec![],
        };
        let exec = expand(&g, 1).unwrap();
        assert_eq!(exec.tasks.len(), 1);
        assert!(exec.channels.is_empty());
    }

    #[test]
    fn rescale_connectivity_2_to_4() {
        let g = chain(
            vec![("a", OpKind::Source, 2, 1.0), ("b", OpKind::Sink, 4, 1.0)],
            vec![ShuffleStrategy::Rescale],
        );
        let exec = expand(&g, 8).unwrap();
        let consumers = |p: usize| -> Vec<usize> {
            exec.channels
                .iter()
                .filter(|c| c.producer == p)
                .map(|c| exec.tasks[c.consumer].sub as usize)
                .collect()
        };
        assert_eq!(consumers(0), vec![0, 1]);
        assert_eq!(consumers(1), vec![2, 3]);
    }

    #[test]
    fn cyclic_graph_rejected() {
        let mut g = q2_like(2);
        g.edges.push(EdgeSpec {
            from: "filter".into(),
            to: "src".into(),
            strategy: ShuffleStrategy::Rebalance,
        });
        assert_eq!(expand(&g, 2).unwrap_err(), GraphError::Cyclic);
    }

    #[test]
    fn zero_parallelism_rejected() {
        let mut g = q2_like(2);
        g.operators[1].parallelism = 0;
        assert!(matches!(expand(&g, 2), Err(GraphError::ZeroParallelism(_))));
    }

    #[test]
    fn forward_chain_gives_n_regions() {
        let g = chain(
            vec![("src", OpKind::Source, 6, 1.0), ("sink", OpKind::Sink, 6, 1.0)],
            vec![ShuffleStrategy::Forward],
        );
        let exec = expand(&g, 2).unwrap();
        let regions = derive_regions(&exec);
        assert_eq!(regions.num_regions(), 6);
        for r in &regions.regions {
            assert_eq!(r.len(), 2);
        }
    }

    #[test]
    fn all_to_all_single_region() {
        let exec = expand(&q2_like(4), 2).unwrap();
        assert_eq!(derive_regions(&exec).num_regions(), 1);
    }

    #[test]
    fn group_rescale_g_regions() {
        let g = chain(
            vec![("src", OpKind::Source, 8, 1.0), ("sink", OpKind::Sink, 8, 1.0)],
            vec![ShuffleStrategy::GroupRescale { groups: 4 }],
        );
        let exec = expand(&g, 2).unwrap();
        assert_eq!(derive_regions(&exec).num_regions(), 4);
    }

    #[test]
    fn dedup_all_to_all() {
        let g = chain(
            vec![("src", OpKind::Source, 4, 1.0), ("sink", OpKind::Sink, 4, 1.0)],
            vec![ShuffleStrategy::Rebalance],
        );
        let exec = expand(&g, 2).unwrap();
        let (count, ratio) = dedup_edge_descriptors(&exec);
        assert_eq!(count, 1);
        assert_eq!(ratio, 16.0);
    }

    #[test]
    fn dedup_single_channel() {
        let g = chain(
            vec![("src", OpKind::Source, 1, 1.0), ("sink", OpKind::Sink, 1, 1.0)],
            vec![ShuffleStrategy::Forward],
        );
        let exec = expand(&g, 2).unwrap();
        assert_eq!(dedup_edge_descriptors(&exec), (1, 1.0));
    }

    #[test]
    fn dedup_distinct_strategies() {
        let operators = vec![
            OperatorSpec { id: "s".into(), kind: OpKind::Source, parallelism: 2, selectivity: 1.0 },
            OperatorSpec { id: "a".into(), kind: OpKind::Lookup, parallelism: 2, selectivity: 1.0 },
            OperatorSpec { id: "b".into(), kind: OpKind::Sink, parallelism: 2, selectivity: 1.0 },
        ];
        let edges = vec![
            EdgeSpec { from: "s".into(), to: "a".into(), strategy: ShuffleStrategy::Rebalance },
            EdgeSpec { from: "a".into(), to: "b".into(), strategy: ShuffleStrategy::KeyHash },
        ];
        let exec = expand(&LogicalGraph { operators, edges }, 2).unwrap();
        assert_eq!(exec.edge_descriptors.len(), 2);
    }

    #[test]
    fn job_file_round_trip() {
        let json = r#"{
            "operators": [
                {"id":"src","kind":"source","parallelism":2},
                {"id":"snk","kind":"sink","parallelism":4}
            ],
            "edges": [
                {"from":"src","to":"snk","strategy":"backlog_aware","params":{"threshold":8}}
            ]
        }"#;
        let jf: JobFile = serde_json::from_str(json).unwrap();
        let g = jf.to_logical().unwrap();
        assert_eq!(g.edges[0].strategy, ShuffleStrategy::BacklogAware { threshold: 8 });
    }
}
