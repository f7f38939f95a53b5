//! Architecture rewrites: truncation at the border and removal of stem
//! downsampling, plus a side-by-side comparison of two graphs.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::border::{report_from_analysis, tail_from, BorderReport};
use crate::cost::{cost_report, CostError, CostReport};
use crate::graph::{validate, ArchGraph, InputSpec, LayerKind, Violation};
use crate::rf::{propagate_dag, RfError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransformError {
    #[error(transparent)]
    Rf(#[from] RfError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("num_classes must be at least 2, got {0}")]
    TooFewClasses(u64),
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("requested {requested} downsampling layers but the graph has {found}")]
    NotEnoughDownsampling { requested: usize, found: usize },
    #[error("rewrite leaves {} open outputs [{}]", .0.len(), .0.join(","))]
    Severed(Vec<String>),
    #[error("rewritten graph is invalid: {}", .0.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; "))]
    InvalidResult(Vec<Violation>),
    #[error("input specs differ: {a:?} vs {b:?}")]
    InputMismatch { a: InputSpec, b: InputSpec },
}

/// Border and cost reports of one graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub border: BorderReport,
    pub cost: CostReport,
}

impl Snapshot {
    pub fn of(graph: &ArchGraph) -> Result<Self, TransformError> {
        let rf = propagate_dag(graph)?;
        Ok(Self {
            border: report_from_analysis(&rf, graph, graph.input().resolution()),
            cost: cost_report(graph)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformDelta {
    pub pass: String,
    pub before: Snapshot,
    pub after: Snapshot,
    pub removed_node_ids: Vec<String>,
    pub modified_node_ids: Vec<String>,
    pub added_node_ids: Vec<String>,
}

impl TransformDelta {
    pub fn is_noop(&self) -> bool {
        self.removed_node_ids.is_empty()
            && self.modified_node_ids.is_empty()
            && self.added_node_ids.is_empty()
    }

    pub fn params_delta(&self) -> i128 {
        self.after.cost.total_params as i128 - self.before.cost.total_params as i128
    }

    pub fn macs_delta(&self) -> i128 {
        self.after.cost.total_macs as i128 - self.before.cost.total_macs as i128
    }
}

/// Mutable edit buffer over a graph's nodes and edges.
struct Edit {
    name: String,
    input: InputSpec,
    nodes: Vec<(String, LayerKind)>,
    edges: Vec<(String, String)>,
}

impl Edit {
    fn from(graph: &ArchGraph) -> Self {
        Self {
            name: graph.name().to_owned(),
            input: *graph.input(),
            nodes: graph
                .nodes()
                .iter()
                .map(|n| (n.id.clone(), n.kind.clone()))
                .collect(),
            edges: graph.edges().to_vec(),
        }
    }

    fn drop_nodes(&mut self, gone: &HashSet<String>) {
        self.nodes.retain(|(id, _)| !gone.contains(id));
        self.edges
            .retain(|(s, d)| !gone.contains(s) && !gone.contains(d));
    }

    /// Removes a single-input node, feeding its successors from its input.
    fn splice(&mut self, id: &str) {
        let pred = self
            .edges
            .iter()
            .find(|(_, d)| d == id)
            .map(|(s, _)| s.clone())
            .expect("spliced node has an input");
        self.edges.retain(|(s, d)| !(s == &pred && d == id));
        for edge in &mut self.edges {
            if edge.0 == id {
                edge.0 = pred.clone();
            }
        }
        self.nodes.retain(|(n, _)| n != id);
    }

    fn fresh_id(&self, base: &str) -> String {
        let taken: HashSet<&str> = self.nodes.iter().map(|(id, _)| id.as_str()).collect();
        std::iter::once(base.to_owned())
            .chain((2..).map(|k| format!("{base}_{k}")))
            .find(|c| !taken.contains(c.as_str()))
            .expect("unbounded id supply")
    }

    fn finish(self) -> Result<ArchGraph, TransformError> {
        let g = ArchGraph::new(self.name, self.input, self.nodes, self.edges);
        let violations = validate(&g);
        if violations.is_empty() {
            Ok(g)
        } else {
            Err(TransformError::InvalidResult(violations))
        }
    }
}

fn noop(graph: &ArchGraph, pass: &str, snap: Snapshot) -> (ArchGraph, TransformDelta) {
    (
        graph.clone(),
        TransformDelta {
            pass: pass.to_owned(),
            before: snap.clone(),
            after: snap,
            removed_node_ids: vec![],
            modified_node_ids: vec![],
            added_node_ids: vec![],
        },
    )
}

/// Replaces the unproductive tail and the old classifier with
/// GlobalAvgPool -> Dense(num_classes) -> Softmax.
///
/// Without a border the graph comes back unchanged with an empty delta.
pub fn truncate_at_border(
    graph: &ArchGraph,
    num_classes: u64,
) -> Result<(ArchGraph, TransformDelta), TransformError> {
    const PASS: &str = "truncate";
    if num_classes < 2 {
        return Err(TransformError::TooFewClasses(num_classes));
    }
    let rf = propagate_dag(graph)?;
    let report = report_from_analysis(&rf, graph, graph.input().resolution());
    let before = Snapshot {
        border: report.clone(),
        cost: cost_report(graph)?,
    };
    let tail = tail_from(&rf, graph, &report);
    if tail.is_empty() {
        return Ok(noop(graph, PASS, before));
    }

    // Old head: every head layer and everything downstream of one.
    let mut old_head: HashSet<&str> = HashSet::new();
    for ann in rf.iter() {
        let id = ann.node_id.as_str();
        let node = graph.node(id).expect("annotated node exists");
        if node.kind.is_head() || graph.predecessors(id).iter().any(|p| old_head.contains(p)) {
            old_head.insert(id);
        }
    }
    let mut gone: HashSet<String> = tail.iter().cloned().collect();
    gone.extend(old_head.into_iter().map(str::to_owned));

    let mut edit = Edit::from(graph);
    edit.drop_nodes(&gone);

    // Merges that lost all but one input collapse into plain wires.
    let mut modified = Vec::new();
    let mut spliced = Vec::new();
    for ann in rf.iter() {
        let id = &ann.node_id;
        if gone.contains(id) || !graph.node(id).is_some_and(|n| n.kind.is_merge()) {
            continue;
        }
        let before_deg = graph.predecessors(id).len();
        let after_deg = edit.edges.iter().filter(|(_, d)| d == id).count();
        if after_deg == 1 {
            edit.splice(id);
            spliced.push(id.clone());
        } else if after_deg < before_deg {
            modified.push(id.clone());
        }
    }

    // The head goes on the last open output; branches that fed only the
    // tail (e.g. the first conv of a residual block whose second conv is
    // unproductive) no longer reach it and are dropped as dead.
    let topo_pos: HashMap<&str, usize> = rf
        .iter()
        .enumerate()
        .map(|(k, a)| (a.node_id.as_str(), k))
        .collect();
    let attach = edit
        .nodes
        .iter()
        .map(|(id, _)| id)
        .filter(|id| !edit.edges.iter().any(|(s, _)| s == *id))
        .max_by_key(|id| topo_pos[id.as_str()])
        .cloned()
        .ok_or_else(|| TransformError::Severed(vec![]))?;
    let mut live: HashSet<String> = HashSet::from([attach.clone()]);
    let mut stack = vec![attach.clone()];
    while let Some(id) = stack.pop() {
        for (s, d) in &edit.edges {
            if *d == id && live.insert(s.clone()) {
                stack.push(s.clone());
            }
        }
    }
    let dead: HashSet<String> = edit
        .nodes
        .iter()
        .map(|(id, _)| id.clone())
        .filter(|id| !live.contains(id))
        .collect();
    edit.drop_nodes(&dead);
    gone.extend(dead);
    modified.retain(|id| !gone.contains(id));

    let gap = edit.fresh_id("head_gap");
    edit.nodes.push((gap.clone(), LayerKind::GlobalAvgPool));
    let fc = edit.fresh_id("head_fc");
    edit.nodes.push((fc.clone(), LayerKind::dense(num_classes)));
    let softmax = edit.fresh_id("head_softmax");
    edit.nodes.push((softmax.clone(), LayerKind::Softmax));
    edit.edges.push((attach, gap.clone()));
    edit.edges.push((gap.clone(), fc.clone()));
    edit.edges.push((fc.clone(), softmax.clone()));

    let out = edit.finish()?;
    let after = Snapshot::of(&out)?;
    if after.border.unproductive_count() != 0 {
        return Err(TransformError::InvalidResult(vec![]));
    }

    let mut removed: Vec<String> = graph
        .nodes()
        .iter()
        .map(|n| n.id.clone())
        .filter(|id| gone.contains(id) || spliced.contains(id))
        .collect();
    removed.sort_by_key(|id| graph.node(id).map(|n| n.declaration_index));
    Ok((
        out,
        TransformDelta {
            pass: PASS.to_owned(),
            before,
            after,
            removed_node_ids: removed,
            modified_node_ids: modified,
            added_node_ids: vec![gap, fc, softmax],
        },
    ))
}

/// Neutralizes the first `count` downsampling layers in topological order:
/// strided convs get stride 1, strided pools are removed.
pub fn remove_stem_downsampling(
    graph: &ArchGraph,
    count: usize,
) -> Result<(ArchGraph, TransformDelta), TransformError> {
    if count == 0 {
        return Err(TransformError::ZeroCount);
    }
    let before = Snapshot::of(graph)?;
    let order = crate::graph::topological_order(graph).map_err(RfError::from)?;
    let downsampling: Vec<&String> = order
        .iter()
        .filter(|id| {
            graph
                .node(id)
                .and_then(|n| n.kind.stride())
                .is_some_and(|s| s > 1)
        })
        .collect();
    if downsampling.len() < count {
        return Err(TransformError::NotEnoughDownsampling {
            requested: count,
            found: downsampling.len(),
        });
    }

    let mut edit = Edit::from(graph);
    let mut modified = Vec::new();
    let mut removed = Vec::new();
    for id in downsampling.into_iter().take(count) {
        let pos = edit
            .nodes
            .iter()
            .position(|(n, _)| n == id)
            .expect("node present");
        match &mut edit.nodes[pos].1 {
            LayerKind::Conv2d { stride, .. } => {
                *stride = 1;
                modified.push(id.clone());
            }
            LayerKind::Pool { .. } => {
                edit.splice(id);
                removed.push(id.clone());
            }
            _ => unreachable!("only convs and pools have strides"),
        }
    }

    let out = edit.finish()?;
    let after = Snapshot::of(&out)?;
    Ok((
        out,
        TransformDelta {
            pass: format!("remove-stem-downsampling:{count}"),
            before,
            after,
            removed_node_ids: removed,
            modified_node_ids: modified,
            added_node_ids: vec![],
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub a_name: String,
    pub b_name: String,
    pub a: Snapshot,
    pub b: Snapshot,
    pub params_delta: i128,
    pub macs_delta: i128,
    /// `b / a`; `None` when `a` is zero.
    pub params_ratio: Option<f64>,
    pub macs_ratio: Option<f64>,
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    (a != 0).then(|| b as f64 / a as f64)
}

/// Side-by-side border and cost reports; deltas are `b - a`.
pub fn compare(a: &ArchGraph, b: &ArchGraph) -> Result<Comparison, TransformError> {
    if a.input() != b.input() {
        return Err(TransformError::InputMismatch {
            a: *a.input(),
            b: *b.input(),
        });
    }
    let sa = Snapshot::of(a)?;
    let sb = Snapshot::of(b)?;
    Ok(Comparison {
        a_name: a.name().to_owned(),
        b_name: b.name().to_owned(),
        params_delta: sb.cost.total_params as i128 - sa.cost.total_params as i128,
        macs_delta: sb.cost.total_macs as i128 - sa.cost.total_macs as i128,
        params_ratio: ratio(sa.cost.total_params, sb.cost.total_params),
        macs_ratio: ratio(sa.cost.total_macs, sb.cost.total_macs),
        a: sa,
        b: sb,
    })
}

/// Nodes whose every Input-to-node path passes through one of `through`.
pub fn downstream_of_all(graph: &ArchGraph, through: &[&str]) -> HashSet<String> {
    let order = match crate::graph::topological_order(graph) {
        Ok(o) => o,
        Err(_) => return HashSet::new(),
    };
    let mut covered: HashMap<&str, bool> = HashMap::new();
    let mut out = HashSet::new();
    for id in &order {
        let preds = graph.predecessors(id);
        let c = !preds.is_empty()
            && preds
                .iter()
                .all(|p| through.contains(p) || covered.get(p).copied().unwrap_or(false));
        covered.insert(id.as_str(), c);
        if c {
            out.insert(id.clone());
        }
    }
    out
}
