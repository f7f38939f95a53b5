//! Architecture DAG: layer vocabulary, validation and deterministic orderings.
//!
//! An [`ArchGraph`] is a plain value. Construction never fails; [`validate`]
//! reports every structural problem as data, and the analysis passes refuse
//! to run on graphs that do not validate.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Spatial size and channel count of the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputSpec {
    pub height: u64,
    pub width: u64,
    pub channels: u64,
}

impl InputSpec {
    pub fn new(height: u64, width: u64, channels: u64) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn square(size: u64, channels: u64) -> Self {
        Self::new(size, size, channels)
    }

    /// `max(height, width)`: the resolution the border rule compares against.
    pub fn resolution(&self) -> u64 {
        self.height.max(self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Output size is `ceil(input / stride)`.
    Same,
    Valid,
    Explicit(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolMode {
    Max,
    Avg,
}

impl PoolMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PoolMode::Max => "max",
            PoolMode::Avg => "avg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttentionVariant {
    /// Squeeze-and-excitation channel attention.
    Se,
    Spatial,
    /// Channel attention followed by spatial attention.
    Cbam,
}

impl AttentionVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttentionVariant::Se => "se",
            AttentionVariant::Spatial => "spatial",
            AttentionVariant::Cbam => "cbam",
        }
    }
}

/// Layer vocabulary. Kernels, strides and dilations are square and stored as
/// scalars.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Input,
    Conv2d {
        kernel: u64,
        stride: u64,
        dilation: u64,
        padding: Padding,
        filters: u64,
        bias: bool,
    },
    Pool {
        mode: PoolMode,
        kernel: u64,
        stride: u64,
        padding: u64,
    },
    GlobalAvgPool,
    Dense {
        units: u64,
        bias: bool,
    },
    Add,
    Concat,
    BatchNorm,
    Activation {
        name: String,
    },
    Attention {
        variant: AttentionVariant,
    },
    Softmax,
}

impl LayerKind {
    /// Same-padded, undilated convolution with bias.
    pub fn conv(kernel: u64, stride: u64, filters: u64) -> Self {
        LayerKind::Conv2d {
            kernel,
            stride,
            dilation: 1,
            padding: Padding::Same,
            filters,
            bias: true,
        }
    }

    pub fn max_pool(kernel: u64, stride: u64) -> Self {
        LayerKind::Pool {
            mode: PoolMode::Max,
            kernel,
            stride,
            padding: 0,
        }
    }

    pub fn relu() -> Self {
        LayerKind::Activation {
            name: "relu".to_owned(),
        }
    }

    pub fn dense(units: u64) -> Self {
        LayerKind::Dense { units, bias: true }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerKind::Conv2d { .. })
    }

    pub fn is_merge(&self) -> bool {
        matches!(self, LayerKind::Add | LayerKind::Concat)
    }

    /// Classifier-head kinds, exempt from border classification.
    pub fn is_head(&self) -> bool {
        matches!(
            self,
            LayerKind::GlobalAvgPool | LayerKind::Dense { .. } | LayerKind::Softmax
        )
    }

    /// Stride of a spatially sliding layer, `None` for everything else.
    pub fn stride(&self) -> Option<u64> {
        match self {
            LayerKind::Conv2d { stride, .. } | LayerKind::Pool { stride, .. } => Some(*stride),
            _ => None,
        }
    }

    /// Short lowercase tag, identical to the `kind` key of the JSON format.
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::Pool { .. } => "pool",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Dense { .. } => "dense",
            LayerKind::Add => "add",
            LayerKind::Concat => "concat",
            LayerKind::BatchNorm => "batch_norm",
            LayerKind::Activation { .. } => "activation",
            LayerKind::Attention { .. } => "attention",
            LayerKind::Softmax => "softmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerNode {
    pub id: String,
    pub kind: LayerKind,
    pub declaration_index: usize,
}

/// Immutable architecture DAG with one input and one sink.
///
/// Nodes are stored in declaration order; `declaration_index` is the position
/// in that order. Adjacency is precomputed at construction and edges naming
/// unknown ids are kept in `edges` (so [`validate`] can report them) but left
/// out of the adjacency lists.
#[derive(Debug, Clone)]
pub struct ArchGraph {
    name: String,
    input: InputSpec,
    nodes: Vec<LayerNode>,
    edges: Vec<(String, String)>,
    index: HashMap<String, usize>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

impl PartialEq for ArchGraph {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.input == other.input
            && self.nodes == other.nodes
            && self.edges == other.edges
    }
}

impl Eq for ArchGraph {}

impl ArchGraph {
    /// Builds a graph from nodes in declaration order. Declaration indices are
    /// reassigned from the vector positions.
    pub fn new(
        name: impl Into<String>,
        input: InputSpec,
        kinds: Vec<(String, LayerKind)>,
        edges: Vec<(String, String)>,
    ) -> Self {
        let nodes: Vec<LayerNode> = kinds
            .into_iter()
            .enumerate()
            .map(|(declaration_index, (id, kind))| LayerNode {
                id,
                kind,
                declaration_index,
            })
            .collect();
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            index.entry(node.id.clone()).or_insert(i);
        }
        let mut preds = vec![Vec::new(); nodes.len()];
        let mut succs = vec![Vec::new(); nodes.len()];
        for (src, dst) in &edges {
            if let (Some(&s), Some(&d)) = (index.get(src), index.get(dst)) {
                succs[s].push(d);
                preds[d].push(s);
            }
        }
        Self {
            name: name.into(),
            input,
            nodes,
            edges,
            index,
            preds,
            succs,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input(&self) -> &InputSpec {
        &self.input
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&LayerNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub(crate) fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub(crate) fn preds_of(&self, ix: usize) -> &[usize] {
        &self.preds[ix]
    }

    pub fn predecessors(&self, id: &str) -> Vec<&str> {
        self.position(id)
            .map(|ix| {
                self.preds[ix]
                    .iter()
                    .map(|&p| self.nodes[p].id.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn successors(&self, id: &str) -> Vec<&str> {
        self.position(id)
            .map(|ix| {
                self.succs[ix]
                    .iter()
                    .map(|&s| self.nodes[s].id.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Same graph under a different input size.
    pub fn with_input(&self, input: InputSpec) -> Self {
        let mut g = self.clone();
        g.input = input;
        g
    }

    /// Same graph under a different name.
    pub fn with_name(&self, name: impl Into<String>) -> Self {
        let mut g = self.clone();
        g.name = name.into();
        g
    }

    pub(crate) fn topo_ix(&self) -> Result<Vec<usize>, GraphError> {
        ensure_valid(self)?;
        Ok(kahn(self).0)
    }
}

/// Incremental builder used by the zoo and by tests.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    name: String,
    input: InputSpec,
    nodes: Vec<(String, LayerKind)>,
    edges: Vec<(String, String)>,
    last: Option<String>,
}

impl GraphBuilder {
    /// Starts a graph whose first node is an `Input` called `"input"`.
    pub fn new(name: impl Into<String>, input: InputSpec) -> Self {
        Self {
            name: name.into(),
            input,
            nodes: vec![("input".to_owned(), LayerKind::Input)],
            edges: Vec::new(),
            last: Some("input".to_owned()),
        }
    }

    /// Adds a node without wiring it.
    pub fn add(&mut self, id: impl Into<String>, kind: LayerKind) -> String {
        let id = id.into();
        self.nodes.push((id.clone(), kind));
        self.last = Some(id.clone());
        id
    }

    pub fn connect(&mut self, src: impl Into<String>, dst: impl Into<String>) -> &mut Self {
        self.edges.push((src.into(), dst.into()));
        self
    }

    /// Adds a node fed by the most recently added node.
    pub fn then(&mut self, id: impl Into<String>, kind: LayerKind) -> String {
        let prev = self.last.clone();
        let id = self.add(id, kind);
        if let Some(prev) = prev {
            self.edges.push((prev, id.clone()));
        }
        id
    }

    /// Adds a node fed by `src`.
    pub fn after(&mut self, src: &str, id: impl Into<String>, kind: LayerKind) -> String {
        let id = self.add(id, kind);
        self.edges.push((src.to_owned(), id.clone()));
        id
    }

    /// Adds a merge node fed by every id in `srcs`, in order.
    pub fn merge(&mut self, srcs: &[&str], id: impl Into<String>, kind: LayerKind) -> String {
        let id = self.add(id, kind);
        for src in srcs {
            self.edges.push(((*src).to_owned(), id.clone()));
        }
        id
    }

    pub fn last(&self) -> Option<&str> {
        self.last.as_deref()
    }

    pub fn build(self) -> ArchGraph {
        ArchGraph::new(self.name, self.input, self.nodes, self.edges)
    }
}

/// Builds a validated-shape chain `Input -> layers[0] -> layers[1] -> ...` with
/// ids `l0`, `l1`, ...
pub fn chain(name: &str, input: InputSpec, layers: &[LayerKind]) -> ArchGraph {
    let mut b = GraphBuilder::new(name, input);
    for (i, kind) in layers.iter().enumerate() {
        b.then(format!("l{i}"), kind.clone());
    }
    b.build()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    InvalidInputSpec,
    InvalidParameter,
    DuplicateId,
    UnknownNode,
    DuplicateEdge,
    Cycle,
    InputCount,
    InputHasPredecessors,
    SinkCount,
    MergeArity,
    InDegree,
    Unreachable,
    DeadEnd,
    ChannelMismatch,
}

/// One failed graph invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: Rule,
    /// Offending node ids (or edge endpoints).
    pub subjects: Vec<String>,
    pub message: String,
}

impl Violation {
    fn new(rule: Rule, subjects: Vec<String>, message: impl Into<String>) -> Self {
        Self {
            rule,
            subjects,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("invalid graph: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn ensure_valid(graph: &ArchGraph) -> Result<(), GraphError> {
    let violations = validate(graph);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(GraphError::Invalid(violations))
    }
}

/// Checks every graph invariant. An empty list means the graph is valid.
pub fn validate(graph: &ArchGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let input = graph.input();
    if input.height == 0 || input.width == 0 || input.channels == 0 {
        out.push(Violation::new(
            Rule::InvalidInputSpec,
            vec![],
            format!(
                "input spec {}x{}x{} has a zero dimension",
                input.height, input.width, input.channels
            ),
        ));
    }

    let mut seen = HashSet::new();
    for node in graph.nodes() {
        if !seen.insert(node.id.as_str()) {
            out.push(Violation::new(
                Rule::DuplicateId,
                vec![node.id.clone()],
                format!("duplicate node id `{}`", node.id),
            ));
        }
        if let Some(msg) = parameter_problem(&node.kind) {
            out.push(Violation::new(
                Rule::InvalidParameter,
                vec![node.id.clone()],
                format!("node `{}`: {msg}", node.id),
            ));
        }
    }

    let mut seen_edges = HashSet::new();
    for (src, dst) in graph.edges() {
        for end in [src, dst] {
            if graph.node(end).is_none() {
                out.push(Violation::new(
                    Rule::UnknownNode,
                    vec![src.clone(), dst.clone()],
                    format!("edge {src} -> {dst} references unknown node `{end}`"),
                ));
            }
        }
        if !seen_edges.insert((src.as_str(), dst.as_str())) {
            out.push(Violation::new(
                Rule::DuplicateEdge,
                vec![src.clone(), dst.clone()],
                format!("duplicate edge {src} -> {dst}"),
            ));
        }
    }

    let n = graph.len();
    let (_, leftover) = kahn(graph);
    let acyclic = leftover.is_empty();
    for scc in cyclic_components(graph) {
        let ids: Vec<String> = scc.iter().map(|&i| graph.nodes[i].id.clone()).collect();
        out.push(Violation::new(
            Rule::Cycle,
            ids.clone(),
            format!("cycle through {{{}}}", ids.join(",")),
        ));
    }

    let inputs: Vec<usize> = (0..n)
        .filter(|&i| graph.nodes[i].kind == LayerKind::Input)
        .collect();
    if inputs.len() != 1 {
        out.push(Violation::new(
            Rule::InputCount,
            inputs.iter().map(|&i| graph.nodes[i].id.clone()).collect(),
            format!("expected exactly one input node, found {}", inputs.len()),
        ));
    }
    for &i in &inputs {
        if !graph.preds[i].is_empty() {
            out.push(Violation::new(
                Rule::InputHasPredecessors,
                vec![graph.nodes[i].id.clone()],
                format!("input node `{}` has incoming edges", graph.nodes[i].id),
            ));
        }
    }

    let sinks: Vec<usize> = (0..n).filter(|&i| graph.succs[i].is_empty()).collect();
    if sinks.len() != 1 {
        let ids: Vec<String> = sinks.iter().map(|&i| graph.nodes[i].id.clone()).collect();
        out.push(Violation::new(
            Rule::SinkCount,
            ids.clone(),
            format!(
                "expected exactly one sink, found {} [{}]",
                ids.len(),
                ids.join(",")
            ),
        ));
    }

    for (i, node) in graph.nodes.iter().enumerate() {
        let deg = graph.preds[i].len();
        match node.kind {
            LayerKind::Input => {}
            LayerKind::Add | LayerKind::Concat if deg < 2 => {
                out.push(Violation::new(
                    Rule::MergeArity,
                    vec![node.id.clone()],
                    format!("merge arity < 2 at `{}` ({deg} inputs)", node.id),
                ));
            }
            LayerKind::Add | LayerKind::Concat => {}
            _ if deg != 1 => {
                out.push(Violation::new(
                    Rule::InDegree,
                    vec![node.id.clone()],
                    format!("node `{}` must have exactly one input, has {deg}", node.id),
                ));
            }
            _ => {}
        }
    }

    if let [root] = inputs[..] {
        let reach = reachable(n, root, |i| &graph.succs[i]);
        for (i, node) in graph.nodes.iter().enumerate() {
            if !reach[i] {
                out.push(Violation::new(
                    Rule::Unreachable,
                    vec![node.id.clone()],
                    format!("node `{}` is not reachable from the input", node.id),
                ));
            }
        }
    }
    if let [sink] = sinks[..] {
        let coreach = reachable(n, sink, |i| &graph.preds[i]);
        for (i, node) in graph.nodes.iter().enumerate() {
            if !coreach[i] {
                out.push(Violation::new(
                    Rule::DeadEnd,
                    vec![node.id.clone()],
                    format!(
                        "sink `{}` is not reachable from `{}`",
                        graph.nodes[sink].id, node.id
                    ),
                ));
            }
        }
    }

    if acyclic {
        out.extend(channel_violations(graph));
    }
    out
}

fn parameter_problem(kind: &LayerKind) -> Option<String> {
    match kind {
        LayerKind::Conv2d {
            kernel,
            stride,
            dilation,
            filters,
            ..
        } => {
            if *kernel == 0 || *stride == 0 || *dilation == 0 || *filters == 0 {
                Some("conv kernel, stride, dilation and filters must be positive".into())
            } else {
                None
            }
        }
        LayerKind::Pool { kernel, stride, .. } if *kernel == 0 || *stride == 0 => {
            Some("pool kernel and stride must be positive".into())
        }
        LayerKind::Dense { units, .. } if *units == 0 => {
            Some("dense units must be positive".into())
        }
        _ => None,
    }
}

fn reachable<'a>(n: usize, start: usize, next: impl Fn(usize) -> &'a Vec<usize>) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(i) = stack.pop() {
        for &j in next(i) {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

/// Kahn's algorithm with ties broken by declaration index. Returns the order
/// and the nodes left over (non-empty iff the graph has a cycle).
fn kahn(graph: &ArchGraph) -> (Vec<usize>, Vec<usize>) {
    let n = graph.len();
    let mut indeg: Vec<usize> = graph.preds.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &s in &graph.succs[i] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.push(Reverse(s));
            }
        }
    }
    let leftover = (0..n).filter(|&i| indeg[i] > 0).collect();
    (order, leftover)
}

/// Strongly connected components that contain a cycle, each sorted by
/// declaration index.
fn cyclic_components(graph: &ArchGraph) -> Vec<Vec<usize>> {
    struct Tarjan<'g> {
        g: &'g ArchGraph,
        counter: usize,
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        out: Vec<Vec<usize>>,
    }

    impl Tarjan<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.counter);
            self.low[v] = self.counter;
            self.counter += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for &w in &self.g.succs[v] {
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                    Some(_) => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = self.stack.pop().expect("tarjan stack underflow");
                    self.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                let self_loop = comp.len() == 1 && self.g.succs[v].contains(&v);
                if comp.len() > 1 || self_loop {
                    comp.sort_unstable();
                    self.out.push(comp);
                }
            }
        }
    }

    let n = graph.len();
    let mut t = Tarjan {
        g: graph,
        counter: 0,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        out: Vec::new(),
    };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    t.out.sort();
    t.out
}

/// Channel count leaving each node; `None` where it cannot be inferred.
pub(crate) fn infer_channels(graph: &ArchGraph, order: &[usize]) -> Vec<Option<u64>> {
    let mut ch: Vec<Option<u64>> = vec![None; graph.len()];
    for &i in order {
        let first = graph.preds[i].first().and_then(|&p| ch[p]);
        ch[i] = match &graph.nodes[i].kind {
            LayerKind::Input => Some(graph.input.channels),
            LayerKind::Conv2d { filters, .. } => Some(*filters),
            LayerKind::Dense { units, .. } => Some(*units),
            LayerKind::Concat => graph.preds[i].iter().map(|&p| ch[p]).sum::<Option<u64>>(),
            _ => first,
        };
    }
    ch
}

fn channel_violations(graph: &ArchGraph) -> Vec<Violation> {
    let (order, _) = kahn(graph);
    let ch = infer_channels(graph, &order);
    let mut out = Vec::new();
    for &i in &order {
        if graph.nodes[i].kind != LayerKind::Add {
            continue;
        }
        let counts: Vec<Option<u64>> = graph.preds[i].iter().map(|&p| ch[p]).collect();
        let known: Vec<u64> = counts.iter().flatten().copied().collect();
        if known.windows(2).any(|w| w[0] != w[1]) {
            let listing: Vec<String> = graph.preds[i]
                .iter()
                .zip(&known)
                .map(|(&p, c)| format!("{}={c}", graph.nodes[p].id))
                .collect();
            out.push(Violation::new(
                Rule::ChannelMismatch,
                vec![graph.nodes[i].id.clone()],
                format!(
                    "add `{}` merges unequal channel counts [{}]",
                    graph.nodes[i].id,
                    listing.join(", ")
                ),
            ));
        }
    }
    out
}

/// Node ids in a deterministic topological order: ties between incomparable
/// nodes go to the lower declaration index.
pub fn topological_order(graph: &ArchGraph) -> Result<Vec<String>, GraphError> {
    Ok(graph
        .topo_ix()?
        .into_iter()
        .map(|i| graph.nodes[i].id.clone())
        .collect())
}

/// 1-based ordinals of every `Conv2d` node (projection convs included), in
/// topological order.
pub fn conv_index(graph: &ArchGraph) -> Result<BTreeMap<String, usize>, GraphError> {
    let order = graph.topo_ix()?;
    Ok(order
        .into_iter()
        .filter(|&i| graph.nodes[i].kind.is_conv())
        .enumerate()
        .map(|(k, i)| (graph.nodes[i].id.clone(), k + 1))
        .collect())
}

/// Conv node ids listed by ordinal (`result[0]` is conv1).
pub fn convs_in_order(graph: &ArchGraph) -> Result<Vec<String>, GraphError> {
    let order = graph.topo_ix()?;
    Ok(order
        .into_iter()
        .filter(|&i| graph.nodes[i].kind.is_conv())
        .map(|i| graph.nodes[i].id.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input() -> InputSpec {
        InputSpec::square(32, 3)
    }

    fn diamond() -> ArchGraph {
        let mut b = GraphBuilder::new("diamond", input());
        b.after("input", "a", LayerKind::conv(3, 1, 8));
        b.after("input", "b", LayerKind::conv(7, 1, 8));
        b.merge(&["a", "b"], "add", LayerKind::Add);
        b.build()
    }

    #[test]
    fn minimal_chain_is_valid() {
        let g = chain(
            "mini",
            input(),
            &[LayerKind::conv(3, 1, 16), LayerKind::dense(10)],
        );
        assert!(validate(&g).is_empty(), "{:?}", validate(&g));
    }

    #[test]
    fn cycle_is_reported_with_members() {
        let g = ArchGraph::new(
            "cyc",
            input(),
            vec![
                ("in".into(), LayerKind::Input),
                ("A".into(), LayerKind::relu()),
                ("B".into(), LayerKind::Add),
                ("out".into(), LayerKind::Softmax),
            ],
            vec![
                ("in".into(), "B".into()),
                ("B".into(), "A".into()),
                ("A".into(), "B".into()),
                ("B".into(), "out".into()),
            ],
        );
        let v = validate(&g);
        let cyc: Vec<_> = v.iter().filter(|v| v.rule == Rule::Cycle).collect();
        assert_eq!(cyc.len(), 1);
        assert_eq!(cyc[0].message, "cycle through {A,B}");
        assert!(topological_order(&g).is_err());
    }

    #[test]
    fn single_input_add_violates_arity() {
        let mut b = GraphBuilder::new("bad", input());
        b.then("c", LayerKind::conv(3, 1, 8));
        b.then("add", LayerKind::Add);
        let v = validate(&b.build());
        assert!(v
            .iter()
            .any(|v| v.rule == Rule::MergeArity && v.message.contains("merge arity < 2")));
    }

    #[test]
    fn add_channel_mismatch_is_reported() {
        let mut b = GraphBuilder::new("bad", input());
        b.after("input", "a", LayerKind::conv(3, 1, 8));
        b.after("input", "b", LayerKind::conv(3, 1, 16));
        b.merge(&["a", "b"], "add", LayerKind::Add);
        let v = validate(&b.build());
        assert!(v.iter().any(|v| v.rule == Rule::ChannelMismatch));
    }

    #[test]
    fn concat_accepts_unequal_channels() {
        let mut b = GraphBuilder::new("cat", input());
        b.after("input", "a", LayerKind::conv(3, 1, 8));
        b.after("input", "b", LayerKind::conv(3, 1, 16));
        b.merge(&["a", "b"], "cat", LayerKind::Concat);
        assert!(validate(&b.build()).is_empty());
    }

    #[test]
    fn unknown_edge_endpoint_and_multiple_sinks() {
        let mut b = GraphBuilder::new("bad", input());
        b.then("a", LayerKind::relu());
        b.after("input", "b", LayerKind::relu());
        b.connect("a", "ghost");
        let v = validate(&b.build());
        assert!(v
            .iter()
            .any(|v| v.rule == Rule::UnknownNode && v.message.contains("ghost")));
        assert!(v.iter().any(|v| v.rule == Rule::SinkCount));
    }

    #[test]
    fn duplicate_ids_and_edges() {
        let g = ArchGraph::new(
            "dup",
            input(),
            vec![
                ("in".into(), LayerKind::Input),
                ("x".into(), LayerKind::relu()),
                ("x".into(), LayerKind::relu()),
            ],
            vec![("in".into(), "x".into()), ("in".into(), "x".into())],
        );
        let v = validate(&g);
        assert!(v.iter().any(|v| v.rule == Rule::DuplicateId));
        assert!(v.iter().any(|v| v.rule == Rule::DuplicateEdge));
    }

    #[test]
    fn zero_sized_input_and_parameters() {
        let g = chain("z", InputSpec::new(0, 4, 3), &[LayerKind::conv(0, 1, 8)]);
        let v = validate(&g);
        assert!(v.iter().any(|v| v.rule == Rule::InvalidInputSpec));
        assert!(v.iter().any(|v| v.rule == Rule::InvalidParameter));
    }

    #[test]
    fn chain_order_is_declaration_order() {
        let g = chain(
            "c",
            input(),
            &[
                LayerKind::conv(3, 1, 4),
                LayerKind::relu(),
                LayerKind::dense(2),
            ],
        );
        assert_eq!(topological_order(&g).unwrap(), ["input", "l0", "l1", "l2"]);
    }

    #[test]
    fn diamond_ties_follow_declaration() {
        assert_eq!(
            topological_order(&diamond()).unwrap(),
            ["input", "a", "b", "add"]
        );
        let mut b = GraphBuilder::new("d2", input());
        b.after("input", "b", LayerKind::conv(7, 1, 8));
        b.after("input", "a", LayerKind::conv(3, 1, 8));
        b.merge(&["a", "b"], "add", LayerKind::Add);
        assert_eq!(
            topological_order(&b.build()).unwrap(),
            ["input", "b", "a", "add"]
        );
    }

    #[test]
    fn conv_index_skips_other_layers() {
        let g = chain(
            "c",
            input(),
            &[
                LayerKind::conv(3, 1, 4),
                LayerKind::BatchNorm,
                LayerKind::relu(),
                LayerKind::conv(3, 1, 4),
            ],
        );
        let idx = conv_index(&g).unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(idx["l0"], 1);
        assert_eq!(idx["l3"], 2);
        let none = chain("n", input(), &[LayerKind::relu()]);
        assert!(conv_index(&none).unwrap().is_empty());
    }

    #[test]
    fn resolution_is_max_side() {
        assert_eq!(InputSpec::new(24, 40, 3).resolution(), 40);
    }
}
