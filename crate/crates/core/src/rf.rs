//! Receptive-field propagation.
//!
//! Along one path a sliding layer with effective kernel `k` and stride `s`
//! maps `(r, j)` to `(r + (k - 1) * j, j * s)`, where `j` is the product of
//! all strides seen so far. On a DAG the receptive field of a node depends on
//! the path taken, so [`propagate_dag`] keeps, per node, the Pareto frontiers
//! of `(r, j)` over all incoming paths. Every transfer is non-decreasing in
//! both coordinates, which makes dominated states irrelevant downstream: the
//! minimal frontier yields exact minima and the maximal frontier exact maxima.

use std::collections::HashMap;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::graph::{ArchGraph, GraphError, LayerKind};

/// Receptive field and jump along a single path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RfState {
    pub r: u64,
    pub j: u64,
}

impl RfState {
    pub const INPUT: RfState = RfState { r: 1, j: 1 };

    pub fn new(r: u64, j: u64) -> Self {
        Self { r, j }
    }
}

/// Path state: finite, or global once a GlobalAvgPool or Dense has been
/// crossed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rf {
    Finite(RfState),
    Global,
}

impl Rf {
    pub fn size(&self) -> RfSize {
        match self {
            Rf::Finite(s) => RfSize::Finite(s.r),
            Rf::Global => RfSize::Global,
        }
    }

    pub fn finite(&self) -> Option<RfState> {
        match self {
            Rf::Finite(s) => Some(*s),
            Rf::Global => None,
        }
    }
}

/// A receptive-field size; `Global` compares above every finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RfSize {
    Finite(u64),
    Global,
}

impl RfSize {
    pub fn exceeds(&self, resolution: u64) -> bool {
        match self {
            RfSize::Finite(r) => *r > resolution,
            RfSize::Global => true,
        }
    }

    pub fn finite(&self) -> Option<u64> {
        match self {
            RfSize::Finite(r) => Some(*r),
            RfSize::Global => None,
        }
    }
}

impl fmt::Display for RfSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RfSize::Finite(r) => write!(f, "{r}"),
            RfSize::Global => f.write_str("global"),
        }
    }
}

impl Serialize for RfSize {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            RfSize::Finite(r) => s.serialize_u64(*r),
            RfSize::Global => s.serialize_str("global"),
        }
    }
}

pub fn effective_kernel(kernel: u64, dilation: u64) -> u64 {
    dilation * (kernel - 1) + 1
}

/// Receptive-field transfer of one layer.
pub fn layer_rf_transfer(state: Rf, kind: &LayerKind) -> Rf {
    let Rf::Finite(s) = state else {
        return Rf::Global;
    };
    match kind {
        LayerKind::Conv2d {
            kernel,
            stride,
            dilation,
            ..
        } => Rf::Finite(slide(s, effective_kernel(*kernel, *dilation), *stride)),
        LayerKind::Pool { kernel, stride, .. } => Rf::Finite(slide(s, *kernel, *stride)),
        LayerKind::GlobalAvgPool | LayerKind::Dense { .. } => Rf::Global,
        LayerKind::Input
        | LayerKind::Add
        | LayerKind::Concat
        | LayerKind::BatchNorm
        | LayerKind::Activation { .. }
        | LayerKind::Attention { .. }
        | LayerKind::Softmax => state,
    }
}

fn slide(s: RfState, k_eff: u64, stride: u64) -> RfState {
    RfState {
        r: s.r.saturating_add((k_eff - 1).saturating_mul(s.j)),
        j: s.j.saturating_mul(stride),
    }
}

/// Folds [`layer_rf_transfer`] from the input state; element `t` is the state
/// after `layers[t]`.
pub fn propagate_sequential(layers: &[LayerKind]) -> Vec<Rf> {
    layers
        .iter()
        .scan(Rf::Finite(RfState::INPUT), |state, kind| {
            *state = layer_rf_transfer(*state, kind);
            Some(*state)
        })
        .collect()
}

/// Pareto summary of every path state reaching one point of the graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Frontier {
    /// States not dominated from below (`<=` on both r and j), sorted by r.
    minimal: Vec<RfState>,
    /// States not dominated from above (`>=` on both r and j), sorted by r.
    maximal: Vec<RfState>,
    /// At least one path is global.
    global: bool,
}

impl Frontier {
    pub fn singleton(state: Rf) -> Self {
        match state {
            Rf::Finite(s) => Self {
                minimal: vec![s],
                maximal: vec![s],
                global: false,
            },
            Rf::Global => Self {
                minimal: vec![],
                maximal: vec![],
                global: true,
            },
        }
    }

    fn from_states(states: impl IntoIterator<Item = RfState>, global: bool) -> Self {
        let mut all: Vec<RfState> = states.into_iter().collect();
        all.sort_unstable();
        all.dedup();
        Self {
            minimal: pareto_min(&all),
            maximal: pareto_max(&all),
            global,
        }
    }

    /// Union of several frontiers, re-pruned.
    pub fn union<'a>(parts: impl IntoIterator<Item = &'a Frontier>) -> Self {
        let mut states = Vec::new();
        let mut global = false;
        for p in parts {
            states.extend_from_slice(&p.minimal);
            states.extend_from_slice(&p.maximal);
            global |= p.global;
        }
        Self::from_states(states, global)
    }

    /// Frontier after passing every path through `kind`.
    pub fn transfer(&self, kind: &LayerKind) -> Self {
        let mut states = Vec::with_capacity(self.minimal.len() + self.maximal.len());
        let mut global = self.global;
        for s in self.minimal.iter().chain(&self.maximal) {
            match layer_rf_transfer(Rf::Finite(*s), kind) {
                Rf::Finite(t) => states.push(t),
                Rf::Global => global = true,
            }
        }
        Self::from_states(states, global)
    }

    pub fn minimal(&self) -> &[RfState] {
        &self.minimal
    }

    pub fn maximal(&self) -> &[RfState] {
        &self.maximal
    }

    pub fn has_global_path(&self) -> bool {
        self.global
    }

    pub fn all_global(&self) -> bool {
        self.minimal.is_empty()
    }

    /// Number of distinct stored states.
    pub fn len(&self) -> usize {
        let mut v: Vec<&RfState> = self.minimal.iter().chain(&self.maximal).collect();
        v.sort_unstable();
        v.dedup();
        v.len() + usize::from(self.global)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn r_min(&self) -> RfSize {
        self.minimal
            .iter()
            .map(|s| s.r)
            .min()
            .map_or(RfSize::Global, RfSize::Finite)
    }

    pub fn r_max(&self) -> RfSize {
        if self.global {
            return RfSize::Global;
        }
        self.maximal
            .iter()
            .map(|s| s.r)
            .max()
            .map_or(RfSize::Global, RfSize::Finite)
    }

    /// Smallest jump over finite paths.
    pub fn j_min(&self) -> Option<u64> {
        self.minimal.iter().map(|s| s.j).min()
    }

    /// Largest jump over finite paths.
    pub fn j_max(&self) -> Option<u64> {
        self.maximal.iter().map(|s| s.j).max()
    }
}

/// Keeps the states no other state is `<=` on both coordinates. Input sorted
/// ascending by (r, j).
fn pareto_min(sorted: &[RfState]) -> Vec<RfState> {
    let mut out: Vec<RfState> = Vec::new();
    let mut best_j = u64::MAX;
    for s in sorted {
        if s.j < best_j {
            out.push(*s);
            best_j = s.j;
        }
    }
    out
}

/// Keeps the states no other state is `>=` on both coordinates.
fn pareto_max(sorted: &[RfState]) -> Vec<RfState> {
    let mut out: Vec<RfState> = Vec::new();
    let mut best_j = 0;
    for s in sorted.iter().rev() {
        if s.j > best_j {
            out.push(*s);
            best_j = s.j;
        }
    }
    out.reverse();
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RfAnnotation {
    pub node_id: String,
    pub input: Frontier,
    pub output: Frontier,
}

impl RfAnnotation {
    pub fn r_in_min(&self) -> RfSize {
        self.input.r_min()
    }
    pub fn r_in_max(&self) -> RfSize {
        self.input.r_max()
    }
    pub fn r_out_min(&self) -> RfSize {
        self.output.r_min()
    }
    pub fn r_out_max(&self) -> RfSize {
        self.output.r_max()
    }
}

/// Per-node annotations, stored in topological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RfAnalysis {
    annotations: Vec<RfAnnotation>,
    by_id: HashMap<String, usize>,
}

impl RfAnalysis {
    pub fn get(&self, id: &str) -> Option<&RfAnnotation> {
        self.by_id.get(id).map(|&i| &self.annotations[i])
    }

    /// Annotations in topological order.
    pub fn iter(&self) -> impl Iterator<Item = &RfAnnotation> {
        self.annotations.iter()
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }
}

impl std::ops::Index<&str> for RfAnalysis {
    type Output = RfAnnotation;

    fn index(&self, id: &str) -> &RfAnnotation {
        self.get(id)
            .unwrap_or_else(|| panic!("no annotation for node `{id}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RfError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("receptive-field frontier at `{node}` holds {size} states, over the cap of {cap}")]
    FrontierCap {
        node: String,
        size: usize,
        cap: usize,
    },
    #[error("{count} paths reach `{node}`, over the enumeration limit of {limit}")]
    TooManyPaths {
        node: String,
        count: u64,
        limit: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropagateOptions {
    pub frontier_cap: usize,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self { frontier_cap: 4096 }
    }
}

pub fn propagate_dag(graph: &ArchGraph) -> Result<RfAnalysis, RfError> {
    propagate_dag_with(graph, PropagateOptions::default())
}

pub fn propagate_dag_with(
    graph: &ArchGraph,
    options: PropagateOptions,
) -> Result<RfAnalysis, RfError> {
    let order = graph.topo_ix()?;
    let mut outputs: Vec<Option<Frontier>> = vec![None; graph.len()];
    let mut annotations = Vec::with_capacity(order.len());
    let mut by_id = HashMap::with_capacity(order.len());
    for ix in order {
        let node = &graph.nodes()[ix];
        let preds = graph.preds_of(ix);
        let input = if preds.is_empty() {
            Frontier::singleton(Rf::Finite(RfState::INPUT))
        } else {
            Frontier::union(
                preds
                    .iter()
                    .map(|&p| outputs[p].as_ref().expect("predecessor visited first")),
            )
        };
        let output = input.transfer(&node.kind);
        for f in [&input, &output] {
            if f.len() > options.frontier_cap {
                return Err(RfError::FrontierCap {
                    node: node.id.clone(),
                    size: f.len(),
                    cap: options.frontier_cap,
                });
            }
        }
        outputs[ix] = Some(output.clone());
        by_id.insert(node.id.clone(), annotations.len());
        annotations.push(RfAnnotation {
            node_id: node.id.clone(),
            input,
            output,
        });
    }
    Ok(RfAnalysis { annotations, by_id })
}

/// Reference implementation: enumerates every Input-to-node path explicitly.
pub mod oracle {
    use super::*;

    pub const PATH_LIMIT: u64 = 1_000_000;

    /// Every path reaching the *input* of `node` (the node itself excluded),
    /// each folded to its final state.
    pub fn input_states(graph: &ArchGraph, node: &str) -> Result<Vec<Rf>, RfError> {
        crate::graph::ensure_valid(graph)?;
        let target = graph
            .position(node)
            .ok_or_else(|| GraphError::UnknownNode(node.to_owned()))?;
        let count = count_paths(graph, target);
        if count > PATH_LIMIT {
            return Err(RfError::TooManyPaths {
                node: node.to_owned(),
                count,
                limit: PATH_LIMIT,
            });
        }
        // Walk backwards from the target, then fold each path forwards.
        let mut states = Vec::new();
        let mut stack: Vec<Vec<usize>> = vec![vec![target]];
        while let Some(path) = stack.pop() {
            let head = *path.last().expect("non-empty path");
            let preds = graph.preds_of(head);
            if preds.is_empty() {
                let mut state = Rf::Finite(RfState::INPUT);
                // path = [target, ..., input]; skip the target itself.
                for &ix in path.iter().rev().take(path.len() - 1) {
                    state = layer_rf_transfer(state, &graph.nodes()[ix].kind);
                }
                states.push(state);
                continue;
            }
            for &p in preds {
                let mut next = path.clone();
                next.push(p);
                stack.push(next);
            }
        }
        Ok(states)
    }

    /// Exact `(r_min, r_max)` at the input of `node`.
    pub fn path_enumeration_oracle(
        graph: &ArchGraph,
        node: &str,
    ) -> Result<(RfSize, RfSize), RfError> {
        let states = input_states(graph, node)?;
        let sizes = states.iter().map(Rf::size);
        let min = sizes.clone().min().expect("at least one path");
        let max = sizes.max().expect("at least one path");
        Ok((min, max))
    }

    fn count_paths(graph: &ArchGraph, target: usize) -> u64 {
        let mut memo: HashMap<usize, u64> = HashMap::new();
        fn go(g: &ArchGraph, ix: usize, memo: &mut HashMap<usize, u64>) -> u64 {
            if let Some(&c) = memo.get(&ix) {
                return c;
            }
            let preds = g.preds_of(ix);
            let c = if preds.is_empty() {
                1
            } else {
                preds
                    .iter()
                    .fold(0u64, |acc, &p| acc.saturating_add(go(g, p, memo)))
            };
            memo.insert(ix, c);
            c
        }
        go(graph, target, &mut memo)
    }
}

pub use oracle::path_enumeration_oracle;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{chain, GraphBuilder, InputSpec, Padding};

    fn conv(k: u64, s: u64) -> LayerKind {
        LayerKind::conv(k, s, 8)
    }

    fn fin(r: u64, j: u64) -> Rf {
        Rf::Finite(RfState::new(r, j))
    }

    #[test]
    fn effective_kernel_values() {
        assert_eq!(effective_kernel(3, 1), 3);
        assert_eq!(effective_kernel(3, 3), 7);
        assert_eq!(effective_kernel(1, 5), 1);
    }

    #[test]
    fn transfer_examples() {
        assert_eq!(layer_rf_transfer(fin(1, 1), &conv(3, 1)), fin(3, 1));
        // pool4 of VGG16 produces conv8's input state.
        assert_eq!(
            layer_rf_transfer(fin(40, 4), &LayerKind::max_pool(2, 2)),
            fin(44, 8)
        );
        assert_eq!(layer_rf_transfer(fin(44, 8), &conv(3, 1)), fin(60, 8));
        assert_eq!(
            layer_rf_transfer(fin(5, 1), &LayerKind::max_pool(2, 2)),
            fin(6, 2)
        );
        let se = LayerKind::Attention {
            variant: crate::graph::AttentionVariant::Se,
        };
        assert_eq!(layer_rf_transfer(fin(11, 4), &se), fin(11, 4));
    }

    #[test]
    fn dilation_enters_through_effective_kernel() {
        let dilated = LayerKind::Conv2d {
            kernel: 3,
            stride: 1,
            dilation: 3,
            padding: Padding::Same,
            filters: 4,
            bias: false,
        };
        assert_eq!(layer_rf_transfer(fin(1, 1), &dilated), fin(7, 1));
    }

    #[test]
    fn head_layers_globalize_and_stay_global() {
        assert_eq!(
            layer_rf_transfer(fin(9, 2), &LayerKind::GlobalAvgPool),
            Rf::Global
        );
        assert_eq!(
            layer_rf_transfer(fin(9, 2), &LayerKind::dense(3)),
            Rf::Global
        );
        assert_eq!(layer_rf_transfer(Rf::Global, &conv(3, 1)), Rf::Global);
        assert_eq!(
            layer_rf_transfer(Rf::Global, &LayerKind::Softmax),
            Rf::Global
        );
    }

    #[test]
    fn sequential_pointwise_conv() {
        assert_eq!(propagate_sequential(&[conv(1, 1)]), vec![fin(1, 1)]);
    }

    #[test]
    fn sequential_matches_dag_on_chain() {
        let layers = [
            conv(3, 1),
            LayerKind::max_pool(2, 2),
            conv(5, 2),
            conv(3, 1),
        ];
        let seq = propagate_sequential(&layers);
        let g = chain("c", InputSpec::square(32, 3), &layers);
        let dag = propagate_dag(&g).unwrap();
        for (t, state) in seq.iter().enumerate() {
            let ann = &dag[format!("l{t}").as_str()];
            assert_eq!(ann.output.minimal(), &[state.finite().unwrap()]);
            assert_eq!(ann.output.maximal(), &[state.finite().unwrap()]);
        }
    }

    #[test]
    fn diamond_min_max() {
        let mut b = GraphBuilder::new("d", InputSpec::square(32, 3));
        b.after("input", "a", conv(3, 1));
        b.after("input", "b", conv(7, 1));
        b.merge(&["a", "b"], "add", LayerKind::Add);
        let g = b.build();
        let dag = propagate_dag(&g).unwrap();
        assert_eq!(dag["add"].r_in_min(), RfSize::Finite(3));
        assert_eq!(dag["add"].r_in_max(), RfSize::Finite(7));
        assert_eq!(
            path_enumeration_oracle(&g, "add").unwrap(),
            (RfSize::Finite(3), RfSize::Finite(7))
        );
    }

    #[test]
    fn frontier_keeps_incomparable_states() {
        // (5, 4) and (9, 1) are incomparable; each wins a different downstream.
        let f = Frontier::from_states(
            [RfState::new(5, 4), RfState::new(9, 1), RfState::new(9, 4)],
            false,
        );
        assert_eq!(f.minimal(), &[RfState::new(5, 4), RfState::new(9, 1)]);
        assert_eq!(f.maximal(), &[RfState::new(9, 4)]);
        // After a 5x5 conv: 5+16=21 vs 9+4=13, so the min comes from (9,1).
        let t = f.transfer(&conv(5, 1));
        assert_eq!(t.r_min(), RfSize::Finite(13));
        assert_eq!(t.r_max(), RfSize::Finite(25));
    }

    #[test]
    fn frontier_cap_is_enforced() {
        let mut b = GraphBuilder::new("d", InputSpec::square(32, 3));
        b.after("input", "a", conv(3, 2));
        b.after("input", "b", conv(7, 1));
        b.merge(&["a", "b"], "add", LayerKind::Add);
        let g = b.build();
        let err = propagate_dag_with(&g, PropagateOptions { frontier_cap: 1 }).unwrap_err();
        assert!(matches!(err, RfError::FrontierCap { .. }), "{err}");
    }

    #[test]
    fn invalid_graph_is_rejected() {
        let mut b = GraphBuilder::new("bad", InputSpec::square(32, 3));
        b.then("add", LayerKind::Add);
        assert!(matches!(propagate_dag(&b.build()), Err(RfError::Graph(_))));
    }
}
