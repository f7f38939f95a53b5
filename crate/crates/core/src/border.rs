//! Border-layer detection.
//!
//! A convolution is unproductive when the smallest receptive field reaching
//! its input already exceeds the input resolution `i = max(H, W)`. The first
//! such conv (by ordinal) is the border `b_min`; `b_max` applies the same rule
//! to the largest receptive field and is reported for diagnostics.

use std::collections::HashSet;

use serde::Serialize;

use crate::graph::ArchGraph;
use crate::rf::{propagate_dag, RfAnalysis, RfError, RfSize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Productive,
    Unproductive,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Productive => "productive",
            Classification::Unproductive => "unproductive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConvVerdict {
    pub ordinal: usize,
    pub node_id: String,
    pub r_in_min: RfSize,
    pub r_in_max: RfSize,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BorderReport {
    pub resolution: u64,
    pub per_conv: Vec<ConvVerdict>,
    pub border_min: Option<usize>,
    pub border_max: Option<usize>,
}

impl BorderReport {
    pub fn unproductive_count(&self) -> usize {
        self.per_conv
            .iter()
            .filter(|c| c.classification == Classification::Unproductive)
            .count()
    }

    pub fn verdict(&self, node_id: &str) -> Option<&ConvVerdict> {
        self.per_conv.iter().find(|c| c.node_id == node_id)
    }

    /// Node id of the `b_min` conv.
    pub fn border_node(&self) -> Option<&str> {
        let b = self.border_min?;
        Some(self.per_conv[b - 1].node_id.as_str())
    }
}

/// Border report at the graph's own input resolution.
pub fn classify(graph: &ArchGraph) -> Result<BorderReport, RfError> {
    classify_at(graph, graph.input().resolution())
}

/// Border report at an explicit resolution.
pub fn classify_at(graph: &ArchGraph, resolution: u64) -> Result<BorderReport, RfError> {
    let rf = propagate_dag(graph)?;
    Ok(report_from_analysis(&rf, graph, resolution))
}

/// Border report from an already computed analysis.
pub fn report_from_analysis(rf: &RfAnalysis, graph: &ArchGraph, resolution: u64) -> BorderReport {
    let per_conv: Vec<ConvVerdict> = rf
        .iter()
        .filter(|a| graph.node(&a.node_id).is_some_and(|n| n.kind.is_conv()))
        .enumerate()
        .map(|(k, a)| {
            let r_in_min = a.r_in_min();
            ConvVerdict {
                ordinal: k + 1,
                node_id: a.node_id.clone(),
                r_in_min,
                r_in_max: a.r_in_max(),
                classification: if r_in_min.exceeds(resolution) {
                    Classification::Unproductive
                } else {
                    Classification::Productive
                },
            }
        })
        .collect();
    let first = |pick: fn(&ConvVerdict) -> RfSize| {
        per_conv
            .iter()
            .find(|c| pick(c).exceeds(resolution))
            .map(|c| c.ordinal)
    };
    let border_min = first(|c| c.r_in_min);
    let border_max = first(|c| c.r_in_max);
    BorderReport {
        resolution,
        per_conv,
        border_min,
        border_max,
    }
}

/// Node ids to remove when truncating at the border, in topological order.
///
/// A node belongs to the tail when it is an unproductive conv, or when it is
/// not a head layer and every one of its inputs already belongs to the tail.
/// Empty when there is no border.
pub fn unproductive_tail(graph: &ArchGraph) -> Result<Vec<String>, RfError> {
    let rf = propagate_dag(graph)?;
    let report = report_from_analysis(&rf, graph, graph.input().resolution());
    Ok(tail_from(&rf, graph, &report))
}

pub(crate) fn tail_from(rf: &RfAnalysis, graph: &ArchGraph, report: &BorderReport) -> Vec<String> {
    if report.border_min.is_none() {
        return Vec::new();
    }
    let unproductive: HashSet<&str> = report
        .per_conv
        .iter()
        .filter(|c| c.classification == Classification::Unproductive)
        .map(|c| c.node_id.as_str())
        .collect();
    let mut tail: HashSet<&str> = HashSet::new();
    let mut out = Vec::new();
    for ann in rf.iter() {
        let id = ann.node_id.as_str();
        let node = graph.node(id).expect("annotated node exists");
        let member = if unproductive.contains(id) {
            true
        } else if node.kind.is_head() {
            false
        } else {
            let preds = graph.predecessors(id);
            !preds.is_empty() && preds.iter().all(|p| tail.contains(p))
        };
        if member {
            tail.insert(id);
            out.push(id.to_owned());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{chain, GraphBuilder, InputSpec, LayerKind};

    fn convs(n: usize) -> Vec<LayerKind> {
        (0..n).map(|_| LayerKind::conv(3, 1, 4)).collect()
    }

    #[test]
    fn chain_border_is_first_conv_with_large_input_rf() {
        // r entering conv t (1-based) is 2t - 1; at i = 8, conv5 sees 9.
        let g = chain("c", InputSpec::square(8, 1), &convs(6));
        let rep = classify(&g).unwrap();
        assert_eq!(rep.border_min, Some(5));
        assert_eq!(rep.border_max, Some(5));
        assert_eq!(rep.unproductive_count(), 2);
        assert_eq!(rep.border_node(), Some("l4"));
    }

    #[test]
    fn huge_resolution_has_no_border() {
        let g = chain("c", InputSpec::square(1_000_000_000, 1), &convs(6));
        let rep = classify(&g).unwrap();
        assert_eq!(rep.border_min, None);
        assert_eq!(rep.border_max, None);
        assert_eq!(rep.unproductive_count(), 0);
        assert!(unproductive_tail(&g).unwrap().is_empty());
    }

    #[test]
    fn tail_of_last_conv_includes_trailing_non_head_nodes() {
        let mut layers = convs(5);
        layers.push(LayerKind::relu());
        layers.push(LayerKind::GlobalAvgPool);
        layers.push(LayerKind::dense(3));
        layers.push(LayerKind::Softmax);
        let g = chain("c", InputSpec::square(8, 1), &layers);
        assert_eq!(unproductive_tail(&g).unwrap(), ["l4", "l5"]);
    }

    #[test]
    fn node_fed_by_productive_path_is_kept() {
        // Border conv on one branch only; the add keeps a productive input.
        let mut b = GraphBuilder::new("skip", InputSpec::square(4, 1));
        b.then("c1", LayerKind::conv(3, 1, 4));
        b.then("c2", LayerKind::conv(3, 1, 4));
        b.merge(&["c2", "c1"], "add", LayerKind::Add);
        b.then("c3", LayerKind::conv(3, 1, 4));
        let g = b.build();
        let rep = classify(&g).unwrap();
        // c2 input r = 3, c3 input min r = 3 (skip), max 5.
        assert_eq!(rep.border_min, None);
        assert_eq!(rep.border_max, Some(3));
        assert!(unproductive_tail(&g).unwrap().is_empty());
    }
}
