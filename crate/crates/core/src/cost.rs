//! Feature-map shapes, trainable parameters and multiply-accumulate counts.

use std::collections::HashMap;

use serde::Serialize;

use crate::graph::{ArchGraph, AttentionVariant, GraphError, LayerKind, Padding};
use crate::rf::effective_kernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Shape {
    pub height: u64,
    pub width: u64,
    pub channels: u64,
}

impl Shape {
    pub fn new(height: u64, width: u64, channels: u64) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn elements(&self) -> u64 {
        self.height * self.width * self.channels
    }

    pub fn spatial(&self) -> u64 {
        self.height * self.width
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShapeInfo {
    pub node_id: String,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("shape mismatch at `{node}`: {detail}")]
    ShapeMismatch { node: String, detail: String },
    #[error(
        "`{node}` would produce an empty feature map (kernel {kernel} over padded extent {extent})"
    )]
    EmptyOutput {
        node: String,
        kernel: u64,
        extent: u64,
    },
}

/// Cost-model switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostOptions {
    /// Charge BatchNorm/Activation/Add/Attention-scaling one MAC per output
    /// element and pools one MAC per window element.
    pub count_elementwise: bool,
    /// Squeeze-and-excitation reduction ratio.
    pub se_ratio: u64,
}

impl Default for CostOptions {
    fn default() -> Self {
        Self {
            count_elementwise: true,
            se_ratio: 16,
        }
    }
}

fn sliding_extent(
    node: &str,
    input: u64,
    k_eff: u64,
    stride: u64,
    padding: Padding,
) -> Result<u64, CostError> {
    match padding {
        Padding::Same => Ok(input.div_ceil(stride)),
        Padding::Valid => sliding_extent(node, input, k_eff, stride, Padding::Explicit(0)),
        Padding::Explicit(p) => {
            let padded = input + 2 * p;
            if padded < k_eff {
                return Err(CostError::EmptyOutput {
                    node: node.to_owned(),
                    kernel: k_eff,
                    extent: padded,
                });
            }
            Ok((padded - k_eff) / stride + 1)
        }
    }
}

/// Output shape of one layer given the shapes of its inputs.
pub fn layer_output_shape(
    node: &str,
    kind: &LayerKind,
    inputs: &[Shape],
    graph_input: Shape,
) -> Result<Shape, CostError> {
    let first = inputs.first().copied().unwrap_or(graph_input);
    let shape = match kind {
        LayerKind::Input => graph_input,
        LayerKind::Conv2d {
            kernel,
            stride,
            dilation,
            padding,
            filters,
            ..
        } => {
            let k = effective_kernel(*kernel, *dilation);
            Shape::new(
                sliding_extent(node, first.height, k, *stride, *padding)?,
                sliding_extent(node, first.width, k, *stride, *padding)?,
                *filters,
            )
        }
        LayerKind::Pool {
            kernel,
            stride,
            padding,
            ..
        } => {
            let p = Padding::Explicit(*padding);
            Shape::new(
                sliding_extent(node, first.height, *kernel, *stride, p)?,
                sliding_extent(node, first.width, *kernel, *stride, p)?,
                first.channels,
            )
        }
        LayerKind::GlobalAvgPool => Shape::new(1, 1, first.channels),
        LayerKind::Dense { units, .. } => Shape::new(1, 1, *units),
        LayerKind::Add => {
            if let Some(other) = inputs.iter().find(|s| **s != first) {
                return Err(CostError::ShapeMismatch {
                    node: node.to_owned(),
                    detail: format!("add inputs {first:?} and {other:?} differ"),
                });
            }
            first
        }
        LayerKind::Concat => {
            if let Some(other) = inputs
                .iter()
                .find(|s| (s.height, s.width) != (first.height, first.width))
            {
                return Err(CostError::ShapeMismatch {
                    node: node.to_owned(),
                    detail: format!(
                        "concat spatial sizes {}x{} and {}x{} differ",
                        first.height, first.width, other.height, other.width
                    ),
                });
            }
            Shape::new(
                first.height,
                first.width,
                inputs.iter().map(|s| s.channels).sum(),
            )
        }
        LayerKind::BatchNorm
        | LayerKind::Activation { .. }
        | LayerKind::Attention { .. }
        | LayerKind::Softmax => first,
    };
    Ok(shape)
}

/// Output shape of every node, in topological order.
pub fn propagate_shapes(graph: &ArchGraph) -> Result<Vec<ShapeInfo>, CostError> {
    let order = graph.topo_ix()?;
    let input = graph.input();
    let graph_input = Shape::new(input.height, input.width, input.channels);
    let mut shapes: Vec<Option<Shape>> = vec![None; graph.len()];
    let mut out = Vec::with_capacity(order.len());
    for ix in order {
        let node = &graph.nodes()[ix];
        let ins: Vec<Shape> = graph
            .preds_of(ix)
            .iter()
            .map(|&p| shapes[p].expect("predecessor visited first"))
            .collect();
        let shape = layer_output_shape(&node.id, &node.kind, &ins, graph_input)?;
        shapes[ix] = Some(shape);
        out.push(ShapeInfo {
            node_id: node.id.clone(),
            shape,
        });
    }
    Ok(out)
}

/// Spatial-attention conv: 7x7 over the stacked channel-avg and channel-max maps.
const SPATIAL_ATTENTION_WEIGHTS: u64 = 2 * 7 * 7;

fn se_weights(channels: u64, ratio: u64) -> u64 {
    2 * channels * channels / ratio.max(1)
}

/// Trainable parameters of one layer.
pub fn layer_params(kind: &LayerKind, input: Shape, options: &CostOptions) -> u64 {
    match kind {
        LayerKind::Conv2d {
            kernel,
            filters,
            bias,
            ..
        } => kernel * kernel * input.channels * filters + if *bias { *filters } else { 0 },
        LayerKind::Dense { units, bias } => {
            input.elements() * units + if *bias { *units } else { 0 }
        }
        LayerKind::BatchNorm => 2 * input.channels,
        LayerKind::Attention { variant } => match variant {
            AttentionVariant::Se => se_weights(input.channels, options.se_ratio),
            AttentionVariant::Spatial => SPATIAL_ATTENTION_WEIGHTS,
            AttentionVariant::Cbam => {
                se_weights(input.channels, options.se_ratio) + SPATIAL_ATTENTION_WEIGHTS
            }
        },
        LayerKind::Input
        | LayerKind::Pool { .. }
        | LayerKind::GlobalAvgPool
        | LayerKind::Add
        | LayerKind::Concat
        | LayerKind::Activation { .. }
        | LayerKind::Softmax => 0,
    }
}

/// Multiply-accumulates of one layer.
pub fn layer_macs(kind: &LayerKind, input: Shape, output: Shape, options: &CostOptions) -> u64 {
    let elementwise = |n: u64| if options.count_elementwise { n } else { 0 };
    match kind {
        LayerKind::Conv2d { kernel, .. } => kernel * kernel * input.channels * output.elements(),
        LayerKind::Dense { units, .. } => input.elements() * units,
        LayerKind::Pool { kernel, .. } => elementwise(kernel * kernel * output.elements()),
        LayerKind::GlobalAvgPool => elementwise(input.elements()),
        LayerKind::BatchNorm | LayerKind::Activation { .. } | LayerKind::Add => {
            elementwise(output.elements())
        }
        LayerKind::Attention { variant } => {
            let se = se_weights(input.channels, options.se_ratio);
            let spatial = SPATIAL_ATTENTION_WEIGHTS * output.spatial();
            let weights = match variant {
                AttentionVariant::Se => se,
                AttentionVariant::Spatial => spatial,
                AttentionVariant::Cbam => se + spatial,
            };
            weights + elementwise(output.elements())
        }
        LayerKind::Input | LayerKind::Concat | LayerKind::Softmax => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerCost {
    pub node_id: String,
    pub params: u64,
    pub macs: u64,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    /// Topological order.
    pub per_layer: Vec<LayerCost>,
    pub total_params: u64,
    pub total_macs: u64,
    /// `2 * total_macs`.
    pub total_flops: u64,
    /// `total_macs / 1e9`, the "one MAC = one FLOP" convention.
    pub reported_gflops_mac1: f64,
}

impl CostReport {
    pub fn layer(&self, node_id: &str) -> Option<&LayerCost> {
        self.per_layer.iter().find(|l| l.node_id == node_id)
    }
}

pub fn cost_report(graph: &ArchGraph) -> Result<CostReport, CostError> {
    cost_report_with(graph, &CostOptions::default())
}

pub fn cost_report_with(graph: &ArchGraph, options: &CostOptions) -> Result<CostReport, CostError> {
    let shapes = propagate_shapes(graph)?;
    let by_id: HashMap<&str, Shape> = shapes
        .iter()
        .map(|s| (s.node_id.as_str(), s.shape))
        .collect();
    let per_layer: Vec<LayerCost> = shapes
        .iter()
        .map(|info| {
            let node = graph.node(&info.node_id).expect("shape for known node");
            let input = graph
                .predecessors(&info.node_id)
                .first()
                .map(|p| by_id[p])
                .unwrap_or(info.shape);
            LayerCost {
                node_id: info.node_id.clone(),
                params: layer_params(&node.kind, input, options),
                macs: layer_macs(&node.kind, input, info.shape, options),
                shape: info.shape,
            }
        })
        .collect();
    let total_params = per_layer.iter().map(|l| l.params).sum();
    let total_macs: u64 = per_layer.iter().map(|l| l.macs).sum();
    Ok(CostReport {
        per_layer,
        total_params,
        total_macs,
        total_flops: 2 * total_macs,
        reported_gflops_mac1: total_macs as f64 / 1e9,
    })
}

/// Total trainable parameters with default options.
pub fn count_params(graph: &ArchGraph) -> Result<u64, CostError> {
    Ok(cost_report(graph)?.total_params)
}

/// Total MACs with default options.
pub fn count_macs(graph: &ArchGraph) -> Result<u64, CostError> {
    Ok(cost_report(graph)?.total_macs)
}
