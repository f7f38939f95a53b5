//! JSON interchange format for architectures.
//!
//! ```json
//! {
//!   "name": "tiny",
//!   "input": {"height": 32, "width": 32, "channels": 3},
//!   "layers": [
//!     {"id": "input", "kind": "input"},
//!     {"id": "c1", "kind": "conv2d", "kernel": 3, "stride": 1, "dilation": 1,
//!      "padding": "same", "filters": 16, "bias": true},
//!     {"id": "gap", "kind": "global_avg_pool"},
//!     {"id": "fc", "kind": "dense", "units": 10, "bias": true}
//!   ],
//!   "edges": [["input", "c1"], ["c1", "gap"], ["gap", "fc"]]
//! }
//! ```
//!
//! Unknown keys are rejected. Kernels, strides and dilations may also be
//! given as `[n, n]`; non-square pairs are rejected. A layer's declaration
//! index is its position in `layers`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::graph::{
    validate, ArchGraph, AttentionVariant, InputSpec, LayerKind, Padding, PoolMode, Violation,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DocumentError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {path}{}: {message}", .layer_id.as_ref().map(|id| format!(" (layer `{id}`)")).unwrap_or_default())]
    Schema {
        path: String,
        layer_id: Option<String>,
        message: String,
    },
    #[error("invalid architecture: {}", .0.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentShell {
    name: String,
    input: InputDoc,
    layers: Vec<Value>,
    edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputDoc {
    height: u64,
    width: u64,
    channels: u64,
}

/// Scalar or square `[n, n]` pair.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum SquareDoc {
    Scalar(u64),
    Pair([u64; 2]),
}

impl SquareDoc {
    fn resolve(self, what: &str) -> Result<u64, String> {
        match self {
            SquareDoc::Scalar(n) => Ok(n),
            SquareDoc::Pair([a, b]) if a == b => Ok(a),
            SquareDoc::Pair([a, b]) => Err(format!("non-square {what} [{a}, {b}]")),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
enum PaddingDoc {
    Named(PaddingName),
    Explicit(u64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PaddingName {
    Same,
    Valid,
}

fn one() -> SquareDoc {
    SquareDoc::Scalar(1)
}

fn yes() -> bool {
    true
}

fn same() -> PaddingDoc {
    PaddingDoc::Named(PaddingName::Same)
}

fn relu() -> String {
    "relu".to_owned()
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LayerDoc {
    Input {
        id: String,
    },
    Conv2d {
        id: String,
        kernel: SquareDoc,
        #[serde(default = "one")]
        stride: SquareDoc,
        #[serde(default = "one")]
        dilation: SquareDoc,
        #[serde(default = "same")]
        padding: PaddingDoc,
        filters: u64,
        #[serde(default = "yes")]
        bias: bool,
    },
    Pool {
        id: String,
        mode: PoolModeDoc,
        kernel: SquareDoc,
        /// Defaults to the kernel size.
        stride: Option<SquareDoc>,
        #[serde(default)]
        padding: u64,
    },
    GlobalAvgPool {
        id: String,
    },
    Dense {
        id: String,
        units: u64,
        #[serde(default = "yes")]
        bias: bool,
    },
    Add {
        id: String,
    },
    Concat {
        id: String,
    },
    BatchNorm {
        id: String,
    },
    Activation {
        id: String,
        #[serde(default = "relu")]
        name: String,
    },
    Attention {
        id: String,
        variant: VariantDoc,
    },
    Softmax {
        id: String,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PoolModeDoc {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum VariantDoc {
    Se,
    Spatial,
    Cbam,
}

impl LayerDoc {
    fn into_layer(self) -> Result<(String, LayerKind), String> {
        Ok(match self {
            LayerDoc::Input { id } => (id, LayerKind::Input),
            LayerDoc::Conv2d {
                id,
                kernel,
                stride,
                dilation,
                padding,
                filters,
                bias,
            } => (
                id,
                LayerKind::Conv2d {
                    kernel: kernel.resolve("kernel")?,
                    stride: stride.resolve("stride")?,
                    dilation: dilation.resolve("dilation")?,
                    padding: match padding {
                        PaddingDoc::Named(PaddingName::Same) => Padding::Same,
                        PaddingDoc::Named(PaddingName::Valid) => Padding::Valid,
                        PaddingDoc::Explicit(p) => Padding::Explicit(p),
                    },
                    filters,
                    bias,
                },
            ),
            LayerDoc::Pool {
                id,
                mode,
                kernel,
                stride,
                padding,
            } => {
                let kernel = kernel.resolve("kernel")?;
                let stride = stride.map_or(Ok(kernel), |s| s.resolve("stride"))?;
                let mode = match mode {
                    PoolModeDoc::Max => PoolMode::Max,
                    PoolModeDoc::Avg => PoolMode::Avg,
                };
                (
                    id,
                    LayerKind::Pool {
                        mode,
                        kernel,
                        stride,
                        padding,
                    },
                )
            }
            LayerDoc::GlobalAvgPool { id } => (id, LayerKind::GlobalAvgPool),
            LayerDoc::Dense { id, units, bias } => (id, LayerKind::Dense { units, bias }),
            LayerDoc::Add { id } => (id, LayerKind::Add),
            LayerDoc::Concat { id } => (id, LayerKind::Concat),
            LayerDoc::BatchNorm { id } => (id, LayerKind::BatchNorm),
            LayerDoc::Activation { id, name } => (id, LayerKind::Activation { name }),
            LayerDoc::Attention { id, variant } => {
                let variant = match variant {
                    VariantDoc::Se => AttentionVariant::Se,
                    VariantDoc::Spatial => AttentionVariant::Spatial,
                    VariantDoc::Cbam => AttentionVariant::Cbam,
                };
                (id, LayerKind::Attention { variant })
            }
            LayerDoc::Softmax { id } => (id, LayerKind::Softmax),
        })
    }
}

fn syntax(e: &serde_json::Error) -> DocumentError {
    DocumentError::Syntax {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(pos) => msg[..pos].to_owned(),
        None => msg.to_owned(),
    }
}

/// Parses a document without running graph validation.
pub fn parse_unchecked(text: &str) -> Result<ArchGraph, DocumentError> {
    let value: Value = serde_json::from_str(text).map_err(|e| syntax(&e))?;
    let shell: DocumentShell =
        serde_json::from_value(value).map_err(|e| DocumentError::Schema {
            path: "$".into(),
            layer_id: None,
            message: e.to_string(),
        })?;
    let mut layers = Vec::with_capacity(shell.layers.len());
    for (k, raw) in shell.layers.into_iter().enumerate() {
        let path = format!("$.layers[{k}]");
        let layer_id = raw.get("id").and_then(Value::as_str).map(str::to_owned);
        let schema = |message: String| DocumentError::Schema {
            path: path.clone(),
            layer_id: layer_id.clone(),
            message,
        };
        let doc: LayerDoc = serde_json::from_value(raw).map_err(|e| schema(e.to_string()))?;
        layers.push(doc.into_layer().map_err(schema)?);
    }
    let input = InputSpec::new(shell.input.height, shell.input.width, shell.input.channels);
    Ok(ArchGraph::new(shell.name, input, layers, shell.edges))
}

/// Parses and validates a document.
pub fn parse(text: &str) -> Result<ArchGraph, DocumentError> {
    let g = parse_unchecked(text)?;
    let violations = validate(&g);
    if violations.is_empty() {
        Ok(g)
    } else {
        Err(DocumentError::Invalid(violations))
    }
}

pub fn parse_bytes(bytes: &[u8]) -> Result<ArchGraph, DocumentError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DocumentError::Syntax {
        line: 0,
        column: 0,
        message: format!("input is not UTF-8: {e}"),
    })?;
    parse(text)
}

fn layer_value(id: &str, kind: &LayerKind) -> Value {
    use serde_json::json;
    let mut v = match kind {
        LayerKind::Conv2d {
            kernel,
            stride,
            dilation,
            padding,
            filters,
            bias,
        } => json!({
            "kernel": kernel,
            "stride": stride,
            "dilation": dilation,
            "padding": match padding {
                Padding::Same => json!("same"),
                Padding::Valid => json!("valid"),
                Padding::Explicit(p) => json!(p),
            },
            "filters": filters,
            "bias": bias,
        }),
        LayerKind::Pool {
            mode,
            kernel,
            stride,
            padding,
        } => json!({
            "mode": mode.as_str(),
            "kernel": kernel,
            "stride": stride,
            "padding": padding,
        }),
        LayerKind::Dense { units, bias } => json!({ "units": units, "bias": bias }),
        LayerKind::Activation { name } => json!({ "name": name }),
        LayerKind::Attention { variant } => json!({ "variant": variant.as_str() }),
        _ => json!({}),
    };
    let obj = v.as_object_mut().expect("object literal");
    let mut ordered = serde_json::Map::new();
    ordered.insert("id".into(), Value::from(id));
    ordered.insert("kind".into(), Value::from(kind.tag()));
    ordered.append(obj);
    Value::Object(ordered)
}

/// Canonical JSON value of a graph; every optional key is written out.
pub fn to_value(graph: &ArchGraph) -> Value {
    let input = graph.input();
    let mut doc = serde_json::Map::new();
    doc.insert("name".into(), Value::from(graph.name()));
    doc.insert(
        "input".into(),
        serde_json::to_value(InputDoc {
            height: input.height,
            width: input.width,
            channels: input.channels,
        })
        .expect("plain struct"),
    );
    doc.insert(
        "layers".into(),
        Value::Array(
            graph
                .nodes()
                .iter()
                .map(|n| layer_value(&n.id, &n.kind))
                .collect(),
        ),
    );
    doc.insert(
        "edges".into(),
        serde_json::to_value(graph.edges()).expect("string pairs"),
    );
    Value::Object(doc)
}

/// Pretty-printed canonical document, newline-terminated.
pub fn serialize(graph: &ArchGraph) -> String {
    let mut s = serde_json::to_string_pretty(&to_value(graph)).expect("json value");
    s.push('\n');
    s
}
