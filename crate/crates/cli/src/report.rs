//! Report models and their text / JSON / CSV renderings.
//!
//! Every format is rendered from the same structs so the numbers agree.

use std::fmt::Write as _;

use clap::ValueEnum;
use serde::Serialize;

use rfscope_core::border::report_from_analysis;
use rfscope_core::cost::CostReport;
use rfscope_core::graph::conv_index;
use rfscope_core::rf::propagate_dag;
use rfscope_core::transforms::{Comparison, Snapshot};
use rfscope_core::{cost_report, ArchGraph, BorderReport, InputSpec, RfSize, TransformDelta};

use crate::source::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Debug, Serialize)]
pub struct LayerRow {
    pub conv: Option<usize>,
    pub id: String,
    pub kind: &'static str,
    pub r_in_min: RfSize,
    pub r_in_max: RfSize,
    pub j_min: RfSize,
    pub j_max: RfSize,
    pub params: u64,
    pub macs: u64,
    pub classification: Option<&'static str>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub border_min: Option<usize>,
    pub border_max: Option<usize>,
    pub border_node: Option<String>,
    pub convs: usize,
    pub unproductive_convs: usize,
    pub total_params: u64,
    pub total_macs: u64,
    pub total_flops: u64,
    pub gflops_mac1: f64,
}

impl Summary {
    fn new(border: &BorderReport, cost: &CostReport) -> Self {
        Self {
            border_min: border.border_min,
            border_max: border.border_max,
            border_node: border.border_node().map(str::to_owned),
            convs: border.per_conv.len(),
            unproductive_convs: border.unproductive_count(),
            total_params: cost.total_params,
            total_macs: cost.total_macs,
            total_flops: cost.total_flops,
            gflops_mac1: cost.reported_gflops_mac1,
        }
    }

    fn of(snapshot: &Snapshot) -> Self {
        Self::new(&snapshot.border, &snapshot.cost)
    }

    /// `(metric, value)` pairs shared by the text and CSV renderings.
    fn metrics(&self) -> Vec<(&'static str, String)> {
        vec![
            ("border_min", opt(self.border_min)),
            ("border_max", opt(self.border_max)),
            ("border_node", self.border_node.clone().unwrap_or_default()),
            ("convs", self.convs.to_string()),
            ("unproductive_convs", self.unproductive_convs.to_string()),
            ("total_params", self.total_params.to_string()),
            ("total_macs", self.total_macs.to_string()),
            ("total_flops", self.total_flops.to_string()),
            ("gflops_mac1", self.gflops_mac1.to_string()),
        ]
    }
}

fn opt(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Serialize)]
pub struct Analysis {
    pub name: String,
    pub input: InputSpec,
    pub resolution: u64,
    #[serde(flatten)]
    pub summary: Summary,
    pub layers: Vec<LayerRow>,
}

impl Analysis {
    pub fn of(graph: &ArchGraph) -> Result<Self, Failure> {
        let rf = propagate_dag(graph).map_err(Failure::analysis)?;
        let cost = cost_report(graph).map_err(Failure::analysis)?;
        let resolution = graph.input().resolution();
        let border = report_from_analysis(&rf, graph, resolution);
        let ordinals = conv_index(graph).map_err(Failure::analysis)?;
        let layers = cost
            .per_layer
            .iter()
            .map(|layer| {
                let ann = &rf[layer.node_id.as_str()];
                let verdict = border.verdict(&layer.node_id);
                let jump = |j: Option<u64>| j.map_or(RfSize::Global, RfSize::Finite);
                LayerRow {
                    conv: ordinals.get(&layer.node_id).copied(),
                    id: layer.node_id.clone(),
                    kind: graph.node(&layer.node_id).map_or("", |n| n.kind.tag()),
                    r_in_min: ann.r_in_min(),
                    r_in_max: ann.r_in_max(),
                    j_min: jump(ann.input.j_min()),
                    j_max: jump(ann.input.j_max()),
                    params: layer.params,
                    macs: layer.macs,
                    classification: verdict.map(|v| v.classification.as_str()),
                }
            })
            .collect();
        Ok(Self {
            name: graph.name().to_owned(),
            input: *graph.input(),
            resolution,
            summary: Summary::new(&border, &cost),
            layers,
        })
    }

    pub fn render(&self, format: Format) -> Result<String, Failure> {
        match format {
            Format::Json => json(self),
            Format::Csv => csv_rows(LAYER_HEADER, self.layers.iter().map(layer_cells)),
            Format::Text => {
                let mut out = String::new();
                let input = format!(
                    "{}x{}x{}",
                    self.input.height, self.input.width, self.input.channels
                );
                let mut head = vec![
                    ("name", self.name.clone()),
                    ("input", input),
                    ("resolution", self.resolution.to_string()),
                ];
                head.extend(self.summary.metrics());
                push_pairs(&mut out, &head);
                out.push('\n');
                out.push_str(&table(LAYER_HEADER, self.layers.iter().map(layer_cells)));
                Ok(out)
            }
        }
    }
}

const LAYER_HEADER: &[&str] = &[
    "conv",
    "id",
    "kind",
    "r_in_min",
    "r_in_max",
    "j_min",
    "j_max",
    "params",
    "macs",
    "classification",
];

fn layer_cells(row: &LayerRow) -> Vec<String> {
    vec![
        row.conv.map(|c| c.to_string()).unwrap_or_default(),
        row.id.clone(),
        row.kind.to_owned(),
        row.r_in_min.to_string(),
        row.r_in_max.to_string(),
        row.j_min.to_string(),
        row.j_max.to_string(),
        row.params.to_string(),
        row.macs.to_string(),
        row.classification.unwrap_or_default().to_owned(),
    ]
}

#[derive(Debug, Serialize)]
pub struct Optimization {
    pub name: String,
    pub pass: String,
    pub noop: bool,
    pub removed_node_ids: Vec<String>,
    pub modified_node_ids: Vec<String>,
    pub added_node_ids: Vec<String>,
    pub before: Summary,
    pub after: Summary,
    pub params_delta: i128,
    pub macs_delta: i128,
}

impl Optimization {
    pub fn new(name: &str, delta: &TransformDelta) -> Self {
        Self {
            name: name.to_owned(),
            pass: delta.pass.clone(),
            noop: delta.is_noop(),
            removed_node_ids: delta.removed_node_ids.clone(),
            modified_node_ids: delta.modified_node_ids.clone(),
            added_node_ids: delta.added_node_ids.clone(),
            before: Summary::of(&delta.before),
            after: Summary::of(&delta.after),
            params_delta: delta.params_delta(),
            macs_delta: delta.macs_delta(),
        }
    }

    pub fn render(&self, format: Format) -> Result<String, Failure> {
        let rows = side_by_side(
            &self.before,
            &self.after,
            self.params_delta,
            self.macs_delta,
        );
        match format {
            Format::Json => json(self),
            Format::Csv => csv_rows(&["metric", "before", "after", "delta"], rows),
            Format::Text => {
                let mut out = String::new();
                push_pairs(
                    &mut out,
                    &[
                        ("name", self.name.clone()),
                        ("pass", self.pass.clone()),
                        ("noop", self.noop.to_string()),
                        ("removed", self.removed_node_ids.join(",")),
                        ("modified", self.modified_node_ids.join(",")),
                        ("added", self.added_node_ids.join(",")),
                    ],
                );
                out.push('\n');
                out.push_str(&table(&["metric", "before", "after", "delta"], rows));
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Side {
    pub name: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Serialize)]
pub struct ComparisonReport {
    pub a: Side,
    pub b: Side,
    pub params_delta: i128,
    pub macs_delta: i128,
    pub params_ratio: Option<f64>,
    pub macs_ratio: Option<f64>,
}

impl ComparisonReport {
    pub fn new(cmp: &Comparison) -> Self {
        Self {
            a: Side {
                name: cmp.a_name.clone(),
                summary: Summary::of(&cmp.a),
            },
            b: Side {
                name: cmp.b_name.clone(),
                summary: Summary::of(&cmp.b),
            },
            params_delta: cmp.params_delta,
            macs_delta: cmp.macs_delta,
            params_ratio: cmp.params_ratio,
            macs_ratio: cmp.macs_ratio,
        }
    }

    pub fn render(&self, format: Format) -> Result<String, Failure> {
        let mut rows = vec![vec![
            "name".to_owned(),
            self.a.name.clone(),
            self.b.name.clone(),
            String::new(),
        ]];
        rows.extend(side_by_side(
            &self.a.summary,
            &self.b.summary,
            self.params_delta,
            self.macs_delta,
        ));
        let ratio = |r: Option<f64>| r.map(|r| r.to_string()).unwrap_or_default();
        rows.push(vec![
            "params_ratio".into(),
            String::new(),
            String::new(),
            ratio(self.params_ratio),
        ]);
        rows.push(vec![
            "macs_ratio".into(),
            String::new(),
            String::new(),
            ratio(self.macs_ratio),
        ]);
        let header = ["metric", "a", "b", "delta"];
        match format {
            Format::Json => json(self),
            Format::Csv => csv_rows(&header, rows),
            Format::Text => Ok(table(&header, rows)),
        }
    }
}

fn side_by_side(
    a: &Summary,
    b: &Summary,
    params_delta: i128,
    macs_delta: i128,
) -> Vec<Vec<String>> {
    a.metrics()
        .into_iter()
        .zip(b.metrics())
        .map(|((metric, va), (_, vb))| {
            let delta = match metric {
                "total_params" => params_delta.to_string(),
                "total_macs" => macs_delta.to_string(),
                "total_flops" => (2 * macs_delta).to_string(),
                _ => String::new(),
            };
            vec![metric.to_owned(), va, vb, delta]
        })
        .collect()
}

pub fn json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::analysis)?;
    text.push('\n');
    Ok(text)
}

fn csv_rows(
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<String, Failure> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).map_err(Failure::analysis)?;
    for row in rows {
        writer.write_record(&row).map_err(Failure::analysis)?;
    }
    let bytes = writer.into_inner().map_err(Failure::analysis)?;
    String::from_utf8(bytes).map_err(Failure::analysis)
}

fn push_pairs(out: &mut String, pairs: &[(&str, String)]) {
    let width = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (key, value) in pairs {
        let value = if value.is_empty() {
            "-"
        } else {
            value.as_str()
        };
        let _ = writeln!(out, "{key:<width$}  {value}");
    }
}

/// Left-aligned columns separated by two spaces; empty cells print as `-`.
fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
    cells.extend(rows.into_iter().map(|row| {
        row.into_iter()
            .map(|c| if c.is_empty() { "-".to_owned() } else { c })
            .collect()
    }));
    let widths: Vec<usize> = (0..header.len())
        .map(|i| cells.iter().map(|r| r[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}
