//! `rfscope`: receptive-field analysis and rewriting of CNN architectures.
//!
//! Exit codes: 0 success, 2 invalid architecture, 3 optimization was a no-op,
//! 64 usage error, 66 unreadable or unwritable file.

mod report;
mod source;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use rfscope_core::graph::LayerKind;
use rfscope_core::transforms::compare;
use rfscope_core::zoo::Family;
use rfscope_core::{io, remove_stem_downsampling, truncate_at_border, ArchGraph, Violation};

use report::{Analysis, ComparisonReport, Format, Optimization};
use source::Failure;

const EXIT_NOOP: u8 = 3;
const DEFAULT_STEM_COUNT: usize = 2;

#[derive(Debug, Parser)]
#[command(
    name = "rfscope",
    version,
    about = "Receptive-field analysis for CNN architectures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-layer receptive field, border and cost report.
    Analyze {
        /// Architecture JSON file or `zoo:NAME[,key=value]*`.
        arch: String,
        #[arg(long, num_args = 2, value_names = ["H", "W"])]
        input_size: Option<Vec<u64>>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Apply a rewrite pass and report what changed.
    Optimize {
        arch: String,
        /// `truncate` or `remove-stem-downsampling[:N]` (N defaults to 2).
        #[arg(long)]
        pass: String,
        /// Classes of the new head; defaults to the width of the existing
        /// final dense layer.
        #[arg(long)]
        classes: Option<u64>,
        /// Write the rewritten architecture document here.
        #[arg(long)]
        emit: Option<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["H", "W"])]
        input_size: Option<Vec<u64>>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Built-in reference architectures.
    Zoo {
        #[command(subcommand)]
        action: ZooAction,
    },
    /// Side-by-side border and cost comparison (`b - a`).
    Compare {
        a: String,
        b: String,
        #[arg(long, num_args = 2, value_names = ["H", "W"])]
        input_size: Option<Vec<u64>>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Check an architecture document.
    Validate {
        arch: String,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

#[derive(Debug, Subcommand)]
enum ZooAction {
    /// List the available architectures.
    List,
    /// Write an architecture document, e.g. `resnet18,skips=off`.
    Emit {
        name: String,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { 64 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            let mut stderr = std::io::stderr().lock();
            if failure.violations().is_empty() {
                let _ = writeln!(stderr, "error: {failure}");
            } else {
                for v in failure.violations() {
                    let _ = writeln!(stderr, "error: {}", v.message);
                }
            }
            ExitCode::from(failure.exit_code())
        }
    }
}

/// Writes a report to stdout; a closed pipe is not an error worth a panic.
fn emit(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush());
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Analyze {
            arch,
            input_size,
            format,
        } => {
            let graph = source::load(&arch, input_size.as_deref())?;
            emit(&Analysis::of(&graph)?.render(format)?);
            Ok(0)
        }
        Command::Optimize {
            arch,
            pass,
            classes,
            emit: out,
            input_size,
            format,
        } => {
            let graph = source::load(&arch, input_size.as_deref())?;
            let (rewritten, delta) = match parse_pass(&pass)? {
                Pass::Truncate => {
                    let classes = match classes {
                        Some(k) => k,
                        None => head_classes(&graph).ok_or_else(|| {
                            Failure::Usage(
                                "--classes is required: the graph has no dense layer".into(),
                            )
                        })?,
                    };
                    truncate_at_border(&graph, classes)
                }
                Pass::RemoveStem(count) => remove_stem_downsampling(&graph, count),
            }
            .map_err(Failure::analysis)?;
            emit(&Optimization::new(graph.name(), &delta).render(format)?);
            if let Some(path) = out {
                source::write_file(&path, &io::serialize(&rewritten))?;
            }
            if delta.is_noop() {
                eprintln!("note: pass `{}` changed nothing", delta.pass);
                return Ok(EXIT_NOOP);
            }
            Ok(0)
        }
        Command::Zoo {
            action: ZooAction::List,
        } => {
            let names: String = Family::ALL.iter().map(|f| format!("{f}\n")).collect();
            emit(&names);
            Ok(0)
        }
        Command::Zoo {
            action: ZooAction::Emit { name, out },
        } => {
            let name = name.strip_prefix("zoo:").unwrap_or(&name);
            let graph = source::build_zoo(&source::parse_zoo_spec(name)?)?;
            let text = io::serialize(&graph);
            match out {
                Some(path) => source::write_file(&path, &text)?,
                None => emit(&text),
            }
            Ok(0)
        }
        Command::Compare {
            a,
            b,
            input_size,
            format,
        } => {
            let a = source::load(&a, input_size.as_deref())?;
            let b = source::load(&b, input_size.as_deref())?;
            let cmp = compare(&a, &b).map_err(Failure::analysis)?;
            emit(&ComparisonReport::new(&cmp).render(format)?);
            Ok(0)
        }
        Command::Validate { arch, format } => validate(&arch, format),
    }
}

#[derive(Serialize)]
struct ValidationReport<'a> {
    valid: bool,
    name: Option<String>,
    violations: &'a [Violation],
}

fn validate(arch: &str, format: Format) -> Result<u8, Failure> {
    let outcome = source::load(arch, None);
    let (name, violations) = match &outcome {
        Ok(graph) => (Some(graph.name().to_owned()), &[][..]),
        Err(f) if !f.violations().is_empty() => (None, f.violations()),
        Err(_) => return outcome.map(|_| 0),
    };
    if format == Format::Json {
        emit(&report::json(&ValidationReport {
            valid: violations.is_empty(),
            name,
            violations,
        })?);
    } else if let Ok(graph) = &outcome {
        emit(&format!(
            "ok: {} ({} layers, {} edges)\n",
            graph.name(),
            graph.len(),
            graph.edges().len()
        ));
    }
    outcome.map(|_| 0)
}

enum Pass {
    Truncate,
    RemoveStem(usize),
}

fn parse_pass(text: &str) -> Result<Pass, Failure> {
    const STEM: &str = "remove-stem-downsampling";
    match text.split_once(':') {
        None if text == "truncate" => Ok(Pass::Truncate),
        None if text == STEM => Ok(Pass::RemoveStem(DEFAULT_STEM_COUNT)),
        Some((STEM, n)) => n
            .parse()
            .map(Pass::RemoveStem)
            .map_err(|_| Failure::Usage(format!("invalid layer count `{n}` in --pass"))),
        _ => Err(Failure::Usage(format!(
            "unknown pass `{text}` (expected truncate or {STEM}[:N])"
        ))),
    }
}

/// Units of the last dense layer, taken as the class count.
fn head_classes(graph: &ArchGraph) -> Option<u64> {
    graph.nodes().iter().rev().find_map(|n| match n.kind {
        LayerKind::Dense { units, .. } => Some(units),
        _ => None,
    })
}
