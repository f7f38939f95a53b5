//! Resolving `<arch>` arguments: a JSON document path or `zoo:NAME[,key=value]*`.

use std::fs;
use std::path::{Path, PathBuf};

use rfscope_core::io::{self, DocumentError};
use rfscope_core::zoo::{self, Family, ZooSpec};
use rfscope_core::{ArchGraph, InputSpec, Violation};

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", .path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Document(#[from] DocumentError),
    #[error("{0}")]
    Analysis(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 64,
            Failure::File { .. } => 66,
            Failure::Document(_) | Failure::Analysis(_) => 2,
        }
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            Failure::Document(DocumentError::Invalid(v)) => v,
            _ => &[],
        }
    }

    pub fn analysis(err: impl std::fmt::Display) -> Self {
        Failure::Analysis(err.to_string())
    }
}

const ZOO_PREFIX: &str = "zoo:";

/// Parses `NAME[,key=value]*`; recognised keys are `dilation`, `skips`,
/// `stem` and `classes`.
pub fn parse_zoo_spec(text: &str) -> Result<ZooSpec, Failure> {
    let mut parts = text.split(',');
    let name = parts.next().unwrap_or_default();
    let family: Family = name.parse().map_err(|e| Failure::Usage(format!("{e}")))?;
    let mut spec = ZooSpec::cifar(family);
    for part in parts {
        let (key, value) = part.split_once('=').ok_or_else(|| {
            Failure::Usage(format!("expected key=value in zoo spec, got `{part}`"))
        })?;
        match key {
            "dilation" => spec = spec.with_dilation(number(key, value)?),
            "classes" => spec.num_classes = number(key, value)?,
            "skips" => spec = spec.with_skips(flag(key, value)?),
            "stem" => spec = spec.with_stem_downsampling(flag(key, value)?),
            _ => {
                return Err(Failure::Usage(format!(
                    "unknown zoo option `{key}` (expected dilation, skips, stem or classes)"
                )))
            }
        }
    }
    Ok(spec)
}

fn number(key: &str, value: &str) -> Result<u64, Failure> {
    value
        .parse()
        .map_err(|_| Failure::Usage(format!("`{key}` expects an integer, got `{value}`")))
}

fn flag(key: &str, value: &str) -> Result<bool, Failure> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(Failure::Usage(format!(
            "`{key}` expects on/off, got `{value}`"
        ))),
    }
}

pub fn build_zoo(spec: &ZooSpec) -> Result<ArchGraph, Failure> {
    zoo::build(spec).map_err(|e| Failure::Usage(e.to_string()))
}

pub fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|source| Failure::File {
        path: path.to_owned(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|source| Failure::File {
        path: path.to_owned(),
        source,
    })
}

/// Loads and validates an architecture, optionally overriding the input
/// height and width (channels are kept).
pub fn load(arch: &str, input_size: Option<&[u64]>) -> Result<ArchGraph, Failure> {
    let resize = |input: InputSpec| match input_size {
        Some(&[h, w]) => InputSpec::new(h, w, input.channels),
        _ => input,
    };
    if let Some(rest) = arch.strip_prefix(ZOO_PREFIX) {
        let mut spec = parse_zoo_spec(rest)?;
        spec.input = resize(spec.input);
        return build_zoo(&spec);
    }
    let graph = io::parse(&read_file(Path::new(arch))?)?;
    let input = resize(*graph.input());
    if input == *graph.input() {
        return Ok(graph);
    }
    let graph = graph.with_input(input);
    let violations = rfscope_core::validate(&graph);
    if violations.is_empty() {
        Ok(graph)
    } else {
        Err(DocumentError::Invalid(violations).into())
    }
}
