//! Static receptive-field analysis for convolutional network architectures.
//!
//! The crate models a network as an [`ArchGraph`], propagates receptive-field
//! sizes through it ([`rf`]), finds the border layer past which convolutions
//! can no longer see new input ([`border`]), counts parameters and MACs
//! ([`cost`]) and rewrites architectures accordingly ([`transforms`]).
//!
//! ```
//! use rfscope_core::{border, zoo};
//!
//! let vgg16 = zoo::build(&zoo::ZooSpec::cifar(zoo::Family::Vgg16)).unwrap();
//! let report = border::classify(&vgg16).unwrap();
//! assert_eq!(report.border_min, Some(8));
//! ```

pub mod border;
pub mod cost;
pub mod graph;
pub mod io;
pub mod rf;
pub mod transforms;
pub mod zoo;

pub use border::{classify, BorderReport, Classification};
pub use cost::{cost_report, CostOptions, CostReport, Shape};
pub use graph::{
    conv_index, topological_order, validate, ArchGraph, GraphBuilder, InputSpec, LayerKind,
    Padding, Violation,
};
pub use rf::{propagate_dag, Rf, RfSize, RfState};
pub use transforms::{compare, remove_stem_downsampling, truncate_at_border, TransformDelta};
