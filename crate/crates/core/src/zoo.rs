//! Deterministic builders for the reference architectures.
//!
//! All convolutions use same padding. VGG convs carry a bias and are followed
//! by ReLU; ResNet and MPNet convs are bias-free and followed by BatchNorm and
//! ReLU. Every model ends in GlobalAvgPool -> Dense -> Softmax.
//!
//! MPNet18 is a reconstruction: four stages, each a stride-2 max-pool
//! followed by two "Module A" blocks (a 3x3 path and a 7x7 path merged by
//! addition), 64/128/256/512 filters. It reproduces `b_min = conv11` and
//! `b_max = conv7` at 32x32.
//!
//! MPNet36 is a best guess: the same skeleton with four "Module B" blocks per
//! stage, where Module B merges a single 3x3 conv with a stack of two 3x3
//! convs. Its border indices are not meant to match any published figure.

use std::fmt;
use std::str::FromStr;

use crate::graph::{ArchGraph, GraphBuilder, InputSpec, LayerKind, Padding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Vgg11,
    Vgg13,
    Vgg16,
    Vgg19,
    ResNet18,
    ResNet34,
    MpNet18,
    MpNet36,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Vgg11,
        Family::Vgg13,
        Family::Vgg16,
        Family::Vgg19,
        Family::ResNet18,
        Family::ResNet34,
        Family::MpNet18,
        Family::MpNet36,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Vgg11 => "vgg11",
            Family::Vgg13 => "vgg13",
            Family::Vgg16 => "vgg16",
            Family::Vgg19 => "vgg19",
            Family::ResNet18 => "resnet18",
            Family::ResNet34 => "resnet34",
            Family::MpNet18 => "mpnet18",
            Family::MpNet36 => "mpnet36",
        }
    }

    pub fn is_vgg(&self) -> bool {
        matches!(
            self,
            Family::Vgg11 | Family::Vgg13 | Family::Vgg16 | Family::Vgg19
        )
    }

    pub fn is_resnet(&self) -> bool {
        matches!(self, Family::ResNet18 | Family::ResNet34)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = ZooError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| ZooError::UnknownFamily(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ZooOptions {
    /// Uniform dilation of every 3x3 conv (VGG only).
    pub dilation: Option<u64>,
    /// Residual connections on or off (ResNet only).
    pub skips_enabled: Option<bool>,
    /// Stride-2 stem conv and max-pool on or off (ResNet only).
    pub stem_downsampling: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZooSpec {
    pub family: Family,
    pub input: InputSpec,
    pub num_classes: u64,
    pub options: ZooOptions,
}

impl ZooSpec {
    /// 32x32x3 input, 10 classes, default options.
    pub fn cifar(family: Family) -> Self {
        Self {
            family,
            input: InputSpec::square(32, 3),
            num_classes: 10,
            options: ZooOptions::default(),
        }
    }

    pub fn with_dilation(mut self, dilation: u64) -> Self {
        self.options.dilation = Some(dilation);
        self
    }

    pub fn with_skips(mut self, enabled: bool) -> Self {
        self.options.skips_enabled = Some(enabled);
        self
    }

    pub fn with_stem_downsampling(mut self, enabled: bool) -> Self {
        self.options.stem_downsampling = Some(enabled);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ZooError {
    #[error("unknown architecture `{0}` (expected one of vgg11, vgg13, vgg16, vgg19, resnet18, resnet34, mpnet18, mpnet36)")]
    UnknownFamily(String),
    #[error("option `{option}` is not supported by {family}")]
    UnsupportedOption {
        family: Family,
        option: &'static str,
    },
    #[error("invalid value for `{option}`: {detail}")]
    InvalidValue {
        option: &'static str,
        detail: String,
    },
}

pub fn build(spec: &ZooSpec) -> Result<ArchGraph, ZooError> {
    check_options(spec)?;
    let g = match spec.family {
        Family::Vgg11 => vgg(spec, &VGG11),
        Family::Vgg13 => vgg(spec, &VGG13),
        Family::Vgg16 => vgg(spec, &VGG16),
        Family::Vgg19 => vgg(spec, &VGG19),
        Family::ResNet18 => resnet(spec, [2, 2, 2, 2]),
        Family::ResNet34 => resnet(spec, [3, 4, 6, 3]),
        Family::MpNet18 => mpnet(spec, 2, module_a),
        Family::MpNet36 => mpnet(spec, 4, module_b),
    };
    Ok(g)
}

fn check_options(spec: &ZooSpec) -> Result<(), ZooError> {
    let o = &spec.options;
    let family = spec.family;
    if o.dilation.is_some() && !family.is_vgg() {
        return Err(ZooError::UnsupportedOption {
            family,
            option: "dilation",
        });
    }
    if o.dilation == Some(0) {
        return Err(ZooError::InvalidValue {
            option: "dilation",
            detail: "must be at least 1".into(),
        });
    }
    if o.skips_enabled.is_some() && !family.is_resnet() {
        return Err(ZooError::UnsupportedOption {
            family,
            option: "skips",
        });
    }
    if o.stem_downsampling.is_some() && !family.is_resnet() {
        return Err(ZooError::UnsupportedOption {
            family,
            option: "stem",
        });
    }
    if spec.num_classes < 2 {
        return Err(ZooError::InvalidValue {
            option: "classes",
            detail: format!("need at least 2 classes, got {}", spec.num_classes),
        });
    }
    let i = spec.input;
    if i.height == 0 || i.width == 0 || i.channels == 0 {
        return Err(ZooError::InvalidValue {
            option: "input",
            detail: "input dimensions must be positive".into(),
        });
    }
    Ok(())
}

fn model_name(spec: &ZooSpec) -> String {
    let mut name = spec.family.name().to_owned();
    if let Some(d) = spec.options.dilation.filter(|&d| d != 1) {
        name.push_str(&format!("-dilation{d}"));
    }
    if spec.options.skips_enabled == Some(false) {
        name.push_str("-noskip");
    }
    if spec.options.stem_downsampling == Some(false) {
        name.push_str("-nostem");
    }
    name
}

fn head(b: &mut GraphBuilder, classes: u64) {
    b.then("gap", LayerKind::GlobalAvgPool);
    b.then("fc", LayerKind::dense(classes));
    b.then("softmax", LayerKind::Softmax);
}

/// `0` marks a 2x2 stride-2 max-pool.
const M: u64 = 0;
const VGG11: [u64; 13] = [64, M, 128, M, 256, 256, M, 512, 512, M, 512, 512, M];
const VGG13: [u64; 15] = [
    64, 64, M, 128, 128, M, 256, 256, M, 512, 512, M, 512, 512, M,
];
const VGG16: [u64; 18] = [
    64, 64, M, 128, 128, M, 256, 256, 256, M, 512, 512, 512, M, 512, 512, 512, M,
];
const VGG19: [u64; 21] = [
    64, 64, M, 128, 128, M, 256, 256, 256, 256, M, 512, 512, 512, 512, M, 512, 512, 512, 512, M,
];

fn vgg(spec: &ZooSpec, config: &[u64]) -> ArchGraph {
    let dilation = spec.options.dilation.unwrap_or(1);
    let mut b = GraphBuilder::new(model_name(spec), spec.input);
    let (mut conv, mut pool) = (0, 0);
    for &item in config {
        if item == M {
            pool += 1;
            b.then(format!("pool{pool}"), LayerKind::max_pool(2, 2));
        } else {
            conv += 1;
            b.then(
                format!("conv{conv}"),
                LayerKind::Conv2d {
                    kernel: 3,
                    stride: 1,
                    dilation,
                    padding: Padding::Same,
                    filters: item,
                    bias: true,
                },
            );
            b.then(format!("relu{conv}"), LayerKind::relu());
        }
    }
    head(&mut b, spec.num_classes);
    b.build()
}

fn plain_conv(kernel: u64, stride: u64, filters: u64) -> LayerKind {
    LayerKind::Conv2d {
        kernel,
        stride,
        dilation: 1,
        padding: Padding::Same,
        filters,
        bias: false,
    }
}

fn resnet(spec: &ZooSpec, blocks: [usize; 4]) -> ArchGraph {
    let skips = spec.options.skips_enabled.unwrap_or(true);
    let stem = spec.options.stem_downsampling.unwrap_or(true);
    let mut b = GraphBuilder::new(model_name(spec), spec.input);
    b.then("stem_conv", plain_conv(7, if stem { 2 } else { 1 }, 64));
    b.then("stem_bn", LayerKind::BatchNorm);
    b.then("stem_relu", LayerKind::relu());
    if stem {
        b.then(
            "stem_pool",
            LayerKind::Pool {
                mode: crate::graph::PoolMode::Max,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
        );
    }
    let mut channels = 64;
    for (stage, &count) in blocks.iter().enumerate() {
        let filters = 64u64 << stage;
        for block in 0..count {
            let stride = if stage > 0 && block == 0 { 2 } else { 1 };
            let p = format!("s{}b{}", stage + 1, block + 1);
            let x = b.last().expect("block input").to_owned();
            b.then(format!("{p}_conv1"), plain_conv(3, stride, filters));
            b.then(format!("{p}_bn1"), LayerKind::BatchNorm);
            b.then(format!("{p}_relu1"), LayerKind::relu());
            b.then(format!("{p}_conv2"), plain_conv(3, 1, filters));
            let main = b.then(format!("{p}_bn2"), LayerKind::BatchNorm);
            if skips {
                let shortcut = if stride != 1 || channels != filters {
                    b.after(&x, format!("{p}_proj"), plain_conv(1, stride, filters));
                    b.then(format!("{p}_proj_bn"), LayerKind::BatchNorm)
                } else {
                    x
                };
                b.merge(&[&main, &shortcut], format!("{p}_add"), LayerKind::Add);
            }
            b.then(format!("{p}_relu2"), LayerKind::relu());
            channels = filters;
        }
    }
    head(&mut b, spec.num_classes);
    b.build()
}

type Module = fn(&mut GraphBuilder, prefix: &str, filters: u64);

fn conv_bn_relu(b: &mut GraphBuilder, src: &str, id: &str, kernel: u64, filters: u64) -> String {
    b.after(src, format!("{id}_conv"), plain_conv(kernel, 1, filters));
    b.then(format!("{id}_bn"), LayerKind::BatchNorm);
    b.then(format!("{id}_relu"), LayerKind::relu())
}

/// 3x3 path and 7x7 path, merged by addition.
fn module_a(b: &mut GraphBuilder, p: &str, filters: u64) {
    let x = b.last().expect("module input").to_owned();
    let short = conv_bn_relu(b, &x, &format!("{p}_p3"), 3, filters);
    let long = conv_bn_relu(b, &x, &format!("{p}_p7"), 7, filters);
    b.merge(&[&short, &long], format!("{p}_add"), LayerKind::Add);
}

/// One 3x3 conv against two stacked 3x3 convs, merged by addition.
fn module_b(b: &mut GraphBuilder, p: &str, filters: u64) {
    let x = b.last().expect("module input").to_owned();
    let short = conv_bn_relu(b, &x, &format!("{p}_short"), 3, filters);
    let mid = conv_bn_relu(b, &x, &format!("{p}_long1"), 3, filters);
    let long = conv_bn_relu(b, &mid, &format!("{p}_long2"), 3, filters);
    b.merge(&[&short, &long], format!("{p}_add"), LayerKind::Add);
}

fn mpnet(spec: &ZooSpec, modules_per_stage: usize, module: Module) -> ArchGraph {
    let mut b = GraphBuilder::new(model_name(spec), spec.input);
    for stage in 0..4 {
        let filters = 64u64 << stage;
        b.then(format!("s{}_pool", stage + 1), LayerKind::max_pool(2, 2));
        for m in 0..modules_per_stage {
            module(&mut b, &format!("s{}m{}", stage + 1, m + 1), filters);
        }
    }
    head(&mut b, spec.num_classes);
    b.build()
}
