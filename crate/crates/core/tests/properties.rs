mod common;

use common::random_dag;
use proptest::prelude::*;
use rfscope_core::border::{classify_at, unproductive_tail};
use rfscope_core::cost::{cost_report, cost_report_with, propagate_shapes, CostOptions, Shape};
use rfscope_core::graph::{chain, conv_index, topological_order, InputSpec, LayerKind};
use rfscope_core::rf::{oracle, path_enumeration_oracle, propagate_dag, Rf};
use rfscope_core::transforms::{remove_stem_downsampling, truncate_at_border};
use rfscope_core::zoo::{build, Family, ZooSpec};
use rfscope_core::ArchGraph;

fn conv_layer() -> impl Strategy<Value = LayerKind> {
    (
        prop::sample::select(vec![1u64, 3, 5, 7]),
        1u64..=2,
        1u64..=3,
    )
        .prop_map(|(k, s, d)| LayerKind::Conv2d {
            kernel: k,
            stride: s,
            dilation: d,
            padding: rfscope_core::Padding::Same,
            filters: 8,
            bias: true,
        })
}

fn seq_layer() -> impl Strategy<Value = LayerKind> {
    prop_oneof![
        4 => conv_layer(),
        1 => (2u64..=3, 1u64..=2).prop_map(|(k, s)| LayerKind::max_pool(k, s)),
        1 => Just(LayerKind::BatchNorm),
        1 => Just(LayerKind::relu()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_equivalence_on_more_seeds(seed in 100u64..100_000) {
        let g = random_dag(seed, 12);
        let dag = propagate_dag(&g).unwrap();
        for id in topological_order(&g).unwrap() {
            let ann = &dag[id.as_str()];
            prop_assert_eq!((ann.r_in_min(), ann.r_in_max()), path_enumeration_oracle(&g, &id).unwrap());
        }
    }

    #[test]
    fn frontier_members_are_realized_by_paths(seed in 0u64..100_000) {
        let g = random_dag(seed, 12);
        let dag = propagate_dag(&g).unwrap();
        for id in topological_order(&g).unwrap() {
            let realized: Vec<Rf> = oracle::input_states(&g, &id).unwrap();
            let ann = &dag[id.as_str()];
            for s in ann.input.minimal().iter().chain(ann.input.maximal()) {
                prop_assert!(realized.contains(&Rf::Finite(*s)), "{} not realized at {}", s.r, id);
            }
            // Nothing realized dominates a minimal member strictly.
            for s in ann.input.minimal() {
                for r in realized.iter().filter_map(Rf::finite) {
                    prop_assert!(!(r.r <= s.r && r.j <= s.j && r != *s));
                }
            }
            for s in ann.input.maximal() {
                for r in realized.iter().filter_map(Rf::finite) {
                    prop_assert!(!(r.r >= s.r && r.j >= s.j && r != *s));
                }
            }
        }
    }

    #[test]
    fn topological_order_is_a_stable_permutation(seed in 0u64..100_000) {
        let g = random_dag(seed, 12);
        let order = topological_order(&g).unwrap();
        prop_assert_eq!(&order, &topological_order(&g.clone()).unwrap());
        let mut ids: Vec<&str> = g.nodes().iter().map(|n| n.id.as_str()).collect();
        let mut sorted = order.iter().map(String::as_str).collect::<Vec<_>>();
        ids.sort_unstable();
        sorted.sort_unstable();
        prop_assert_eq!(ids, sorted);
        let pos = |id: &str| order.iter().position(|o| o == id).unwrap();
        for (s, d) in g.edges() {
            prop_assert!(pos(s) < pos(d));
        }
        let idx = conv_index(&g).unwrap();
        let mut ordinals: Vec<usize> = idx.values().copied().collect();
        ordinals.sort_unstable();
        prop_assert_eq!(ordinals, (1..=idx.len()).collect::<Vec<_>>());
        for (a, oa) in &idx {
            for (b, ob) in &idx {
                prop_assert_eq!(oa < ob, pos(a) < pos(b));
            }
        }
    }

    #[test]
    fn border_moves_later_as_resolution_grows(seed in 0u64..100_000, i in 1u64..200, extra in 0u64..200) {
        let g = random_dag(seed, 12);
        let small = classify_at(&g, i).unwrap();
        let large = classify_at(&g, i + extra).unwrap();
        match (small.border_min, large.border_min) {
            (Some(a), Some(b)) => prop_assert!(b >= a),
            (None, Some(_)) => prop_assert!(false, "border appeared at larger i"),
            _ => {}
        }
        prop_assert!(large.unproductive_count() <= small.unproductive_count());
        for rep in [&small, &large] {
            if let (Some(mn), Some(mx)) = (rep.border_min, rep.border_max) {
                prop_assert!(mx <= mn);
            }
            if rep.border_min.is_some() {
                prop_assert!(rep.border_max.is_some());
            }
            for c in &rep.per_conv {
                prop_assert!(c.r_in_max >= c.r_in_min);
            }
        }
    }

    #[test]
    fn sequential_rule_partitions_cleanly(layers in prop::collection::vec(seq_layer(), 1..16), i in 1u64..64) {
        let g = chain("seq", InputSpec::square(i, 8), &layers);
        let rep = classify_at(&g, i).unwrap();
        for c in &rep.per_conv {
            let before_border = rep.border_min.is_none_or(|b| c.ordinal < b);
            prop_assert_eq!(before_border, !c.r_in_min.exceeds(i));
            prop_assert_eq!(c.r_in_min, c.r_in_max);
        }
        prop_assert_eq!(rep.border_min, rep.border_max);
    }

    #[test]
    fn truncation_is_safe_on_random_graphs(seed in 0u64..100_000, i in 8u64..48) {
        let g = random_dag(seed, 12).with_input(InputSpec::square(i, common::CHANNELS));
        prop_assume!(cost_report(&g).is_ok());
        let g = with_head(&g);
        match truncate_at_border(&g, 10) {
            Ok((out, delta)) => {
                prop_assert_eq!(delta.after.border.unproductive_count(), 0);
                prop_assert!(delta.after.cost.total_macs <= delta.before.cost.total_macs);
                let (again, d2) = truncate_at_border(&out, 10).unwrap();
                prop_assert!(d2.is_noop());
                prop_assert_eq!(again, out);
                let tail = unproductive_tail(&g).unwrap();
                prop_assert_eq!(tail.is_empty(), delta.is_noop());
            }
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn stem_removal_shrinks_rf_and_grows_macs(seed in 0u64..100_000) {
        let g = with_head(&random_dag(seed, 12).with_input(InputSpec::square(64, common::CHANNELS)));
        prop_assume!(cost_report(&g).is_ok());
        let Ok((out, delta)) = remove_stem_downsampling(&g, 1) else {
            return Ok(());
        };
        prop_assume!(cost_report(&out).is_ok());
        // A deleted pool takes its own window MACs with it, so the trade-off
        // direction is a statement about weight-bearing layers.
        let weights_only = CostOptions { count_elementwise: false, ..CostOptions::default() };
        prop_assert!(
            cost_report_with(&out, &weights_only).unwrap().total_macs
                >= cost_report_with(&g, &weights_only).unwrap().total_macs
        );
        for c in &delta.before.border.per_conv {
            if let Some(a) = delta.after.border.verdict(&c.node_id) {
                prop_assert!(a.r_in_min <= c.r_in_min);
                prop_assert!(a.r_in_max <= c.r_in_max);
            }
        }
        if let (Some(before), Some(after)) = (delta.before.border.border_min, delta.after.border.border_min) {
            prop_assert!(after >= before);
        }
    }

    #[test]
    fn stride_reduction_never_lowers_macs(layers in prop::collection::vec(conv_layer(), 1..8), pick in 0usize..8) {
        let g = chain("c", InputSpec::square(64, 8), &layers);
        let mut relaxed = layers.clone();
        let pick = pick % relaxed.len();
        if let LayerKind::Conv2d { stride, .. } = &mut relaxed[pick] {
            *stride = 1;
        }
        let h = chain("c", InputSpec::square(64, 8), &relaxed);
        let (a, b) = (cost_report(&g).unwrap(), cost_report(&h).unwrap());
        prop_assert!(b.total_macs >= a.total_macs);
        prop_assert_eq!(a.total_params, b.total_params);
        prop_assert_eq!(a.total_flops, 2 * a.total_macs);
    }

    #[test]
    fn removing_a_parameter_layer_lowers_params(layers in prop::collection::vec(seq_layer(), 2..10), pick in 0usize..10) {
        let g = chain("c", InputSpec::square(64, 8), &layers);
        prop_assume!(cost_report(&g).is_ok());
        let pick = pick % layers.len();
        prop_assume!(matches!(layers[pick], LayerKind::Conv2d { .. } | LayerKind::BatchNorm));
        let mut fewer = layers.clone();
        fewer.remove(pick);
        let h = chain("c", InputSpec::square(64, 8), &fewer);
        prop_assume!(cost_report(&h).is_ok());
        prop_assert!(cost_report(&h).unwrap().total_params < cost_report(&g).unwrap().total_params);
    }

    #[test]
    fn shapes_compose_over_chain_splits(layers in prop::collection::vec(seq_layer(), 2..12), split in 1usize..11) {
        let input = InputSpec::square(64, 8);
        let whole = chain("w", input, &layers);
        prop_assume!(propagate_shapes(&whole).is_ok());
        let split = split.min(layers.len() - 1);
        let prefix = chain("p", input, &layers[..split]);
        let mid: Shape = propagate_shapes(&prefix).unwrap().last().unwrap().shape;
        let suffix = chain("s", InputSpec::new(mid.height, mid.width, mid.channels), &layers[split..]);
        let expected: Vec<Shape> = propagate_shapes(&whole).unwrap().iter().map(|s| s.shape).collect();
        let mut got: Vec<Shape> = propagate_shapes(&prefix).unwrap().iter().map(|s| s.shape).collect();
        got.extend(propagate_shapes(&suffix).unwrap().iter().skip(1).map(|s| s.shape));
        prop_assert_eq!(got, expected);
    }
}

fn with_head(g: &ArchGraph) -> ArchGraph {
    let sink = topological_order(g).unwrap().pop().unwrap();
    let mut nodes: Vec<(String, LayerKind)> = g
        .nodes()
        .iter()
        .map(|n| (n.id.clone(), n.kind.clone()))
        .collect();
    let mut edges = g.edges().to_vec();
    nodes.push(("gap".into(), LayerKind::GlobalAvgPool));
    nodes.push(("fc".into(), LayerKind::dense(10)));
    edges.push((sink, "gap".into()));
    edges.push(("gap".into(), "fc".into()));
    ArchGraph::new(g.name(), *g.input(), nodes, edges)
}

#[test]
fn zoo_builds_are_valid_and_reproducible() {
    for family in Family::ALL {
        let spec = ZooSpec::cifar(family);
        let g = build(&spec).unwrap();
        assert!(rfscope_core::validate(&g).is_empty(), "{family}");
        assert_eq!(g, build(&spec).unwrap());
    }
}

#[test]
fn resnet_skips_only_add_projection_params() {
    for family in [Family::ResNet18, Family::ResNet34] {
        let with = build(&ZooSpec::cifar(family)).unwrap();
        let without = build(&ZooSpec::cifar(family).with_skips(false)).unwrap();
        let conv_params = |g: &ArchGraph, skip_proj: bool| -> u64 {
            let rep = cost_report(g).unwrap();
            g.nodes()
                .iter()
                .filter(|n| n.kind.is_conv() && !(skip_proj && n.id.ends_with("_proj")))
                .map(|n| rep.layer(&n.id).unwrap().params)
                .sum()
        };
        assert_eq!(conv_params(&with, true), conv_params(&without, false));
        assert!(conv_params(&with, false) > conv_params(&without, false));
    }
}

#[test]
fn zoo_stem_flag_matches_stem_removal_pass() {
    for family in [Family::ResNet18, Family::ResNet34] {
        let g = build(&ZooSpec::cifar(family)).unwrap();
        let (removed, _) = remove_stem_downsampling(&g, 2).unwrap();
        let flagged = build(&ZooSpec::cifar(family).with_stem_downsampling(false)).unwrap();
        assert_eq!(removed.with_name(flagged.name()), flagged);
    }
}

#[test]
fn vgg19_dilation_three_has_seven_pixel_kernels() {
    let g = build(&ZooSpec::cifar(Family::Vgg19).with_dilation(3)).unwrap();
    for n in g.nodes() {
        if let LayerKind::Conv2d {
            kernel, dilation, ..
        } = n.kind
        {
            assert_eq!(rfscope_core::rf::effective_kernel(kernel, dilation), 7);
        }
    }
}

#[test]
fn huge_resolution_has_no_border_on_zoo() {
    for family in Family::ALL {
        let g = build(&ZooSpec::cifar(family)).unwrap();
        let rep = classify_at(&g, 1_000_000_000).unwrap();
        assert_eq!(rep.border_min, None);
        assert_eq!(rep.unproductive_count(), 0);
    }
}

#[test]
fn mpnet18_interleaves_module_paths() {
    let g = build(&ZooSpec::cifar(Family::MpNet18)).unwrap();
    let idx = conv_index(&g).unwrap();
    assert_eq!(idx.len(), 16);
    for (id, ord) in &idx {
        // Odd ordinals are 3x3 paths, even ordinals 7x7 paths.
        let expected = if ord % 2 == 1 { "_p3_conv" } else { "_p7_conv" };
        assert!(id.ends_with(expected), "{id} -> {ord}");
    }
}
