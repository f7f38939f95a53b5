#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfscope_core::graph::{ArchGraph, GraphBuilder, InputSpec, LayerKind};

pub const CHANNELS: u64 = 8;

/// Random single-input, single-sink DAG with at most `max_layers` layer nodes
/// (Input excluded), kernels in {1,3,5,7}, strides in {1,2} and at most two
/// Add merges. All channel counts are equal so every Add is well formed.
pub fn random_dag(seed: u64, max_layers: usize) -> ArchGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new(format!("random{seed}"), InputSpec::square(4096, CHANNELS));
    let mut ids = vec!["input".to_owned()];
    let mut used = vec![false];
    let mut merges = 0;
    let target = rng.gen_range(2..=max_layers - 1);
    for n in 0..target {
        let id = format!("n{n}");
        let open: Vec<usize> = (0..ids.len()).filter(|&i| !used[i]).collect();
        if merges == 0 && ids.len() >= 3 && rng.gen_bool(0.3) {
            let mut picks: Vec<usize> = (0..ids.len()).collect();
            picks.shuffle(&mut rng);
            picks.truncate(rng.gen_range(2..=3.min(ids.len())));
            let srcs: Vec<&str> = picks.iter().map(|&i| ids[i].as_str()).collect();
            b.merge(&srcs, id.clone(), LayerKind::Add);
            for i in picks {
                used[i] = true;
            }
            merges += 1;
        } else {
            // Prefer consuming an open node so few dangling ends remain.
            let src = if !open.is_empty() && rng.gen_bool(0.7) {
                *open.choose(&mut rng).unwrap()
            } else {
                rng.gen_range(0..ids.len())
            };
            b.after(&ids[src].clone(), id.clone(), random_layer(&mut rng));
            used[src] = true;
        }
        ids.push(id);
        used.push(false);
    }
    let open: Vec<&str> = (0..ids.len())
        .filter(|&i| !used[i])
        .map(|i| ids[i].as_str())
        .collect();
    if open.len() > 1 {
        b.merge(&open, "sink", LayerKind::Add);
    }
    b.build()
}

fn random_layer(rng: &mut ChaCha8Rng) -> LayerKind {
    let kernel = *[1u64, 3, 5, 7].choose(rng).unwrap();
    let stride = *[1u64, 2].choose(rng).unwrap();
    match rng.gen_range(0..10) {
        0..=5 => LayerKind::conv(kernel, stride, CHANNELS),
        6 | 7 => LayerKind::max_pool(kernel.max(2), stride),
        8 => LayerKind::BatchNorm,
        _ => LayerKind::relu(),
    }
}

/// Prints a single criterion verdict line.
pub fn verdict(criterion: &str, ok: bool, detail: impl std::fmt::Display) {
    println!(
        "[{}] {criterion}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
}

/// Every Input-to-`target` path as a list of node ids (target included).
pub fn all_paths(graph: &ArchGraph, target: &str) -> Vec<Vec<String>> {
    let preds = graph.predecessors(target);
    if preds.is_empty() {
        return vec![vec![target.to_owned()]];
    }
    let mut out = Vec::new();
    for p in preds {
        for mut path in all_paths(graph, p) {
            path.push(target.to_owned());
            out.push(path);
        }
    }
    out
}
