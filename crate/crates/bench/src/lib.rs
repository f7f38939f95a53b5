//! Criterion benchmarks for rfscope; see `benches/`.
