//! Criterion benchmarks for `evci-core`; see `benches/`.
