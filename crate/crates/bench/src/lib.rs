//! Criterion benchmarks for the spvlad pipeline stages; see `benches/`.
