//! Criterion benchmarks for the construction kernels; see `benches/`.
