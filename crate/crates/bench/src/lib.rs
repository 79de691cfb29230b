//! Criterion benchmarks for the solver and certificate kernels; see `benches/`.
