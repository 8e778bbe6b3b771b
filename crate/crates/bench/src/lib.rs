//! Benchmarks for the compression and fusion kernels. See `benches/`.
