//! Criterion benchmarks for the echo canceller; see `benches/`.
