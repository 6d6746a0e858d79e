//! Criterion benchmarks for the tracking pipeline; see `benches/`.
