//! Criterion benchmarks for the distance transform and the query path live in `benches/`.
