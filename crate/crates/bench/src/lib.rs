//! Criterion benchmarks for the dfflow hot paths live in `benches/`.
