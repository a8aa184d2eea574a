//! Criterion benchmarks for the ludus labs; see `benches/`.
