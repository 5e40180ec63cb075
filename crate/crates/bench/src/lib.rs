//! Criterion benchmarks for funcground; see `benches/`.
