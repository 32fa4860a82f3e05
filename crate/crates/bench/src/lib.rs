//! Criterion benchmarks for the energy evaluator and the solver; see `benches/`.
