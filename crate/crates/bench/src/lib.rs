//! Criterion benchmarks for the subproblem solves, ADMM steps and attack
//! constructions; see `benches/kernels.rs`.
