//! Criterion benchmarks for the collision map, the exact-law oracles and the
//! eigenvalue routines; run with `cargo bench -p lorentz-bench`.
