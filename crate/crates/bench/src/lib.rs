//! Criterion benchmarks for `itl-core`; run with `cargo bench -p itl-bench`.
