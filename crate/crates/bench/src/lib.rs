//! Criterion benchmarks for `optrisk-core`; run with `cargo bench -p optrisk-bench`.
