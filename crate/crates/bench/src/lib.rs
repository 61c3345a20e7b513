//! Criterion benchmarks for the retrieval, normalization and scoring hot paths.
//! Run with `cargo bench -p relrag-bench`.
