//! Benchmark-only crate; see `benches/dynamics.rs`.
