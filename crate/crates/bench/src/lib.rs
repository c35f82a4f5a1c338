//! Benchmark-only crate. The measurements live in `benches/core.rs`.
