//! Benchmarks for the overlay toolchain live in `benches/`.
