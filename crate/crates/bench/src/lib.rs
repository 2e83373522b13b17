//! Benchmarks for the kernel and spectral routines live in `benches/`.
