//! Criterion benchmarks for `uadx`; the code lives in `benches/`.
