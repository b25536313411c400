//! Benchmarks for assembly, GMRES and moment-block solves; see `benches/`.
