//! End-to-end acceptance runs (`tests/acceptance.rs`) and benchmarks (`benches/`).
//!
//! The acceptance target lives in its own package so that it runs after the
//! unit and integration tests of the other crates.
