//! Acceptance suite for `nonstat_core`. Everything lives in `tests/acceptance.rs`.
