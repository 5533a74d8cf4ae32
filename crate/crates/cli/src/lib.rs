//! Batch driver pieces: plain-text configuration, self-checks, and
//! deterministic VTK/CSV writers.

pub mod check;
pub mod config;
pub mod output;
