//! Batch front door for the nonlocal evolution solver.

pub mod commands;
pub mod problem;
