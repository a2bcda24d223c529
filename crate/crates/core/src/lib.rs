//! Storage-augmented DC economic dispatch as a convex quadratic program.
//!
//! The crate solves multi-period economic dispatch with a fleet of
//! ISO-operated storage of total capacity `E`, extracts locational marginal
//! prices and per-user marginal system cost impact from the dual solution,
//! and sweeps `E` parametrically to expose the welfare, monotonicity, and
//! convergence structure of the problem.
//!
//! Modules:
//! - [`model`]: grid, load, and user domain types with validation
//! - [`qp`]: dense/sparse convex QP solver with certified KKT residuals
//! - [`dispatch`]: problem builders, dispatch solutions, prices, MCI
//! - [`parametric`]: capacity sweeps and structural checks
//! - [`profiling`]: user clustering and MCI trajectories
//! - [`cases`]: JSON case files and user CSV ingestion
//! - [`reports`]: CSV emission and parsing of result tables

pub mod cases;
pub mod dispatch;
pub mod model;
pub mod parametric;
pub mod profiling;
pub mod qp;
pub mod reports;
