//! Discovery of microkinetic reaction mechanisms from concentration-time data.
//!
//! The library searches for the simplest set of elementary reaction steps that
//! explains a kinetic dataset. Candidate mechanisms are enumerated as integer
//! stoichiometric matrices, translated into mass-action ODE systems, fitted by
//! bounded multi-start quasi-Newton least squares, and ranked by the Akaike
//! information criterion. The outer loop grows mechanism complexity one
//! elementary step and one intermediate at a time and stops as soon as the
//! extra complexity no longer pays for itself.
//!
//! Module map:
//! - [`problem`]: the discovery problem definition and iteration sizing
//! - [`genmech`]: feasible-mechanism enumeration (backtracking + brute-force oracle)
//! - [`translate`]: matrices to reaction strings and executable rate models
//! - [`integrate`]: adaptive Runge-Kutta simulation and conservation checks
//! - [`datagen`]: built-in synthetic case studies
//! - [`fit`]: rate-constant estimation
//! - [`select`]: AIC scoring and the outer discovery loop
//! - [`doe`]: model-discriminating experiment proposals
//!
//! Data-parallel sections (enumeration subtrees, per-candidate fits, design
//! point sweeps) run on rayon when the default `parallel` feature is enabled
//! and fall back to equivalent sequential loops when it is not. Results are
//! identical either way.

pub mod datagen;
pub mod doe;
mod error;
mod exec;
pub mod fit;
pub mod genmech;
pub mod integrate;
pub mod problem;
pub mod seed;
pub mod select;
pub mod translate;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
