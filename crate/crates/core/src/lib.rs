//! Numerical feasibility checks for matching-adjusted indirect comparisons.
//!
//! Given a patient-level covariate matrix and a vector of published aggregate
//! means, the crate decides whether any reweighting of the patients can
//! reproduce the means (convex-hull membership by phase-one simplex), locates
//! the means in principal-component coordinates, tests whether matching is
//! needed at all (Hotelling's T²), fits the exponential-tilting weights with
//! their effective sample size, and builds alternative sparse weight sets.

pub mod alt_weights;
pub mod data;
pub mod error;
pub mod fit;
pub mod hotelling;
pub mod hull;
pub mod lp;
pub mod pca;
pub mod plot;
pub mod report;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
