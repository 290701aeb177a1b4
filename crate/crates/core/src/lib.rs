//! Multi-camera sparse 3D box sampling, cascade box refinement, set-prediction
//! matching and a multi-Bernoulli-mixture tracker with hybrid appearance
//! likelihood, plus CLEAR-MOT/AMOTA evaluation and a synthetic scenario
//! generator for desk-scale experiments.

pub mod assignment;
pub mod cascade;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::BoxState;
