//! Sailboat listing-price models and the tooling around them.
//!
//! The crate covers ingestion and cleaning of listing CSVs, dummy encoding
//! of hull type and region, three model families (least squares with
//! optional ridge-penalized gradient descent or ADADELTA training, and
//! gradient-boosted regression trees), the half/half swap evaluation
//! protocol, correlation and regional-effect analyses, and SVG figures.

pub mod adadelta;
pub mod analysis;
pub mod boosting;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod kv;
pub mod linear;
pub mod metrics;
pub mod plots;
pub mod rng;
pub mod tree;

pub use error::{Error, Result};
