//! Design-based estimation of land-cover area and change from classified
//! raster maps and stratified reference samples: change-map composition,
//! peak-NDVI anomaly filtering, stratified sample design, consensus
//! labeling, unbiased area and accuracy estimation, conflict-buffer
//! comparisons, and a synthetic Monte Carlo validation harness.

pub mod crops;
pub mod error;
pub mod estimate;
pub mod experiments;
pub mod geo;
pub mod grid;
pub mod ingest;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod synth;

pub use error::{Error, Result};
