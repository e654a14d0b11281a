//! Crop-type mapping from vegetation-index time series with vector dynamic time warping.
//!
//! The pipeline runs from raw reflectance CSVs ([`ingest`], [`vegindex`]) through gap filling,
//! smoothing and resampling ([`preprocess`]) to distance measures ([`distance`]),
//! discriminative window selection ([`window`]) and nearest-neighbour classification
//! ([`classify`]). [`simulate`] builds synthetic datasets with controlled perturbations.

pub mod classify;
pub mod distance;
pub mod error;
pub mod ingest;
pub mod preprocess;
pub mod seed;
pub mod series;
pub mod simulate;
pub mod vegindex;
pub mod window;

pub use error::{Error, Result};
pub use series::{FieldSample, QualityFlag, Series, TimeGrid};
