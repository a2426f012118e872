//! File formats: shot records as CSV and as a binary manifest, classifier
//! files, and CSV series ingestion for the analysis fits.

pub mod classifier;
pub mod series;
pub mod shots;
