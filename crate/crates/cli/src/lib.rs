//! Command-line front end: corpus ingestion, datasets, training and evaluation.

pub mod generate;
pub mod pipeline;
pub mod records;
