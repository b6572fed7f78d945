//! Eigenbehavior analysis of hourly building meter data.
//!
//! A building's hourly electricity readings are scaled per square foot,
//! binned into usage levels by the building's own quartiles and laid out as
//! one-hot daily behavior vectors. The eigenvectors of their covariance (the
//! building's eigenbehaviors) describe its characteristic days. Primary
//! eigenbehaviors from many buildings are embedded in two dimensions with
//! UMAP and grouped into behavior profiles with k-means.
//!
//! Modules follow the processing order: [`ingest`], [`behavior`],
//! [`eigen`], [`embed`], [`cluster`], and [`pipeline`] which ties them
//! together and writes the report artifacts.

pub mod behavior;
pub mod cluster;
pub mod eigen;
pub mod embed;
pub mod ingest;
pub mod pipeline;
pub mod seed;
