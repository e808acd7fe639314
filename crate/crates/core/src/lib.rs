//! Euclidean mirrors of network time series.
//!
//! Simulate time series of random dot product graphs, embed each snapshot
//! spectrally, estimate the maximum-directional-variation distance between
//! snapshots, and recover a low-dimensional mirror curve by classical
//! multidimensional scaling and ISOMAP, with change-point scans on the
//! resulting trace.

pub mod changepoint;
pub mod embed;
pub mod graphgen;
pub mod linalg;
pub mod lpp;
pub mod metric;
pub mod mirror;
pub mod pipeline;
pub mod rng;
pub mod table;
