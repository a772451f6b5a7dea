//! Command-line front end for the region feature extractor: gradient
//! verification, benchmark training and ablation, and a small bit-exact
//! tensor file format for parameters, reports, and sample grids.

pub mod config;
pub mod gradcheck;
pub mod tensorfile;
