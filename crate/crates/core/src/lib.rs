//! Dynamic scene reconstruction from a single moving endoscope: a factorized
//! 4D plane field decoded by a tiny MLP and trained through volume rendering.

pub mod encoding;
pub mod field;
pub mod field_mlp;
pub mod geometry;
pub mod occupancy;
pub mod plane_field;
pub mod real;
pub mod renderer;
pub mod losses;
pub mod sampler;
pub mod metrics;
pub mod dataio;
pub mod config;
pub mod trainer;
pub mod checkpoint;
pub mod gradcheck;
