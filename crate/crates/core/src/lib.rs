//! Height-robust monocular 3D detection: camera geometry, depth estimators,
//! a synthetic scene simulator, KITTI-style evaluation and height-sweep
//! trend analysis.

pub mod cli;
pub mod depth_models;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod scene_sim;
pub mod stats;
pub mod trend;
