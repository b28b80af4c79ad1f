//! File formats: KITTI labels, CSV and text tables, SVG charts and the TOML
//! run configuration.

pub mod config;
pub mod csv;
pub mod kitti;
pub mod svg;
