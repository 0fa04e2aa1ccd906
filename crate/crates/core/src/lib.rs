//! Electro-thermal, parasitic and delay analysis of stacked CFET devices.

pub mod circuit;
pub mod config;
pub mod device;
pub mod error;
pub mod fv;
pub mod geometry;
pub mod materials;
pub mod parasitics;
pub mod pipeline;
pub mod report;
pub mod thermal;

pub use error::{Error, Result};
