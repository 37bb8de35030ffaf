//! Weather-degraded sensor simulation and performance monitoring.

pub mod camera;
pub mod error;
pub mod fuzzy;
pub mod ga;
pub mod gridmap;
pub mod labeling;
pub mod pipeline;
pub mod lidar;
pub mod radar;
pub mod sim;
pub mod stats;
pub mod types;

pub use error::{Error, Result};
