//! Radar-to-point-cloud processing chain: FMCW simulation, capture
//! streaming, range-azimuth processing, polar ground truth and metrics.

pub mod capture;
pub mod dataset;
pub mod dsp;
pub mod fmcw;
pub mod kv;
pub mod lidar;
pub mod metrics;
pub mod pointcloud;
pub mod scene;
pub mod tensor_io;
