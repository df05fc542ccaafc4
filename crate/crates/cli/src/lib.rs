//! Command-line front end and the processing chain it drives.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod stream;
