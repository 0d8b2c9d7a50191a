//! Command-line and HTTP front ends for `trifield-core`.

pub mod commands;
pub mod inputs;
pub mod service;
