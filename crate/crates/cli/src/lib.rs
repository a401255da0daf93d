//! Training, evaluation, and diagnostics around `fpopp-core`: the
//! training loop, checkpoint/demo/metrics file formats, experiment
//! presets, and the command-line surface.

pub mod agent;
pub mod bc;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod demofile;
pub mod error;
pub mod metrics;
pub mod presets;
pub mod table;
pub mod trainer;
