//! Library backing the `sceneenc` binary. Commands live here so the
//! integration and acceptance suites can drive them in-process.

pub mod ablation;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod svg;

pub use error::CliError;
