//! Command-line front end: file formats, reports and batch runs on top of
//! `bbrl-core`.

pub mod batch;
pub mod commands;
pub mod files;
pub mod format;
pub mod report;

pub use commands::main_with_args;
