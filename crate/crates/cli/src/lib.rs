//! Command-line front end for the `meta_inr` pipeline.

pub mod args;
pub mod checkpoint;
pub mod commands;

pub use args::Cli;
pub use checkpoint::Checkpoint;
pub use commands::run;
