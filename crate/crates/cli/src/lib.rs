//! Command-line pipeline: simulate a decaying MHD run, diagnose enstrophy
//! flux localization, estimate the structural assumptions and summarize.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod snapshot;
pub mod summary;

pub use config::RunConfig;
pub use error::CliError;
pub use pipeline::Run;
