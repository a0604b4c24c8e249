//! Command-line front end of the simulator: configuration loading, the named
//! experiment runners and the file-format tools (`order`, `solve`).

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod tools;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use report::ExperimentReport;
