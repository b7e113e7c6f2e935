//! Command-line front end: dataset ingestion, experiment execution, and
//! machine-readable JSON reporting.

pub mod config;
pub mod error;
pub mod ingest;
pub mod report;

pub use config::{parse_args, Command, MtFamily, RunConfig, USAGE};
pub use error::CliError;
pub use ingest::{ingest, ingest_csv_pair, ingest_csv_split};
pub use report::{run, Report};
