//! User-facing surface: configuration text, run orchestration, file
//! artifacts, and the cross-run studies behind the `compare` subcommand.

pub mod compare;
pub mod config;
pub mod outputs;
pub mod run;

pub use compare::{export_comparison, CompareError, CompareReport};
pub use config::{parse_config, Calibrated, ConfigError, RunConfig, SectionChoice, SystemChoice};
pub use outputs::{read_summary, OutputError, Summary};
pub use run::{execute, verify};
