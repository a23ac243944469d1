//! `haf` command line and HTTP service.

mod commands;
pub mod error;
pub mod server;

pub use commands::{align_by_id, evaluate_files, run, Cli, Command, TOKEN_ENV};
pub use error::{CliError, ErrorKind};
