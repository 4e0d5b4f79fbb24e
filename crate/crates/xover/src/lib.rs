//! File formats, reports and the `xover` command line on top of
//! [`xover_core`].

pub mod cli;
pub mod covspec;
pub mod error;
pub mod fmt;
pub mod io;
pub mod search;
pub mod verify;

pub use cli::{run, Cli};
pub use covspec::parse_cov_spec;
pub use error::{CliError, Result};
pub use search::parallel_search;
