//! Command-line front end: FT1 tensor files, image I/O and the `rigidstyle` commands.

mod app;
pub mod error;
pub mod ft1;
pub mod imageio;

pub use app::{run, run_with};
pub use error::CliError;
