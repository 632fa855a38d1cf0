//! Library side of the command-line frontend: regularization paths with
//! warm starts, and the serialized output formats.

pub mod output;
pub mod path;

pub use path::{lambda_grid, run_path, PathConfig, PathEntry, PathStatus};
