//! HTTP API and command-line front end of the distractor engine.

pub mod cli;
pub mod error;
pub mod http;

pub use error::{AppError, ErrorBody};
