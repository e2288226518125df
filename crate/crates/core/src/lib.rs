pub mod cli;
pub mod error;
pub mod lindblad;
pub mod linops;
pub mod models;
pub mod oracle;
pub mod scheme;

pub use error::{Error, Result};
