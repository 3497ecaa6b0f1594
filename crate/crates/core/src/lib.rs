pub mod angle;
pub mod bell;
pub mod cli;
pub mod correlation;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod io;
pub mod qkd;
pub mod qstate;
pub mod spdc;

pub use error::{Error, Result};
