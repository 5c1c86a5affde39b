pub mod encodings;
pub mod error;
pub mod io;
pub mod jets;
pub mod metrics;
pub mod models;
pub mod qsim;
pub mod toy;
pub mod train;

pub use error::{Error, Result};
