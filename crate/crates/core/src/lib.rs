pub mod coarse;
pub mod error;
pub mod io;
pub mod krylov;
pub mod linalg;
pub mod parallel;
pub mod partition;
pub mod pipeline;
pub mod precond;
pub mod problems;
pub mod report;
pub mod splitting;

pub use error::{Error, Result};
