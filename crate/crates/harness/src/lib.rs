pub mod error;
pub mod mock;
pub mod mock_cli;
pub mod pipeline;
pub mod protocol;
pub mod report;
pub mod run;
pub mod transport;

pub use error::{HarnessError, Result};
pub use ser_probe_core as core;
