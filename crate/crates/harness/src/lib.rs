//! Command-line harness for `stoch-acfgm`: JSON run configurations,
//! experiment matrices with merged long-format output, plot data files, and
//! the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod matrix;
pub mod plotdata;
pub mod run;

pub use config::{Emit, Method, ProblemSource, RunConfig, RunFlags};
pub use error::{HarnessError, Result};
pub use matrix::{BudgetAxis, ExperimentMatrix, MatrixEntry};
