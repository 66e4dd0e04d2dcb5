//! The stochastic AC-FGM loop, baselines, trajectory records and summaries.

mod acfgm;
mod baselines;
mod records;
mod summary;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

pub use acfgm::{run, run_with_observer, IterSnapshot};
pub use baselines::{run_baseline, BaselineKind, BaselineParams};
pub use records::{fmt_f64, read_records_csv, records_to_csv_string, write_records_csv, TrajectoryRecord, CSV_COLUMNS};
pub use summary::{check_invariants, r_n_squared, rate_fit, report_summary, InvariantReport, Summary};

use crate::error::{Error, Result};
use crate::problem::CompositeProblem;
use crate::sampling::FiltrationLog;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stop {
    Iterations(usize),
    /// Stops once the verification-side gap reaches `epsilon`. The gap is
    /// never an input to the algorithm itself.
    TargetGap { epsilon: f64, max_iterations: usize },
}

impl Stop {
    pub fn max_iterations(&self) -> usize {
        match *self {
            Stop::Iterations(n) => n,
            Stop::TargetGap { max_iterations, .. } => max_iterations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub seed: u64,
    pub stop: Stop,
    /// Evaluate the gap every this many iterations (and at the last one);
    /// 0 disables gap evaluation except for target-gap stopping.
    pub gap_every: usize,
    /// Keep every this many records (the last one is always kept).
    pub record_every: usize,
    /// Log the reduced-gradient norm computed with the full gradient.
    pub reduced_gradient: bool,
    /// Record wall time per iteration. Off by default so that replays are
    /// byte-identical.
    pub wall_time: bool,
    /// Compute exact variances alongside estimated ones (variant C).
    pub track_exact: bool,
}

impl RunOptions {
    pub fn new(seed: u64, stop: Stop) -> Self {
        Self {
            seed,
            stop,
            gap_every: 1,
            record_every: 1,
            reduced_gradient: false,
            wall_time: false,
            track_exact: false,
        }
    }

    pub fn iterations(seed: u64, n: usize) -> Self {
        Self::new(seed, Stop::Iterations(n))
    }

    fn keeps(&self, k: usize, last: bool) -> bool {
        last || self.record_every <= 1 || k.is_multiple_of(self.record_every)
    }

    fn wants_gap(&self, k: usize, last: bool) -> bool {
        matches!(self.stop, Stop::TargetGap { .. }) || (self.gap_every > 0 && (last || k.is_multiple_of(self.gap_every)))
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub x_final: Array1<f64>,
    pub records: Vec<TrajectoryRecord>,
    pub log: FiltrationLog,
    pub summary: Summary,
}

/// `Psi(x) - Psi*` with the full finite sum (verification side).
pub fn evaluate_gap(problem: &CompositeProblem, x: &Array1<f64>) -> Result<f64> {
    let opt = problem
        .optimum
        .as_ref()
        .ok_or_else(|| Error::Unsupported("gap needs a known optimum".into()))?;
    Ok(problem.psi(x) - opt.psi_star)
}
