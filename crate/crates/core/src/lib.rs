//! Stochastic auto-conditioned fast gradient method (stochastic AC-FGM).
//!
//! The crate solves composite problems `min_{x in X} f(x) + h(x)` where `f` is a
//! convex finite sum accessed through a stochastic first-order oracle and `h`
//! has a cheap proximal map. Stepsizes come from a local cocoercivity-based
//! smoothness estimate computed on fresh batches, and mini-batch sizes adapt to
//! the local variances, so neither the Lipschitz constant nor (for the
//! horizon-free variants) the iteration budget has to be known.
//!
//! Module map:
//! - [`problem`]: composite problems, the component oracle, prox machinery and
//!   exact variance backdoors used for verification.
//! - [`sampling`]: keyed, mutually independent sampling streams and the
//!   filtration log that audits their order.
//! - [`estimators`]: batch gradients, Taylor remainders, the smoothness
//!   estimate and pairwise variance estimators.
//! - [`schedule`]: stepsize recursions and batch-size rules for every variant.
//! - [`optimizer`]: the main loop, baselines, trajectory records and summaries.

pub mod error;
pub mod estimators;
pub mod optimizer;
pub mod problem;
pub mod sampling;
pub mod schedule;

pub use error::{Error, Result};
pub use optimizer::{
    evaluate_gap, report_summary, run, run_baseline, BaselineKind, BaselineParams, RunOptions,
    RunOutput, Stop, Summary, TrajectoryRecord,
};
pub use problem::{CompositeProblem, FeasibleSet, ProxTerm, SmoothFiniteSum};
pub use sampling::{BatchDraw, FiltrationLog, Sampler, StreamKind};
pub use schedule::{Constants, ScheduleConfig, ScheduleState, Variant};

/// Points in the decision space.
pub type DecisionVector = ndarray::Array1<f64>;
