//! Convex empirical-risk solvers whose outputs carry uniform-stability
//! certificates.
//!
//! Each solver returns, along with the trained weights, a bound on how far
//! the trained loss can move when one training example is replaced:
//!
//! * regularized ERM ([`reg_erm`]): `4 Lambda^2 / ((lambda + lambda_0) n)`;
//! * projected gradient descent over an explicit rate schedule ([`pgd`]):
//!   `2 Lambda^2` times the largest total rate any single example receives;
//! * projected stochastic gradient descent ([`psgd`]): the same certificate
//!   for the realized schedule, plus an optional high-probability certificate
//!   for resampled schedules based on the binomial occupancy tail
//!   ([`replacement_rate_tail`]).
//!
//! Nonsmooth losses can be routed through the smoothing in [`moreau`] first;
//! smoothing preserves the Lipschitz constant, so certificates survive it.

pub mod loss;
pub mod moreau;
pub mod schedule;
pub mod solver;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvexError {
    #[error("ball radius must lie in (0, 1], got {radius}")]
    InvalidRadius { radius: f64 },
    #[error("curvature must lie in (0, 0.25], got {curvature}")]
    InvalidCurvature { curvature: f64 },
    #[error("dimension must be at least 1")]
    InvalidDimension,
    #[error("strong convexity modulus must be finite and nonnegative, got {value}")]
    InvalidModulus { value: f64 },
    #[error("certificate constant must be finite and nonnegative, got {value}")]
    InvalidCertificate { value: f64 },
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("schedule addresses {schedule_n} examples but the dataset has {dataset_n}")]
    ScheduleMismatch { schedule_n: usize, dataset_n: usize },
    #[error("example index {index} out of range for {n} examples")]
    BadIndex { index: usize, n: usize },
    #[error("rate must be positive and finite, got {eta}")]
    InvalidRate { eta: f64 },
    #[error("batch size {k} not in 1..={n}")]
    InvalidBatch { k: usize, n: usize },
    #[error("tail probability must be positive and finite, got {beta}")]
    InvalidTail { beta: f64 },
    #[error("regularization weight must be finite and nonnegative, got {lambda}")]
    InvalidRegularization { lambda: f64 },
    #[error("objective has no strong convexity; add explicit regularization")]
    NotStronglyConvex,
    #[error("method requires a finite positive smoothness constant")]
    SmoothnessRequired,
    #[error("step {step} applies total rate {observed}, above the stable limit {limit}")]
    RateHypothesisViolated {
        step: usize,
        observed: f64,
        limit: f64,
    },
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: u64 },
    #[error("loss family carries no analytic form for this computation")]
    NoAnalyticForm,
    #[error("need at least {min} examples, got {n}")]
    TooFewSamples { n: usize, min: usize },
    #[error("occupancy tail over {steps} steps exceeds the supported cap {cap}")]
    TooManySteps { steps: u64, cap: u64 },
}

pub use loss::{
    excess_loss, mean_grad, mean_loss, AnalyticForm, ConvexBody, EuclideanBall, LossFamily,
};
pub use moreau::{moreau_smooth, SmoothedScalar};
pub use schedule::{
    make_schedule, replacement_rate_tail, OccupancyTail, RateSchedule, ScheduleKind,
};
pub use solver::{
    pgd, psgd, reg_erm, resample_sgd_plan, smooth_gd_plan, HighProbCertificate, PsgdOutcome,
    SolveResult,
};
