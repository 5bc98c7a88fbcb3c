//! Seeded Monte Carlo experiments, property audits, and report emission.
//!
//! Reports are deterministic functions of (configuration, master seed):
//! every trial derives its own random stream from the master seed and the
//! trial's indices, and aggregation folds over trial order, so output bytes
//! are identical under any worker count.

pub mod audit;
pub mod config;
pub mod experiment;
pub mod report;

use std::path::PathBuf;

use thiserror::Error;

use crate::bounds::BoundsError;
use crate::convexopt::ConvexError;
use crate::core::CoreError;
use crate::reduction::ReductionError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {reason}")]
    BadConfig { reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report: {reason}")]
    Parse { reason: String },
    #[error("the {problem} problem has no analytic excess loss")]
    ExcessUnsupported { problem: String },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Convex(#[from] ConvexError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub use audit::{
    run_clamp_audit, run_solver_audit, ClampAuditReport, SolverAuditReport, SolverAuditRow,
};
pub use config::{ExperimentConfig, LambdaRule, ProblemKind, SolverKind};
pub use experiment::{
    constant_problem, empirical_quantile, mean_erm_problem, run_excess_experiment,
    run_tail_experiment, solver_gamma, Problem,
};
pub use report::{write_text, ExcessReport, ExcessRow, ReportFormat, TailReport, TailRow};
