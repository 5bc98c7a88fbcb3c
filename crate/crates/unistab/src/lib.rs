//! Estimation-error machinery for uniformly stable data-dependent functions.
//!
//! A function `M(s, z)` of a dataset `s` and a query point `z` is
//! gamma-uniformly stable when replacing one dataset element moves its value
//! by at most gamma. This crate provides, for such functions:
//!
//! * [`core`]: datasets, finite distributions, estimation error,
//!   leave-one-out identities, and stability audits.
//! * [`bounds`]: closed-form high-probability bounds on the estimation
//!   error, including a bound with only logarithmic overhead over the
//!   stability itself.
//! * [`reduction`]: the centering/clamping pipeline that trades range for
//!   stability, and block decompositions of the leave-one-out error.
//! * [`convexopt`]: convex empirical-risk solvers whose outputs carry
//!   stability certificates, plus envelope smoothing for nonsmooth losses.
//! * [`dp`]: a private prediction mechanism whose expected loss is a
//!   stable function, tying privacy budgets to tail bounds.
//! * [`harness`]: seeded Monte Carlo experiments, property audits, and
//!   report emission behind the command-line tool.
//! * [`rng`]: counter-keyed deterministic random streams used everywhere
//!   randomness is needed.

pub mod bounds;
pub mod convexopt;
pub mod core;
pub mod dp;
pub mod harness;
pub mod reduction;
pub mod rng;
