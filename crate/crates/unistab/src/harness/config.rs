//! Experiment configuration: a flat key scheme mirroring the CLI flags,
//! stored as JSON. Flags override file values; the merged result must pass
//! [`ExperimentConfig::validate`] before running.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::harness::report::ReportFormat;
use crate::harness::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    /// Mean estimation through a regularized quadratic loss; the trained
    /// weights move with the sample, so the estimation error is that of a
    /// genuinely data-dependent function.
    MeanErm,
    /// A fixed function of the query point; zero-stability baseline whose
    /// estimation error is plain sampling error.
    Constant,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::MeanErm => "mean-erm",
            ProblemKind::Constant => "constant",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean-erm" => Ok(ProblemKind::MeanErm),
            "constant" => Ok(ProblemKind::Constant),
            other => Err(format!("unknown problem {other:?} (expected mean-erm or constant)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Closed-form regularized empirical risk minimization.
    #[default]
    RegErm,
    /// Full-batch gradient descent with the smoothness-matched step budget.
    SmoothGd,
    /// One-example-per-step SGD with replacement.
    ResampleSgd,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::RegErm => "reg-erm",
            SolverKind::SmoothGd => "smooth-gd",
            SolverKind::ResampleSgd => "resample-sgd",
        })
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reg-erm" => Ok(SolverKind::RegErm),
            "smooth-gd" => Ok(SolverKind::SmoothGd),
            "resample-sgd" => Ok(SolverKind::ResampleSgd),
            other => Err(format!(
                "unknown solver {other:?} (expected reg-erm, smooth-gd, or resample-sgd)"
            )),
        }
    }
}

/// Regularization strength, either fixed or grown with the sample size.
/// Serializes as a bare number or the rule name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// `ln(n) / sqrt(n)`, under which the regularized solution's excess
    /// loss tracks `ln(n/delta) / sqrt(n)`.
    LogNOverSqrtN,
    Fixed(f64),
}

impl LambdaRule {
    pub fn lambda(&self, n: usize) -> f64 {
        match self {
            LambdaRule::LogNOverSqrtN => (n as f64).ln() / (n as f64).sqrt(),
            LambdaRule::Fixed(v) => *v,
        }
    }
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::LogNOverSqrtN
    }
}

impl fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaRule::LogNOverSqrtN => f.write_str("log-n-over-sqrt-n"),
            LambdaRule::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for LambdaRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "log-n-over-sqrt-n" {
            return Ok(LambdaRule::LogNOverSqrtN);
        }
        s.parse::<f64>()
            .map(LambdaRule::Fixed)
            .map_err(|_| format!("lambda must be a number or log-n-over-sqrt-n, got {s:?}"))
    }
}

impl Serialize for LambdaRule {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            LambdaRule::LogNOverSqrtN => ser.serialize_str("log-n-over-sqrt-n"),
            LambdaRule::Fixed(v) => ser.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaRule {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(de)? {
            Repr::Number(v) => Ok(LambdaRule::Fixed(v)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub n: Vec<usize>,
    pub trials: usize,
    pub delta: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub lambda: LambdaRule,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: ReportFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::MeanErm,
            n: vec![100],
            trials: 100,
            delta: vec![0.1],
            seed: 0,
            solver: SolverKind::default(),
            lambda: LambdaRule::default(),
            workers: 1,
            out: None,
            format: ReportFormat::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |reason: String| Err(HarnessError::BadConfig { reason });
        if self.n.is_empty() {
            return bad("at least one sample size is required".into());
        }
        // Bound columns are defined from n = 4 up.
        if let Some(&n) = self.n.iter().find(|&&n| n < 4) {
            return bad(format!("sample size {n} is below the minimum of 4"));
        }
        if self.trials == 0 {
            return bad("at least one trial is required".into());
        }
        if self.delta.is_empty() {
            return bad("at least one tail level is required".into());
        }
        if let Some(&d) = self
            .delta
            .iter()
            .find(|&&d| !(d.is_finite() && 0.0 < d && d < 1.0))
        {
            return bad(format!("tail level {d} is outside (0, 1)"));
        }
        if let LambdaRule::Fixed(v) = self.lambda {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("fixed lambda {v} must be finite and nonnegative"));
            }
        }
        if self.workers == 0 {
            return bad("at least one worker is required".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }
}
