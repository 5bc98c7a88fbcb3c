//! Closed-form tail bounds on the estimation error of stable functions.
//!
//! All bounds describe the same object: with probability at least `1 - delta`
//! over an i.i.d. sample of size `n`, the estimation error of a
//! gamma-stable function stays below the bound value. They differ in how the
//! stability and sampling contributions combine:
//!
//! * [`be02_bound`]: baseline with a `gamma * sqrt(n)` stability term.
//! * [`fv18_bound`]: moment-based baseline with a `sqrt(gamma * R)` term.
//! * [`main_bound`]: log-factor bound `32 gamma ln(5 n^3/delta) log2(n) +
//!   2 R sqrt(ln(4/delta)/n)`, the tightest of the three once
//!   `gamma << R / sqrt(n)`.
//! * [`thm_large_bound`] / [`thm_small_bound`]: the two stability regimes
//!   behind [`main_bound`], exposed with validity flags instead of errors.
//!
//! Conventions: logarithms are natural unless written `log2`; `delta` is a
//! tail probability in `(0, 1)`; `r` is the range half-width with default 1;
//! leading constants default to 1 and can be overridden through
//! [`Constants`]. Bounds larger than the range width can never bind and are
//! flagged vacuous rather than clamped.

use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("sample size must be at least {min}, got {n}")]
    TooFewSamples { n: u128, min: u128 },
    #[error("delta must lie in (0, {max}), got {delta}")]
    DeltaOutOfRange { delta: f64, max: f64 },
    #[error("stability must be finite and nonnegative, got {gamma}")]
    InvalidGamma { gamma: f64 },
    #[error("range half-width must be positive and finite, got {r}")]
    InvalidRangeWidth { r: f64 },
    #[error("leading constant must be positive and finite, got {c}")]
    InvalidConstant { c: f64 },
    #[error("deviation threshold must be finite and nonnegative, got {t}")]
    InvalidThreshold { t: f64 },
    #[error("scale factor must be positive and finite, got {alpha}")]
    InvalidScale { alpha: f64 },
    #[error("induction level must be at least 1")]
    InvalidLevel,
}

/// Overridable leading constants; every formula uses 1 unless told otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Multiplier for [`be02_bound`].
    pub c0: f64,
    /// Multiplier for [`fv18_bound`].
    pub c1: f64,
    /// Spare multiplier for derived presentations; unused by the four bounds.
    pub c: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            c0: 1.0,
            c1: 1.0,
            c: 1.0,
        }
    }
}

/// Inputs shared by the bound evaluators.
///
/// `n` is the sample size, `gamma` the stability certificate, `delta` the
/// tail probability, and `r` the range half-width of the function being
/// bounded (`|L| <= r`, or equivalently range width `r` after centering a
/// `[0, r]`-valued function).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n: u128,
    pub r: f64,
    pub gamma: f64,
    pub delta: f64,
    pub constants: Constants,
}

impl BoundParams {
    pub fn new(n: u128, gamma: f64, delta: f64) -> Result<Self, BoundsError> {
        Self {
            n,
            r: 1.0,
            gamma,
            delta,
            constants: Constants::default(),
        }
        .validated()
    }

    pub fn with_range(mut self, r: f64) -> Result<Self, BoundsError> {
        self.r = r;
        self.validated()
    }

    pub fn with_constants(mut self, constants: Constants) -> Result<Self, BoundsError> {
        self.constants = constants;
        self.validated()
    }

    fn validated(self) -> Result<Self, BoundsError> {
        if self.n < 1 {
            return Err(BoundsError::TooFewSamples { n: self.n, min: 1 });
        }
        if !self.delta.is_finite() || self.delta <= 0.0 || self.delta >= 1.0 {
            return Err(BoundsError::DeltaOutOfRange {
                delta: self.delta,
                max: 1.0,
            });
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(BoundsError::InvalidGamma { gamma: self.gamma });
        }
        if !self.r.is_finite() || self.r <= 0.0 {
            return Err(BoundsError::InvalidRangeWidth { r: self.r });
        }
        for c in [self.constants.c0, self.constants.c1, self.constants.c] {
            if !c.is_finite() || c <= 0.0 {
                return Err(BoundsError::InvalidConstant { c });
            }
        }
        Ok(self)
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }
}

/// A bound evaluation. `valid` records whether the formula's preconditions
/// hold at these parameters; `vacuous` records that the value exceeds the
/// attainable error range (`value > r`) and therefore cannot bind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue {
    pub value: f64,
    pub valid: bool,
    pub vacuous: bool,
}

impl BoundValue {
    fn flagged(value: f64, valid: bool, r: f64) -> Self {
        Self {
            value,
            valid,
            vacuous: value > r,
        }
    }
}

pub(crate) fn inv_e() -> f64 {
    (-1.0f64).exp()
}

/// Bounded-differences tail `exp(-2 t^2 / (n gamma^2))` for the probability
/// that an average of a gamma-stable function exceeds its mean by `t`.
/// Degenerate `gamma = 0`: the function is deterministic, so the tail is 1 at
/// `t = 0` and 0 beyond.
pub fn mcdiarmid_tail(n: u128, gamma: f64, t: f64) -> Result<f64, BoundsError> {
    if n < 1 {
        return Err(BoundsError::TooFewSamples { n, min: 1 });
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(BoundsError::InvalidGamma { gamma });
    }
    if !t.is_finite() || t < 0.0 {
        return Err(BoundsError::InvalidThreshold { t });
    }
    if gamma == 0.0 {
        return Ok(if t == 0.0 { 1.0 } else { 0.0 });
    }
    Ok((-2.0 * t * t / (n as f64 * gamma * gamma)).exp())
}

/// Baseline bound `c0 (gamma sqrt(n) + r / sqrt(n)) sqrt(ln(1/delta))`.
pub fn be02_bound(p: &BoundParams) -> Result<BoundValue, BoundsError> {
    let p = p.validated()?;
    let root_log = (-p.delta.ln()).sqrt();
    let value = p.constants.c0 * (p.gamma * p.nf().sqrt() + p.r / p.nf().sqrt()) * root_log;
    Ok(BoundValue::flagged(value, true, p.r))
}

/// Moment-based baseline `c1 (sqrt(gamma r) + r / sqrt(n)) sqrt(ln(1/delta))`.
pub fn fv18_bound(p: &BoundParams) -> Result<BoundValue, BoundsError> {
    let p = p.validated()?;
    let root_log = (-p.delta.ln()).sqrt();
    let value = p.constants.c1 * ((p.gamma * p.r).sqrt() + p.r / p.nf().sqrt()) * root_log;
    Ok(BoundValue::flagged(value, true, p.r))
}

fn main_bound_unit(n: f64, gamma: f64, delta: f64) -> f64 {
    // ln(5 n^3 / delta) assembled in log space so huge n cannot overflow.
    let log_term = 5.0f64.ln() + 3.0 * n.ln() - delta.ln();
    let sampling = (((4.0 / delta).ln()) / n).sqrt();
    32.0 * gamma * log_term * n.log2() + 2.0 * sampling
}

/// Log-factor bound `32 gamma ln(5 n^3/delta) log2(n) + 2 sqrt(ln(4/delta)/n)`
/// for unit range, rescaled through [`scale_bound`] for other ranges.
/// Requires `n >= 4` and `delta <= 1/e`.
pub fn main_bound(p: &BoundParams) -> Result<BoundValue, BoundsError> {
    let p = p.validated()?;
    if p.n < 4 {
        return Err(BoundsError::TooFewSamples { n: p.n, min: 4 });
    }
    if p.delta > inv_e() {
        return Err(BoundsError::DeltaOutOfRange {
            delta: p.delta,
            max: inv_e(),
        });
    }
    let unit = main_bound_unit(p.nf(), p.gamma / p.r, p.delta);
    let value = scale_bound(unit, 1.0 / p.r)?;
    Ok(BoundValue::flagged(value, true, p.r))
}

/// Stability threshold separating the two proof regimes:
/// `r / (4 sqrt(n ln(n/delta)))`.
pub fn regime_threshold(p: &BoundParams) -> f64 {
    p.r / (4.0 * (p.nf() * (p.nf() / p.delta).ln()).sqrt())
}

/// Large-stability regime `16 gamma ln(n^3/delta) log2(n)`. Valid when
/// `gamma >= regime_threshold`, `n >= 4`, `delta <= 1/e`; out-of-regime
/// parameters get `valid = false`, not an error, so tables can show both
/// regimes side by side.
pub fn thm_large_bound(p: &BoundParams) -> Result<BoundValue, BoundsError> {
    let p = p.validated()?;
    let log_term = 3.0 * p.nf().ln() - p.delta.ln();
    let value = 16.0 * p.gamma * log_term * p.nf().log2();
    let valid = p.n >= 4 && p.delta <= inv_e() && p.gamma >= regime_threshold(&p);
    Ok(BoundValue::flagged(value, valid, p.r))
}

/// Small-stability regime `16 gamma ln(4 n^3/delta) log2(n) +
/// 2 r sqrt(ln(4/delta)/n)`. Valid when `gamma < regime_threshold`,
/// `n >= 4`, `delta <= 1/e`.
pub fn thm_small_bound(p: &BoundParams) -> Result<BoundValue, BoundsError> {
    let p = p.validated()?;
    let log_term = 4.0f64.ln() + 3.0 * p.nf().ln() - p.delta.ln();
    let sampling = p.r * (((4.0 / p.delta).ln()) / p.nf()).sqrt();
    let value = 16.0 * p.gamma * log_term * p.nf().log2() + 2.0 * sampling;
    let valid = p.n >= 4 && p.delta <= inv_e() && p.gamma < regime_threshold(&p);
    Ok(BoundValue::flagged(value, valid, p.r))
}

/// Self-contained value of the induction that produces the log-factor bound,
/// at level `a` (so `n = 4^a`, `gamma = 1/sqrt(n)`, range `8 sqrt(ln(n/delta))`):
/// `(8/sqrt(n)) ln(n^2/delta) log2(n)`.
pub fn inductive_bound(a: u32, delta: f64) -> Result<f64, BoundsError> {
    if a < 1 {
        return Err(BoundsError::InvalidLevel);
    }
    if !delta.is_finite() || delta <= 0.0 || delta > inv_e() {
        return Err(BoundsError::DeltaOutOfRange {
            delta,
            max: inv_e(),
        });
    }
    let half_pow = 2.0f64.powi(a as i32); // sqrt(4^a), exact
    let log_term = 4.0 * a as f64 * 2.0f64.ln() - delta.ln(); // ln(n^2/delta)
    Ok((8.0 / half_pow) * log_term * (2.0 * a as f64))
}

/// Range-scaling identity: a bound computed at `(alpha r, alpha gamma)`
/// divided by `alpha` is the bound at `(r, gamma)`.
pub fn scale_bound(value: f64, alpha: f64) -> Result<f64, BoundsError> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(BoundsError::InvalidScale { alpha });
    }
    Ok(value / alpha)
}

/// First and second moment bounds for the estimation error:
/// `(gamma + 1/sqrt(n), gamma^2 + 1/n)`.
pub fn moment_bounds(gamma: f64, n: u128) -> Result<(f64, f64), BoundsError> {
    if n < 1 {
        return Err(BoundsError::TooFewSamples { n, min: 1 });
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(BoundsError::InvalidGamma { gamma });
    }
    let nf = n as f64;
    Ok((gamma + nf.sqrt().recip(), gamma * gamma + nf.recip()))
}

/// Rule assigning a stability value to each sample size in a table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaRule {
    Fixed(f64),
    InvSqrtN,
    InvN,
}

impl GammaRule {
    pub fn gamma(&self, n: u128) -> f64 {
        match *self {
            GammaRule::Fixed(g) => g,
            GammaRule::InvSqrtN => (n as f64).sqrt().recip(),
            GammaRule::InvN => (n as f64).recip(),
        }
    }
}

impl FromStr for GammaRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inv-sqrt-n" => Ok(GammaRule::InvSqrtN),
            "inv-n" => Ok(GammaRule::InvN),
            other => match other.strip_prefix("fixed:") {
                Some(v) => v
                    .parse::<f64>()
                    .map(GammaRule::Fixed)
                    .map_err(|e| format!("bad fixed gamma {v:?}: {e}")),
                None => Err(format!(
                    "unknown gamma rule {other:?}; expected fixed:<value>, inv-sqrt-n, or inv-n"
                )),
            },
        }
    }
}

/// One row of a side-by-side bound comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTableRow {
    pub n: u128,
    pub gamma: f64,
    pub delta: f64,
    pub be02: f64,
    pub fv18: f64,
    pub main: f64,
    pub thm_large: f64,
    pub thm_large_valid: bool,
    pub thm_small: f64,
    pub thm_small_valid: bool,
}

/// Evaluate all bounds at each `n` with stability chosen by `rule`. The empty
/// list yields an empty table.
pub fn bound_table(
    n_list: &[u128],
    rule: GammaRule,
    delta: f64,
) -> Result<Vec<BoundTableRow>, BoundsError> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let gamma = rule.gamma(n);
        let p = BoundParams::new(n, gamma, delta)?;
        let large = thm_large_bound(&p)?;
        let small = thm_small_bound(&p)?;
        rows.push(BoundTableRow {
            n,
            gamma,
            delta,
            be02: be02_bound(&p)?.value,
            fv18: fv18_bound(&p)?.value,
            main: main_bound(&p)?.value,
            thm_large: large.value,
            thm_large_valid: large.valid,
            thm_small: small.value,
            thm_small_valid: small.valid,
        });
    }
    Ok(rows)
}

/// Serialize an `f64` with 17 significant digits, enough to round-trip
/// exactly.
pub(crate) fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV rendering of a bound table with a fixed column order.
pub fn table_to_csv(rows: &[BoundTableRow]) -> String {
    let mut out = String::from(
        "n,gamma,delta,be02,fv18,main,thm_large,thm_large_valid,thm_small,thm_small_valid\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.n,
            fmt_g17(r.gamma),
            fmt_g17(r.delta),
            fmt_g17(r.be02),
            fmt_g17(r.fv18),
            fmt_g17(r.main),
            fmt_g17(r.thm_large),
            r.thm_large_valid,
            fmt_g17(r.thm_small),
            r.thm_small_valid,
        ));
    }
    out
}
