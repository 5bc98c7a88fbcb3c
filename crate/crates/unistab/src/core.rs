//! Datasets, finite sampling distributions, and data-dependent functions.
//!
//! The central object is [`DataDependentFunction`]: a map `M(s, z)` from a
//! dataset `s = (z_1, ..., z_n)` and a point `z` to a real value, carrying a
//! declared range and a declared *stability* certificate `gamma`. Stability
//! bounds the effect of replacing any single dataset entry:
//! `|M(s, z) - M(s^{i<-z'}, z)| <= gamma` for every `s`, `i`, `z'`, `z`.
//!
//! The quantity under study is the estimation error
//! `Delta_s(M) = | E_{z~P}[M(s, z)] - (1/n) sum_i M(s, s_i) |`,
//! together with its unbiased counterpart and the leave-one-out error used by
//! the tail bounds in [`crate::bounds`].
//!
//! Distributions here have finite support, so expectations over a fresh point
//! are exact sums. Expectations over datasets are exact product-measure sums
//! when the state space is small enough to enumerate, and seeded Monte Carlo
//! estimates otherwise.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::rng::stream;

/// Absolute slack allowed when an audit compares an observed deviation to a
/// declared stability certificate.
pub const CERTIFICATE_SLACK: f64 = 1e-9;

/// Largest number of dataset states `m^n` that exhaustive enumeration accepts.
pub const ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("dataset must contain at least one element")]
    EmptyDataset,
    #[error("index {index} out of range for dataset of size {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("support is empty")]
    EmptySupport,
    #[error("support has {support} elements but {probs} probabilities")]
    LengthMismatch { support: usize, probs: usize },
    #[error("probability {p} at position {index} is negative or not finite")]
    BadProbability { index: usize, p: f64 },
    #[error("probabilities sum to {sum}; expected 1 within {tol}")]
    NotNormalized { sum: f64, tol: f64 },
    #[error("invalid range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("stability must be finite and nonnegative, got {value}")]
    InvalidStability { value: f64 },
    #[error("operation requires a function flagged unbiased")]
    NotUnbiased,
    #[error("enumeration over {states} dataset states exceeds the cap of {cap}")]
    EnumerationTooLarge { states: u128, cap: u128 },
    #[error("stability certificate violated: observed deviation {observed} exceeds declared {declared}")]
    CertificateViolation { observed: f64, declared: f64 },
}

/// An ordered sample `(z_1, ..., z_n)`, `n >= 1`. Immutable once built;
/// [`Dataset::replace`] returns the neighboring dataset `s^{i<-z}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<Z> {
    elems: Vec<Z>,
}

impl<Z: Clone> Dataset<Z> {
    pub fn new(elems: Vec<Z>) -> Result<Self, CoreError> {
        if elems.is_empty() {
            return Err(CoreError::EmptyDataset);
        }
        Ok(Self { elems })
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty datasets
    }

    pub fn elems(&self) -> &[Z] {
        &self.elems
    }

    pub fn get(&self, i: usize) -> Result<&Z, CoreError> {
        self.elems.get(i).ok_or(CoreError::IndexOutOfRange {
            index: i,
            len: self.elems.len(),
        })
    }

    /// The neighbor `s^{i<-z}`: entry `i` replaced by `z`, all others kept.
    pub fn replace(&self, i: usize, z: Z) -> Result<Self, CoreError> {
        if i >= self.elems.len() {
            return Err(CoreError::IndexOutOfRange {
                index: i,
                len: self.elems.len(),
            });
        }
        let mut elems = self.elems.clone();
        elems[i] = z;
        Ok(Self { elems })
    }

    /// In-place overwrite for the dataset enumerator. Callers outside this
    /// module only ever see immutable datasets.
    pub(crate) fn set_unchecked(&mut self, i: usize, z: Z) {
        self.elems[i] = z;
    }
}

/// A probability distribution with finite support. Probabilities must be
/// nonnegative and sum to 1 within `1e-12`.
#[derive(Debug, Clone)]
pub struct FiniteDistribution<Z> {
    support: Vec<Z>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

const NORMALIZATION_TOL: f64 = 1e-12;

impl<Z: Clone> FiniteDistribution<Z> {
    pub fn new(support: Vec<Z>, probs: Vec<f64>) -> Result<Self, CoreError> {
        if support.is_empty() {
            return Err(CoreError::EmptySupport);
        }
        if support.len() != probs.len() {
            return Err(CoreError::LengthMismatch {
                support: support.len(),
                probs: probs.len(),
            });
        }
        for (index, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(CoreError::BadProbability { index, p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(CoreError::NotNormalized {
                sum,
                tol: NORMALIZATION_TOL,
            });
        }
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cdf.push(acc);
        }
        // Guard the last bucket against rounding in the partial sums.
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(Self { support, probs, cdf })
    }

    pub fn uniform(support: Vec<Z>) -> Result<Self, CoreError> {
        let m = support.len();
        if m == 0 {
            return Err(CoreError::EmptySupport);
        }
        let p = 1.0 / m as f64;
        Self::new(support, vec![p; m])
    }

    pub fn point_mass(z: Z) -> Self {
        Self {
            support: vec![z],
            probs: vec![1.0],
            cdf: vec![1.0],
        }
    }

    pub fn support(&self) -> &[Z] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty support
    }

    /// Exact expectation `E_{z~P}[f(z)]`.
    pub fn expectation(&self, mut f: impl FnMut(&Z) -> f64) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(z, &p)| p * f(z))
            .sum()
    }

    pub fn sample_index(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.len() - 1)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> &Z {
        &self.support[self.sample_index(rng)]
    }

    pub fn sample_dataset(&self, n: usize, rng: &mut impl Rng) -> Result<Dataset<Z>, CoreError> {
        if n == 0 {
            return Err(CoreError::EmptyDataset);
        }
        let elems = (0..n).map(|_| self.sample(rng).clone()).collect();
        Dataset::new(elems)
    }
}

/// Visit every dataset in `support^n` along with its product-measure weight.
/// Rejects instances with more than [`ENUMERATION_CAP`] states.
pub fn for_each_dataset<Z: Clone>(
    p: &FiniteDistribution<Z>,
    n: usize,
    mut visit: impl FnMut(&Dataset<Z>, f64),
) -> Result<(), CoreError> {
    if n == 0 {
        return Err(CoreError::EmptyDataset);
    }
    let m = p.len() as u128;
    let states = m
        .checked_pow(n as u32)
        .unwrap_or(u128::MAX);
    if states > ENUMERATION_CAP {
        return Err(CoreError::EnumerationTooLarge {
            states,
            cap: ENUMERATION_CAP,
        });
    }
    let mut idx = vec![0usize; n];
    let mut s = Dataset::new(vec![p.support()[0].clone(); n])?;
    loop {
        let weight: f64 = idx.iter().map(|&i| p.probs()[i]).product();
        visit(&s, weight);
        // Odometer increment over support indices.
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(());
            }
            idx[pos] += 1;
            if idx[pos] < p.len() {
                s.set_unchecked(pos, p.support()[idx[pos]].clone());
                break;
            }
            idx[pos] = 0;
            s.set_unchecked(pos, p.support()[0].clone());
            pos += 1;
        }
    }
}

/// How an expectation over datasets `s ~ P^n` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpectationOracle {
    /// Exact product-measure sum; requires `m^n <= ENUMERATION_CAP`.
    Exhaustive,
    /// Seeded Monte Carlo over `draws` datasets.
    MonteCarlo { draws: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimateMethod {
    Analytic,
    MonteCarlo { draws: u64 },
}

/// A numeric expectation together with how it was obtained. `std_error` is 0
/// for analytic values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: EstimateMethod,
}

impl ExpectationEstimate {
    pub fn analytic(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            method: EstimateMethod::Analytic,
        }
    }
}

/// Expectation of `f` over datasets `s ~ P^n`, by the requested oracle.
pub fn dataset_expectation<Z: Clone>(
    p: &FiniteDistribution<Z>,
    n: usize,
    mut f: impl FnMut(&Dataset<Z>) -> f64,
    oracle: &ExpectationOracle,
) -> Result<ExpectationEstimate, CoreError> {
    match *oracle {
        ExpectationOracle::Exhaustive => {
            let mut acc = 0.0;
            for_each_dataset(p, n, |s, w| acc += w * f(s))?;
            Ok(ExpectationEstimate::analytic(acc))
        }
        ExpectationOracle::MonteCarlo { draws, seed } => {
            if draws == 0 || n == 0 {
                return Err(CoreError::EmptyDataset);
            }
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for j in 0..draws {
                let mut rng = stream(seed, j);
                let s = p.sample_dataset(n, &mut rng)?;
                let v = f(&s);
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / draws as f64;
            let var = (sumsq / draws as f64 - mean * mean).max(0.0);
            Ok(ExpectationEstimate {
                value: mean,
                std_error: (var / draws as f64).sqrt(),
                method: EstimateMethod::MonteCarlo { draws },
            })
        }
    }
}

type EvalFn<Z> = Arc<dyn Fn(&Dataset<Z>, &Z) -> f64 + Send + Sync>;

/// A data-dependent function `M(s, z)` with declared range `[lo, hi]`,
/// declared stability, and a flag recording whether `E_{z~P}[M(s, z)] = 0`
/// holds for every dataset (the "unbiased" normalization produced by
/// [`unbias`]).
///
/// Declared attributes are certificates: audits check them, evaluation does
/// not re-verify them.
#[derive(Clone)]
pub struct DataDependentFunction<Z> {
    eval: EvalFn<Z>,
    lo: f64,
    hi: f64,
    stability: f64,
    unbiased: bool,
}

impl<Z> fmt::Debug for DataDependentFunction<Z> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DataDependentFunction")
            .field("range", &(self.lo, self.hi))
            .field("stability", &self.stability)
            .field("unbiased", &self.unbiased)
            .finish_non_exhaustive()
    }
}

impl<Z> DataDependentFunction<Z> {
    pub fn new(
        range: (f64, f64),
        stability: f64,
        eval: impl Fn(&Dataset<Z>, &Z) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, CoreError> {
        let (lo, hi) = range;
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(CoreError::InvalidRange { lo, hi });
        }
        if !stability.is_finite() || stability < 0.0 {
            return Err(CoreError::InvalidStability { value: stability });
        }
        Ok(Self {
            eval: Arc::new(eval),
            lo,
            hi,
            stability,
            unbiased: false,
        })
    }

    /// Constant function: range `[c, c]`, stability 0.
    pub fn constant(c: f64) -> Self {
        Self {
            eval: Arc::new(move |_: &Dataset<Z>, _: &Z| c),
            lo: c,
            hi: c,
            stability: 0.0,
            unbiased: c == 0.0,
        }
    }

    /// Declare the unbiased normalization `E_{z~P}[M(s, .)] = 0`. The caller
    /// asserts the property; audits can falsify it.
    pub fn with_unbiased_flag(mut self, flag: bool) -> Self {
        self.unbiased = flag;
        self
    }

    pub fn evaluate(&self, s: &Dataset<Z>, z: &Z) -> f64 {
        (self.eval)(s, z)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Half-width proxy `max(|lo|, |hi|)`, the `R` with `|M| <= R`.
    pub fn range_bound(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn stability(&self) -> f64 {
        self.stability
    }

    pub fn is_unbiased(&self) -> bool {
        self.unbiased
    }
}

/// Empirical mean `(1/n) sum_i M(s, s_i)`.
pub fn empirical_mean<Z: Clone>(m: &DataDependentFunction<Z>, s: &Dataset<Z>) -> f64 {
    let total: f64 = s.elems().iter().map(|z| m.evaluate(s, z)).sum();
    total / s.len() as f64
}

/// Exact mean `E_{z~P}[M(s, z)]` over the finite support.
pub fn true_mean<Z: Clone>(
    m: &DataDependentFunction<Z>,
    s: &Dataset<Z>,
    p: &FiniteDistribution<Z>,
) -> ExpectationEstimate {
    ExpectationEstimate::analytic(p.expectation(|z| m.evaluate(s, z)))
}

/// Estimation error `Delta_s(M) = |E_P[M(s, .)] - (1/n) sum_i M(s, s_i)|`.
pub fn estimation_error<Z: Clone>(
    m: &DataDependentFunction<Z>,
    s: &Dataset<Z>,
    p: &FiniteDistribution<Z>,
) -> f64 {
    (true_mean(m, s, p).value - empirical_mean(m, s)).abs()
}

/// The unbiased version `L(s, z) = M(s, z) - E_{z'~P}[M(s, z')]`.
///
/// `L` satisfies `E_{z~P}[L(s, .)] = 0` for every `s`, has range width at most
/// twice `M`'s, and stability at most `2 gamma`; the estimation error of `M`
/// equals `|E-hat_s[L(s, .)]|`.
pub fn unbias<Z: Clone + Send + Sync + 'static>(
    m: &DataDependentFunction<Z>,
    p: &FiniteDistribution<Z>,
) -> DataDependentFunction<Z> {
    let inner = m.clone();
    let dist = p.clone();
    let (lo, hi) = m.range();
    DataDependentFunction {
        eval: Arc::new(move |s: &Dataset<Z>, z: &Z| {
            let mean = dist.expectation(|zp| inner.evaluate(s, zp));
            inner.evaluate(s, z) - mean
        }),
        lo: lo - hi,
        hi: hi - lo,
        stability: 2.0 * m.stability(),
        unbiased: true,
    }
}

/// Leave-one-out error `(1/n) sum_i L(s^{i<-z}, s_i)`. Requires the unbiased
/// flag: the quantity estimates `E-hat_s[L(s, .)]` only for centered `L`.
pub fn loo_error<Z: Clone>(
    l: &DataDependentFunction<Z>,
    s: &Dataset<Z>,
    z: &Z,
) -> Result<f64, CoreError> {
    if !l.is_unbiased() {
        return Err(CoreError::NotUnbiased);
    }
    let n = s.len();
    let mut total = 0.0;
    for i in 0..n {
        let neighbor = s.replace(i, z.clone())?;
        total += l.evaluate(&neighbor, &s.elems()[i]);
    }
    Ok(total / n as f64)
}

/// Largest deviation `|M(s, z) - M(s^{i<-z'}, z)|` over `trials` sampled
/// replacement tuples. Returns the observed maximum; exceeding the declared
/// certificate by more than [`CERTIFICATE_SLACK`] is the distinguished
/// [`CoreError::CertificateViolation`].
pub fn audit_stability<Z: Clone>(
    m: &DataDependentFunction<Z>,
    p: &FiniteDistribution<Z>,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<f64, CoreError> {
    if n == 0 {
        return Err(CoreError::EmptyDataset);
    }
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let mut rng = stream(seed, t);
        let s = p.sample_dataset(n, &mut rng)?;
        let i = rng.random_range(0..n);
        let replacement = p.sample(&mut rng).clone();
        let z = p.sample(&mut rng).clone();
        let neighbor = s.replace(i, replacement)?;
        let d = (m.evaluate(&s, &z) - m.evaluate(&neighbor, &z)).abs();
        worst = worst.max(d);
    }
    if worst > m.stability() + CERTIFICATE_SLACK {
        return Err(CoreError::CertificateViolation {
            observed: worst,
            declared: m.stability(),
        });
    }
    Ok(worst)
}

/// Exact uniform stability of `M` restricted to datasets over the support:
/// maximizes over every `(s, i, z', z)` in `support^n x [n] x support^2`.
/// Only feasible for tiny instances; used by audits and tests.
pub fn exhaustive_stability<Z: Clone>(
    m: &DataDependentFunction<Z>,
    p: &FiniteDistribution<Z>,
    n: usize,
) -> Result<f64, CoreError> {
    let mut worst: f64 = 0.0;
    for_each_dataset(p, n, |s, _| {
        for i in 0..n {
            for zp in p.support() {
                let neighbor = s.replace(i, zp.clone()).expect("index in range");
                for z in p.support() {
                    let d = (m.evaluate(s, z) - m.evaluate(&neighbor, z)).abs();
                    worst = worst.max(d);
                }
            }
        }
    })?;
    Ok(worst)
}

/// Count-based example function `M(s, z) = gamma * count(z in s)`, the
/// canonical gamma-stable non-constant function on a finite support.
/// Bounded by `gamma * n_max`; the declared range uses that bound.
pub fn count_function<Z: Clone + PartialEq + Send + Sync + 'static>(
    gamma: f64,
    n_max: usize,
) -> Result<DataDependentFunction<Z>, CoreError> {
    DataDependentFunction::new((0.0, gamma * n_max as f64), gamma, move |s, z| {
        gamma * s.elems().iter().filter(|e| *e == z).count() as f64
    })
}
