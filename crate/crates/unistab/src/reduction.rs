//! Range reduction for stable functions.
//!
//! A gamma-stable unbiased function `L` with range `[-R, R]` concentrates,
//! for each fixed query point, within a window of half-width
//! `w = gamma sqrt(n ln(n/delta))` around its mean over datasets. Subtracting
//! that mean ([`center`]) and clamping the remainder to a per-dataset window
//! ([`adaptive_clamp`]) therefore yields a function with range `2w` instead
//! of `2R`, while preserving stability, zero mean over query points, and the
//! original function up to a small residual. [`range_reduce`] runs the whole
//! pipeline and certifies the budgets.
//!
//! The window must be recentered per dataset: clamping around 0 would break
//! the zero-mean property. [`find_shift`] locates the shift that restores it.
//!
//! [`block_loo`] and [`overlapping_block_loo`] decompose the leave-one-out
//! error into block averages, the splitting step used to localize a stable
//! function's error to smaller sample sizes.

use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::core::{
    dataset_expectation, for_each_dataset, CoreError, DataDependentFunction, Dataset,
    ExpectationEstimate, ExpectationOracle, FiniteDistribution,
};
use crate::rng::stream;

/// Bisection tolerance for window shifts.
const SHIFT_TOL: f64 = 1e-12;
/// Largest tolerated deviation from zero mean in shift searches.
const CENTERING_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("shift search needs zero-mean values, found mean {mean}")]
    NotCentered { mean: f64 },
    #[error("window half-width must be positive and finite, got {width}")]
    InvalidWidth { width: f64 },
    #[error("clamp budget must be finite and nonnegative, got {budget}")]
    InvalidBudget { budget: f64 },
    #[error(
        "stability {gamma} leaves nothing to reduce at n={n}, delta={delta}; needs gamma < {limit}"
    )]
    StabilityTooLarge {
        gamma: f64,
        n: usize,
        delta: f64,
        limit: f64,
    },
    #[error("tail probability must lie in (0, 1/e], got {delta}")]
    DeltaOutOfRange { delta: f64 },
    #[error("range reduction needs at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },
    #[error("block count {blocks} does not divide the sample size {n}")]
    UnevenBlocks { n: usize, blocks: usize },
    #[error("block size {size} not in 1..={n}")]
    BadBlockSize { size: usize, n: usize },
}

/// A function of the query point alone.
pub type PointFunction<Z> = Arc<dyn Fn(&Z) -> f64 + Send + Sync>;

/// Mean of the values clamped to `[x - w, x + w]`, written as clipped tail
/// masses so that in-window values contribute exactly 0.0. Nondecreasing in
/// `x`; for zero-mean values it is <= 0 at `x = -w` and >= 0 at `x = w`.
fn psi(values: &[(f64, f64)], x: f64, w: f64) -> f64 {
    let mut acc = 0.0;
    for &(v, q) in values {
        let over = v - (x + w);
        if over > 0.0 {
            acc -= q * over;
        }
        let under = (x - w) - v;
        if under > 0.0 {
            acc += q * under;
        }
    }
    acc
}

/// Shift `b` in `[-width, width]` such that clamping the given zero-mean
/// value distribution to `[b - width, b + width]` keeps its mean at zero.
///
/// `values` holds `(value, probability)` pairs. The solution set is a closed
/// interval; the midpoint is returned. That choice matters: both interval
/// edges move by at most `gamma` when the values move by at most `gamma`
/// pointwise, so the midpoint inherits the stability of the function whose
/// values these are.
pub fn find_shift(values: &[(f64, f64)], width: f64) -> Result<f64, ReductionError> {
    if !(width.is_finite() && width > 0.0) {
        return Err(ReductionError::InvalidWidth { width });
    }
    let mean: f64 = values.iter().map(|&(v, q)| v * q).sum();
    if mean.abs() > CENTERING_TOL {
        return Err(ReductionError::NotCentered { mean });
    }
    let w = width;
    // inf { x : psi(x) >= 0 }
    let left = {
        let (mut a, mut b) = (-w, w);
        if psi(values, a, w) >= 0.0 {
            a
        } else {
            while b - a > SHIFT_TOL {
                let mid = 0.5 * (a + b);
                if psi(values, mid, w) >= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            b
        }
    };
    // sup { x : psi(x) <= 0 }
    let right = {
        let (mut a, mut b) = (-w, w);
        if psi(values, b, w) <= 0.0 {
            b
        } else {
            while b - a > SHIFT_TOL {
                let mid = 0.5 * (a + b);
                if psi(values, mid, w) <= 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            a
        }
    };
    Ok((0.5 * (left + right)).clamp(-w, w))
}

type ShiftCompute<Z> = Arc<dyn Fn(&Dataset<Z>) -> Result<f64, ReductionError> + Send + Sync>;

/// Memoized per-dataset window shifts, keyed by the dataset's elements.
/// Shifts are deterministic in the dataset, so concurrent recomputation can
/// only re-derive the same value.
pub struct ShiftMap<Z> {
    entries: Arc<Mutex<Vec<(Vec<Z>, f64)>>>,
    compute: ShiftCompute<Z>,
}

impl<Z> Clone for ShiftMap<Z> {
    fn clone(&self) -> Self {
        Self {
            entries: Arc::clone(&self.entries),
            compute: Arc::clone(&self.compute),
        }
    }
}

impl<Z: Clone + PartialEq> ShiftMap<Z> {
    fn new(compute: ShiftCompute<Z>) -> Self {
        Self {
            entries: Arc::new(Mutex::new(Vec::new())),
            compute,
        }
    }

    fn constant_zero() -> Self {
        Self::new(Arc::new(|_| Ok(0.0)))
    }

    pub fn shift(&self, s: &Dataset<Z>) -> Result<f64, ReductionError> {
        {
            let entries = self.entries.lock().expect("shift cache poisoned");
            if let Some((_, b)) = entries.iter().find(|(k, _)| k == s.elems()) {
                return Ok(*b);
            }
        }
        let b = (self.compute)(s)?;
        let mut entries = self.entries.lock().expect("shift cache poisoned");
        if !entries.iter().any(|(k, _)| k == s.elems()) {
            entries.push((s.elems().to_vec(), b));
        }
        Ok(b)
    }

    /// Number of datasets with a cached shift.
    pub fn cached(&self) -> usize {
        self.entries.lock().expect("shift cache poisoned").len()
    }
}

/// Split `L` into a data-independent part `phi(z) = E_{s~P^n}[L(s, z)]` and
/// the remainder `K = L - phi`, which has mean zero over datasets at every
/// query point and keeps `L`'s stability. If `L` is unbiased, `K` stays
/// unbiased.
///
/// `phi` is tabulated on the support of `P` up front; off-support arguments
/// fall back to evaluating the expectation on demand.
pub fn center<Z>(
    l: &DataDependentFunction<Z>,
    p: &FiniteDistribution<Z>,
    n: usize,
    oracle: &ExpectationOracle,
) -> Result<(PointFunction<Z>, DataDependentFunction<Z>), ReductionError>
where
    Z: Clone + PartialEq + Send + Sync + 'static,
{
    let support = p.support().to_vec();
    let mut table = vec![0.0; support.len()];
    let fallback: PointFunction<Z> = match *oracle {
        ExpectationOracle::Exhaustive => {
            for_each_dataset(p, n, |s, wgt| {
                for (j, z) in support.iter().enumerate() {
                    table[j] += wgt * l.evaluate(s, z);
                }
            })?;
            let pc = p.clone();
            let lc = l.clone();
            Arc::new(move |z: &Z| {
                let mut acc = 0.0;
                for_each_dataset(&pc, n, |s, wgt| acc += wgt * lc.evaluate(s, z))
                    .expect("feasibility was checked by the construction pass");
                acc
            })
        }
        ExpectationOracle::MonteCarlo { draws, seed } => {
            if draws == 0 {
                return Err(CoreError::EmptyDataset.into());
            }
            let mut sets = Vec::with_capacity(draws as usize);
            for j in 0..draws {
                let mut rng = stream(seed, j);
                sets.push(p.sample_dataset(n, &mut rng)?);
            }
            for s in &sets {
                for (j, z) in support.iter().enumerate() {
                    table[j] += l.evaluate(s, z);
                }
            }
            for v in &mut table {
                *v /= draws as f64;
            }
            let sets = Arc::new(sets);
            let lc = l.clone();
            Arc::new(move |z: &Z| {
                sets.iter().map(|s| lc.evaluate(s, z)).sum::<f64>() / sets.len() as f64
            })
        }
    };
    let phi: PointFunction<Z> = {
        let support = support.clone();
        Arc::new(move |z: &Z| match support.iter().position(|u| u == z) {
            Some(j) => table[j],
            None => fallback(z),
        })
    };
    let (lo, hi) = l.range();
    let lc = l.clone();
    let phi_c = Arc::clone(&phi);
    let k = DataDependentFunction::new((lo - hi, hi - lo), l.stability(), move |s, z| {
        lc.evaluate(s, z) - phi_c(z)
    })?
    .with_unbiased_flag(l.is_unbiased());
    Ok((phi, k))
}

/// Window geometry and error budget for [`adaptive_clamp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampSpec {
    /// Window half-width `w`; the clamped function lives in
    /// `[b_s - w, b_s + w]` for a per-dataset shift `b_s`.
    pub width: f64,
    /// Declared tail-mass budget `beta`; the mean absolute clamp error is
    /// guaranteed to stay within `4 beta` when the declaration holds.
    pub budget: f64,
}

pub struct ClampResult<Z> {
    pub clamped: DataDependentFunction<Z>,
    pub shifts: ShiftMap<Z>,
    /// Mean absolute difference between the clamped and original function,
    /// over datasets and query points, via the requested oracle.
    pub clamp_error_mean: ExpectationEstimate,
}

/// Clamp an unbiased function to a window of half-width `spec.width` around
/// a per-dataset shift chosen by [`find_shift`], so that the result is still
/// unbiased, keeps the declared stability, and has range at most
/// `2 * spec.width`.
///
/// The shift for each dataset the oracle visits is computed eagerly, which
/// also verifies centering there; evaluating the clamped function later on a
/// dataset whose query-point mean is nonzero panics.
pub fn adaptive_clamp<Z>(
    k: &DataDependentFunction<Z>,
    p: &FiniteDistribution<Z>,
    spec: ClampSpec,
    n: usize,
    oracle: &ExpectationOracle,
) -> Result<ClampResult<Z>, ReductionError>
where
    Z: Clone + PartialEq + Send + Sync + 'static,
{
    if !(spec.width.is_finite() && spec.width > 0.0) {
        return Err(ReductionError::InvalidWidth { width: spec.width });
    }
    if !(spec.budget.is_finite() && spec.budget >= 0.0) {
        return Err(ReductionError::InvalidBudget {
            budget: spec.budget,
        });
    }
    if !k.is_unbiased() {
        return Err(CoreError::NotUnbiased.into());
    }
    let (klo, khi) = k.range();
    if klo > 0.0 || khi < 0.0 {
        // A zero-mean function's range must straddle zero.
        return Err(CoreError::InvalidRange { lo: klo, hi: khi }.into());
    }
    let w = spec.width;
    let shifts = {
        let pc = p.clone();
        let kc = k.clone();
        ShiftMap::new(Arc::new(move |s: &Dataset<Z>| {
            let values: Vec<(f64, f64)> = pc
                .support()
                .iter()
                .zip(pc.probs())
                .map(|(z, &q)| (kc.evaluate(s, z), q))
                .collect();
            find_shift(&values, w)
        }))
    };
    let clamp_error_mean = {
        let shifts = shifts.clone();
        let kc = k.clone();
        let pc = p.clone();
        let mut failure: Option<ReductionError> = None;
        let est = dataset_expectation(
            p,
            n,
            |s| match shifts.shift(s) {
                Ok(b) => pc
                    .support()
                    .iter()
                    .zip(pc.probs())
                    .map(|(z, &q)| {
                        let v = kc.evaluate(s, z);
                        q * ((v - (b + w)).max(0.0) + ((b - w) - v).max(0.0))
                    })
                    .sum(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            oracle,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        est
    };
    let clamped = {
        let shifts = shifts.clone();
        let kc = k.clone();
        DataDependentFunction::new(
            (klo.max(-2.0 * w), khi.min(2.0 * w)),
            k.stability(),
            move |s, z| {
                let b = shifts
                    .shift(s)
                    .expect("clamp evaluated on a dataset without a zero-mean section");
                kc.evaluate(s, z).clamp(b - w, b + w)
            },
        )?
        .with_unbiased_flag(true)
    };
    Ok(ClampResult {
        clamped,
        shifts,
        clamp_error_mean,
    })
}

/// Decomposition `input = phi + clamped + residual` produced by
/// [`range_reduce`].
pub struct RangeReduction<Z> {
    /// Data-independent part `phi(z) = E_{s~P^n}[input(s, z)]`.
    pub phi: PointFunction<Z>,
    /// Unbiased remainder clamped to range `new_range`, same stability as
    /// the input.
    pub clamped: DataDependentFunction<Z>,
    /// What clamping removed; stability at most twice the input's, mean
    /// absolute value within `residual_budget` when the input's certificates
    /// hold.
    pub residual: DataDependentFunction<Z>,
    /// Certified range width `2 w` of `clamped`.
    pub new_range: f64,
    /// Window half-width `w = gamma sqrt(n ln(n/delta))`.
    pub width: f64,
    /// Tail-mass budget `beta = 2 R delta^2 / n^2`.
    pub clamp_budget: f64,
    /// Residual-mean budget `4 beta`.
    pub residual_budget: f64,
    pub shifts: ShiftMap<Z>,
    pub clamp_error_mean: ExpectationEstimate,
}

/// Rewrite an unbiased gamma-stable `l` with range bound `R` as
/// `phi + clamped + residual` where `clamped` has the far smaller range
/// `2 gamma sqrt(n ln(n/delta))`, at the price of a residual whose mean
/// absolute value is at most `8 R delta^2 / n^2`.
///
/// Requires `n >= 4`, `delta in (0, 1/e]`, and
/// `gamma < R / (2 sqrt(n ln(n/delta)))`; above that threshold the "reduced"
/// range would not be smaller. Zero stability short-circuits: the centered
/// remainder is then identically zero and nothing needs clamping.
pub fn range_reduce<Z>(
    l: &DataDependentFunction<Z>,
    p: &FiniteDistribution<Z>,
    n: usize,
    delta: f64,
    oracle: &ExpectationOracle,
) -> Result<RangeReduction<Z>, ReductionError>
where
    Z: Clone + PartialEq + Send + Sync + 'static,
{
    if n < 4 {
        return Err(ReductionError::TooFewSamples { n, min: 4 });
    }
    if !(delta > 0.0 && delta <= crate::bounds::inv_e()) {
        return Err(ReductionError::DeltaOutOfRange { delta });
    }
    if !l.is_unbiased() {
        return Err(CoreError::NotUnbiased.into());
    }
    let gamma = l.stability();
    let r = l.range_bound();
    let nf = n as f64;
    let budget = 2.0 * r * delta * delta / (nf * nf);
    if gamma == 0.0 {
        let (phi, k) = center(l, p, n, oracle)?;
        // A zero-stability unbiased remainder is identically zero.
        let k0 = k.clone();
        let clamped = DataDependentFunction::new((0.0, 0.0), 0.0, move |s: &Dataset<Z>, z: &Z| {
            k0.evaluate(s, z)
        })?
        .with_unbiased_flag(true);
        return Ok(RangeReduction {
            phi,
            clamped,
            residual: DataDependentFunction::constant(0.0),
            new_range: 0.0,
            width: 0.0,
            clamp_budget: budget,
            residual_budget: 4.0 * budget,
            shifts: ShiftMap::constant_zero(),
            clamp_error_mean: ExpectationEstimate::analytic(0.0),
        });
    }
    let scale = (nf * (nf / delta).ln()).sqrt();
    let limit = r / (2.0 * scale);
    if gamma >= limit {
        return Err(ReductionError::StabilityTooLarge {
            gamma,
            n,
            delta,
            limit,
        });
    }
    let width = gamma * scale;
    let (phi, k) = center(l, p, n, oracle)?;
    let clamp = adaptive_clamp(&k, p, ClampSpec { width, budget }, n, oracle)?;
    let (klo, khi) = k.range();
    let residual = {
        let kc = k.clone();
        let cc = clamp.clamped.clone();
        DataDependentFunction::new(
            (klo - 2.0 * width, khi + 2.0 * width),
            2.0 * gamma,
            move |s, z| kc.evaluate(s, z) - cc.evaluate(s, z),
        )?
        .with_unbiased_flag(true)
    };
    Ok(RangeReduction {
        phi,
        clamped: clamp.clamped,
        residual,
        new_range: 2.0 * width,
        width,
        clamp_budget: budget,
        residual_budget: 4.0 * budget,
        shifts: clamp.shifts,
        clamp_error_mean: clamp.clamp_error_mean,
    })
}

/// Block decomposition of a leave-one-out error.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLoo {
    pub per_block: Vec<f64>,
    /// Mean of the per-block values; equals the plain leave-one-out error.
    pub total: f64,
}

fn loo_terms<Z: Clone>(
    l: &DataDependentFunction<Z>,
    s: &Dataset<Z>,
    z: &Z,
) -> Result<Vec<f64>, ReductionError> {
    if !l.is_unbiased() {
        return Err(CoreError::NotUnbiased.into());
    }
    (0..s.len())
        .map(|i| {
            let neighbor = s.replace(i, z.clone())?;
            Ok(l.evaluate(&neighbor, &s.elems()[i]))
        })
        .collect()
}

/// Leave-one-out error split over `blocks` contiguous equal-size blocks:
/// entry `j` averages the leave-one-out terms with indices in block `j`.
pub fn block_loo<Z: Clone>(
    l: &DataDependentFunction<Z>,
    s: &Dataset<Z>,
    z: &Z,
    blocks: usize,
) -> Result<BlockLoo, ReductionError> {
    let n = s.len();
    if blocks == 0 || n % blocks != 0 {
        return Err(ReductionError::UnevenBlocks { n, blocks });
    }
    let terms = loo_terms(l, s, z)?;
    let size = n / blocks;
    let per_block: Vec<f64> = terms
        .chunks(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let total = per_block.iter().sum::<f64>() / blocks as f64;
    Ok(BlockLoo { per_block, total })
}

/// Leave-one-out error split over `n` cyclic overlapping blocks of the given
/// size: block `j` covers indices `j..j+size` modulo `n`, so every index
/// lands in exactly `size` blocks and the block mean is again the plain
/// leave-one-out error.
pub fn overlapping_block_loo<Z: Clone>(
    l: &DataDependentFunction<Z>,
    s: &Dataset<Z>,
    z: &Z,
    size: usize,
) -> Result<BlockLoo, ReductionError> {
    let n = s.len();
    if size == 0 || size > n {
        return Err(ReductionError::BadBlockSize { size, n });
    }
    let terms = loo_terms(l, s, z)?;
    let per_block: Vec<f64> = (0..n)
        .map(|j| (0..size).map(|o| terms[(j + o) % n]).sum::<f64>() / size as f64)
        .collect();
    let total = per_block.iter().sum::<f64>() / n as f64;
    Ok(BlockLoo { per_block, total })
}
