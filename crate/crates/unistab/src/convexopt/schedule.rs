//! Learning-rate schedules addressed per example.
//!
//! A [`RateSchedule`] records, for every optimizer step, which examples
//! participate and with what rate. The stability certificate of projected
//! gradient descent depends on the schedule only through the largest total
//! rate any single example receives ([`RateSchedule::one_inf_norm`]), so
//! schedules are first-class values here: they can be built, normed, dumped
//! to CSV, and audited independently of any solve.
//!
//! Rates are stated at the objective level: a step that averages gradients
//! over a batch of `k` examples with step size `eta` assigns rate `eta / k`
//! to each participant.

use rand::seq::SliceRandom;

use crate::bounds::fmt_g17;
use crate::convexopt::ConvexError;
use crate::rng::stream;

/// Largest step count [`replacement_rate_tail`] will expand exactly.
const OCCUPANCY_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RateSchedule {
    n: usize,
    steps: Vec<Vec<(usize, f64)>>,
}

impl RateSchedule {
    /// `steps[t]` lists `(example index, rate)` pairs applied at step `t`.
    /// Indices must address the `n` examples; rates must be positive and
    /// finite. A step may list an index more than once; its rates add up.
    pub fn new(n: usize, steps: Vec<Vec<(usize, f64)>>) -> Result<Self, ConvexError> {
        if n == 0 {
            return Err(ConvexError::InvalidBatch { k: 0, n });
        }
        for step in &steps {
            for &(i, eta) in step {
                if i >= n {
                    return Err(ConvexError::BadIndex { index: i, n });
                }
                if !(eta.is_finite() && eta > 0.0) {
                    return Err(ConvexError::InvalidRate { eta });
                }
            }
        }
        Ok(Self { n, steps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Vec<(usize, f64)>] {
        &self.steps
    }

    /// Total rate applied at each step.
    pub fn per_step_l1(&self) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| s.iter().map(|&(_, eta)| eta).sum())
            .collect()
    }

    /// Total rate each example receives across all steps.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for step in &self.steps {
            for &(i, eta) in step {
                sums[i] += eta;
            }
        }
        sums
    }

    /// Largest column sum: the schedule norm the stability certificate
    /// multiplies.
    pub fn one_inf_norm(&self) -> f64 {
        self.column_sums().into_iter().fold(0.0, f64::max)
    }

    /// One `t,i,eta` row per participation, steps in order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,i,eta\n");
        for (t, step) in self.steps.iter().enumerate() {
            for &(i, eta) in step {
                out.push_str(&format!("{t},{i},{}\n", fmt_g17(eta)));
            }
        }
        out
    }
}

/// How [`make_schedule`] picks participants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Every example at every step, rate `eta / n`. `steps` counts steps;
    /// the batch size argument is ignored.
    FullGd,
    /// Each pass shuffles the examples and walks them in batches of `k` at
    /// rate `eta / k`, so every example occurs exactly once per pass.
    /// `steps` counts passes.
    Shuffle,
    /// Each step draws an independent uniform `k`-subset at rate `eta / k`.
    /// `steps` counts steps; occupancy per example is binomial.
    WithReplacement,
}

pub fn make_schedule(
    kind: ScheduleKind,
    n: usize,
    steps: usize,
    k: usize,
    eta: f64,
    seed: u64,
) -> Result<RateSchedule, ConvexError> {
    if n == 0 || k == 0 || k > n {
        return Err(ConvexError::InvalidBatch { k, n });
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(ConvexError::InvalidRate { eta });
    }
    let mut rng = stream(seed, 0);
    let steps_vec: Vec<Vec<(usize, f64)>> = match kind {
        ScheduleKind::FullGd => {
            let rate = eta / n as f64;
            (0..steps)
                .map(|_| (0..n).map(|i| (i, rate)).collect())
                .collect()
        }
        ScheduleKind::Shuffle => {
            let rate = eta / k as f64;
            let mut acc = Vec::new();
            for _ in 0..steps {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                for chunk in perm.chunks(k) {
                    acc.push(chunk.iter().map(|&i| (i, rate)).collect());
                }
            }
            acc
        }
        ScheduleKind::WithReplacement => {
            let rate = eta / k as f64;
            (0..steps)
                .map(|_| {
                    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
                    idx.sort_unstable();
                    idx.into_iter().map(|i| (i, rate)).collect()
                })
                .collect()
        }
    };
    RateSchedule::new(n, steps_vec)
}

/// High-probability occupancy bound for resampled schedules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyTail {
    /// Rate mass `eta / k * occupancy`, exceeded by some example's column
    /// sum with probability at most the requested level.
    pub zeta: f64,
    /// Occupancy count backing `zeta`.
    pub occupancy: u64,
}

/// Smallest occupancy `m` with `n * P[Bin(steps, k/n) >= m] <= beta`, capped
/// at `steps` because no example can occur more often than that. The union
/// bound over examples then gives: with probability at least `1 - beta`,
/// every column sum of a [`ScheduleKind::WithReplacement`] schedule is at
/// most `zeta = (eta / k) * m`.
///
/// The binomial tail is computed exactly via a log-space pmf recurrence.
pub fn replacement_rate_tail(
    steps: u64,
    k: usize,
    n: usize,
    eta: f64,
    beta: f64,
) -> Result<OccupancyTail, ConvexError> {
    if n == 0 || k == 0 || k > n {
        return Err(ConvexError::InvalidBatch { k, n });
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(ConvexError::InvalidRate { eta });
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(ConvexError::InvalidTail { beta });
    }
    if steps > OCCUPANCY_CAP {
        return Err(ConvexError::TooManySteps {
            steps,
            cap: OCCUPANCY_CAP,
        });
    }
    let t = steps as usize;
    let p = k as f64 / n as f64;
    let pmf: Vec<f64> = if p == 1.0 {
        let mut v = vec![0.0; t + 1];
        v[t] = 1.0;
        v
    } else {
        let (lp, lq) = (p.ln(), (1.0 - p).ln());
        let mut logpmf = vec![0.0; t + 1];
        logpmf[0] = t as f64 * lq;
        for j in 0..t {
            logpmf[j + 1] = logpmf[j] + ((t - j) as f64 / (j + 1) as f64).ln() + lp - lq;
        }
        logpmf.into_iter().map(f64::exp).collect()
    };
    let mut suffix = vec![0.0; t + 2];
    for m in (0..=t).rev() {
        suffix[m] = suffix[m + 1] + pmf[m];
    }
    let nf = n as f64;
    let mut occupancy = steps;
    for (m, tail) in suffix.iter().take(t + 1).enumerate() {
        if nf * tail <= beta {
            occupancy = m as u64;
            break;
        }
    }
    Ok(OccupancyTail {
        zeta: eta / k as f64 * occupancy as f64,
        occupancy,
    })
}
