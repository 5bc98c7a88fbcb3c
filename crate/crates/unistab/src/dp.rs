//! Randomized binary label prediction with a per-query privacy guarantee,
//! and the stability certificate its expected loss inherits.
//!
//! The shipped mechanism picks a label with probability proportional to
//! `exp(epsilon * count / 2)`, so neighboring datasets shift each output
//! probability by a factor of at most `exp(epsilon)`. The expected loss of
//! such a predictor, as a function of the training set and a query point,
//! is uniformly stable with constant `exp(epsilon) - 1`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::bounds::{main_bound, BoundParams, BoundValue, BoundsError};
use crate::core::{CoreError, DataDependentFunction, Dataset};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("privacy parameter must be finite and nonnegative, got {epsilon}")]
    InvalidEpsilon { epsilon: f64 },
    #[error("labels must be 0 or 1, found {label} at index {index}")]
    BadLabel { label: u8, index: usize },
    #[error("loss entries must lie in [0, 1], got {value}")]
    BadLossEntry { value: f64 },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// A feature together with a binary label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabeledExample {
    pub x: i64,
    pub y: u8,
}

fn check_epsilon(epsilon: f64) -> Result<(), DpError> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(DpError::InvalidEpsilon { epsilon })
    }
}

fn label_counts(s: &Dataset<LabeledExample>) -> Result<(u64, u64), DpError> {
    let mut counts = (0u64, 0u64);
    for (index, e) in s.elems().iter().enumerate() {
        match e.y {
            0 => counts.0 += 1,
            1 => counts.1 += 1,
            label => return Err(DpError::BadLabel { label, index }),
        }
    }
    Ok(counts)
}

/// Output distribution of the count-based mechanism: probabilities
/// proportional to `exp(epsilon * c_y / 2)`, computed through the logistic
/// form so extreme counts degrade gracefully instead of overflowing.
fn majority_probs(c0: u64, c1: u64, epsilon: f64) -> [f64; 2] {
    let d = epsilon * (c1 as f64 - c0 as f64) / 2.0;
    [1.0 / (1.0 + d.exp()), 1.0 / (1.0 + (-d).exp())]
}

/// Label distribution over {0, 1} produced by the exponential mechanism on
/// label counts: `P[y] = exp(epsilon c_y / 2) / sum_y' exp(epsilon c_y'/2)`.
pub fn exp_mech_majority(
    s: &Dataset<LabeledExample>,
    epsilon: f64,
) -> Result<[f64; 2], DpError> {
    check_epsilon(epsilon)?;
    let (c0, c1) = label_counts(s)?;
    Ok(majority_probs(c0, c1, epsilon))
}

/// A prediction interface whose output distribution moves by a factor of at
/// most `exp(epsilon)` when one training example is replaced.
pub struct DpPredictor {
    epsilon: f64,
    mechanism:
        Arc<dyn Fn(&Dataset<LabeledExample>, i64) -> Result<[f64; 2], DpError> + Send + Sync>,
}

impl Clone for DpPredictor {
    fn clone(&self) -> Self {
        Self {
            epsilon: self.epsilon,
            mechanism: Arc::clone(&self.mechanism),
        }
    }
}

impl fmt::Debug for DpPredictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DpPredictor")
            .field("epsilon", &self.epsilon)
            .finish_non_exhaustive()
    }
}

impl DpPredictor {
    /// The count-based mechanism, which ignores the query feature.
    pub fn majority(epsilon: f64) -> Result<Self, DpError> {
        check_epsilon(epsilon)?;
        Ok(Self {
            epsilon,
            mechanism: Arc::new(move |s, _x| exp_mech_majority(s, epsilon)),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn predict(
        &self,
        s: &Dataset<LabeledExample>,
        x: i64,
    ) -> Result<[f64; 2], DpError> {
        (self.mechanism)(s, x)
    }
}

/// Expected loss of the predictor at a query point, as a data-dependent
/// function: `M(s, (x, y)) = sum_k P[predict = k | s, x] * loss[k][y]`.
///
/// `loss[k][y]` is the cost of predicting `k` against true label `y`; the
/// entries must lie in `[0, 1]`, so `M` is declared on range `(0, 1)` with
/// stability `exp(epsilon) - 1`. Evaluating the result on a dataset with
/// labels outside {0, 1} panics.
pub fn expected_loss_function(
    pred: &DpPredictor,
    loss: [[f64; 2]; 2],
) -> Result<DataDependentFunction<LabeledExample>, DpError> {
    for row in &loss {
        for &value in row {
            if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
                return Err(DpError::BadLossEntry { value });
            }
        }
    }
    let gamma = pred.epsilon.exp_m1();
    let pred = pred.clone();
    Ok(DataDependentFunction::new(
        (0.0, 1.0),
        gamma,
        move |s: &Dataset<LabeledExample>, z: &LabeledExample| {
            let probs = pred
                .predict(s, z.x)
                .expect("mechanism rejected the training set");
            let y = usize::from(z.y);
            probs[0] * loss[0][y] + probs[1] * loss[1][y]
        },
    )?)
}

/// Tail bound on the estimation error of any `exp(epsilon)-1`-stable
/// function with range `[0, 1]`, such as the expected loss of an
/// epsilon-private predictor.
pub fn dp_generalization_bound(
    n: u128,
    epsilon: f64,
    delta: f64,
) -> Result<BoundValue, DpError> {
    check_epsilon(epsilon)?;
    let params = BoundParams::new(n, epsilon.exp_m1(), delta)?;
    Ok(main_bound(&params)?)
}

/// Largest output-probability ratio across every neighboring count pair
/// with total count at most `n_max`. Privacy of the mechanism means the
/// result never exceeds `exp(epsilon)`.
pub fn dp_ratio_audit(n_max: u64, epsilon: f64) -> Result<f64, DpError> {
    check_epsilon(epsilon)?;
    let mut worst: f64 = 1.0;
    for n in 1..=n_max {
        for c1 in 1..=n {
            // Replacing one example turns (c0, c1) into (c0 + 1, c1 - 1);
            // the reverse direction is covered by the ratio both ways.
            let a = majority_probs(n - c1, c1, epsilon);
            let b = majority_probs(n - c1 + 1, c1 - 1, epsilon);
            for y in 0..2 {
                worst = worst.max(a[y] / b[y]).max(b[y] / a[y]);
            }
        }
    }
    Ok(worst)
}
