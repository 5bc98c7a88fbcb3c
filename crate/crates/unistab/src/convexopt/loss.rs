//! Loss families with declared analytic certificates.
//!
//! A [`LossFamily`] bundles a per-example loss `l(w, z)` with the constants
//! the stability certificates consume: a Lipschitz bound over the feasible
//! body, a smoothness constant (gradient Lipschitz; infinite marks a
//! nonsmooth loss), and a strong-convexity modulus. The constants are
//! declarations in the same sense as elsewhere in this crate: solvers trust
//! them, audits can falsify them. Declaring a smaller modulus or a larger
//! Lipschitz constant than the true one is always sound and only loosens the
//! resulting certificates.

use std::sync::Arc;

use crate::convexopt::ConvexError;
use crate::core::Dataset;

/// Closed-form structure of the population objective, when known. Used to
/// compute exact minimizers and excess losses in experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticForm {
    /// One-dimensional `l(w, z) = curvature * (w - z)^2`: the population
    /// objective is `curvature * (w - mean)^2` plus a constant.
    Quadratic { curvature: f64 },
    /// `l(w, z) = (1 + <w, z>) / 2` with unit-norm data: the population
    /// objective is minimized on the unit ball at `-mean/|mean|`.
    Linear,
}

type LossFn<Z> = Arc<dyn Fn(&[f64], &Z) -> f64 + Send + Sync>;
type GradFn<Z> = Arc<dyn Fn(&[f64], &Z) -> Vec<f64> + Send + Sync>;

pub struct LossFamily<Z> {
    eval: LossFn<Z>,
    grad: GradFn<Z>,
    lipschitz: f64,
    smoothness: f64,
    strong_convexity: f64,
    dim: usize,
    analytic: Option<AnalyticForm>,
}

impl<Z> Clone for LossFamily<Z> {
    fn clone(&self) -> Self {
        Self {
            eval: Arc::clone(&self.eval),
            grad: Arc::clone(&self.grad),
            lipschitz: self.lipschitz,
            smoothness: self.smoothness,
            strong_convexity: self.strong_convexity,
            dim: self.dim,
            analytic: self.analytic,
        }
    }
}

impl<Z> LossFamily<Z> {
    /// Assemble a family from raw parts. `smoothness` may be
    /// `f64::INFINITY` for nonsmooth losses; `lipschitz` must be positive.
    pub fn new(
        eval: impl Fn(&[f64], &Z) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &Z) -> Vec<f64> + Send + Sync + 'static,
        lipschitz: f64,
        smoothness: f64,
        strong_convexity: f64,
        dim: usize,
        analytic: Option<AnalyticForm>,
    ) -> Result<Self, ConvexError> {
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(ConvexError::InvalidCertificate { value: lipschitz });
        }
        if smoothness.is_nan() || smoothness < 0.0 {
            return Err(ConvexError::InvalidCertificate { value: smoothness });
        }
        if !(strong_convexity.is_finite() && strong_convexity >= 0.0) {
            return Err(ConvexError::InvalidModulus {
                value: strong_convexity,
            });
        }
        if dim == 0 {
            return Err(ConvexError::InvalidDimension);
        }
        Ok(Self {
            eval: Arc::new(eval),
            grad: Arc::new(grad),
            lipschitz,
            smoothness,
            strong_convexity,
            dim,
            analytic,
        })
    }

    pub fn evaluate(&self, w: &[f64], z: &Z) -> f64 {
        (self.eval)(w, z)
    }

    pub fn gradient(&self, w: &[f64], z: &Z) -> Vec<f64> {
        (self.grad)(w, z)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn analytic_form(&self) -> Option<AnalyticForm> {
        self.analytic
    }

    /// Same family with a different declared strong-convexity modulus.
    /// Declaring less than the truth is sound; solvers then certify as if
    /// the loss had only the declared curvature.
    pub fn with_strong_convexity(mut self, value: f64) -> Result<Self, ConvexError> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(ConvexError::InvalidModulus { value });
        }
        self.strong_convexity = value;
        Ok(self)
    }
}

impl LossFamily<f64> {
    /// `l(w, z) = (w - z)^2 / 4` on the unit interval: Lipschitz 1,
    /// smoothness 1/2, strong convexity 1/2.
    pub fn quadratic_1d() -> Self {
        Self::quadratic_1d_with(0.25).expect("0.25 is an admissible curvature")
    }

    /// `l(w, z) = c (w - z)^2` for curvature `c in (0, 1/4]`, with weights
    /// and data in `[-1, 1]`: Lipschitz `4c`, smoothness `2c`, strong
    /// convexity `2c`.
    pub fn quadratic_1d_with(curvature: f64) -> Result<Self, ConvexError> {
        if !(curvature.is_finite() && curvature > 0.0 && curvature <= 0.25) {
            return Err(ConvexError::InvalidCurvature { curvature });
        }
        let c = curvature;
        Self::new(
            move |w, z| c * (w[0] - z) * (w[0] - z),
            move |w, z| vec![2.0 * c * (w[0] - z)],
            4.0 * c,
            2.0 * c,
            2.0 * c,
            1,
            Some(AnalyticForm::Quadratic { curvature: c }),
        )
    }
}

impl LossFamily<Vec<f64>> {
    /// `l(w, z) = (1 + <w, z>) / 2` with unit-norm data on the unit ball:
    /// Lipschitz 1/2, smoothness 0 (the gradient is constant in `w`), no
    /// strong convexity.
    pub fn linear(dim: usize) -> Result<Self, ConvexError> {
        if dim == 0 {
            return Err(ConvexError::InvalidDimension);
        }
        Self::new(
            |w: &[f64], z: &Vec<f64>| {
                0.5 * (1.0 + w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
            },
            |_w, z: &Vec<f64>| z.iter().map(|v| 0.5 * v).collect(),
            0.5,
            0.0,
            0.0,
            dim,
            Some(AnalyticForm::Linear),
        )
    }
}

/// Mean loss `(1/n) sum_i l(w, s_i)`.
pub fn mean_loss<Z: Clone>(fam: &LossFamily<Z>, w: &[f64], s: &Dataset<Z>) -> f64 {
    s.elems().iter().map(|z| fam.evaluate(w, z)).sum::<f64>() / s.len() as f64
}

/// Mean gradient `(1/n) sum_i grad l(w, s_i)`.
pub fn mean_grad<Z: Clone>(fam: &LossFamily<Z>, w: &[f64], s: &Dataset<Z>) -> Vec<f64> {
    let mut acc = vec![0.0; w.len()];
    for z in s.elems() {
        for (a, g) in acc.iter_mut().zip(fam.gradient(w, z)) {
            *a += g;
        }
    }
    let inv = 1.0 / s.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    acc
}

/// Feasible region a projected method stays inside.
pub trait ConvexBody: Send + Sync {
    fn project(&self, w: &mut [f64]);
    fn radius(&self) -> f64;
}

/// Euclidean ball of radius at most 1, the domain the Lipschitz
/// declarations of the built-in families are stated on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EuclideanBall {
    radius: f64,
}

impl EuclideanBall {
    pub fn new(radius: f64) -> Result<Self, ConvexError> {
        if !(radius.is_finite() && radius > 0.0 && radius <= 1.0) {
            return Err(ConvexError::InvalidRadius { radius });
        }
        Ok(Self { radius })
    }

    pub fn unit() -> Self {
        Self { radius: 1.0 }
    }
}

impl ConvexBody for EuclideanBall {
    fn project(&self, w: &mut [f64]) {
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > self.radius {
            let scale = self.radius / norm;
            for v in w {
                *v *= scale;
            }
        }
    }

    fn radius(&self) -> f64 {
        self.radius
    }
}

/// Population excess loss `F_P(w) - min_{u in unit ball} F_P(u)` from the
/// analytic form, given the population mean `mu` of the data.
///
/// Quadratic: `c (w - mu)^2`, assuming `|mu| <= 1` so the minimizer is
/// feasible. Linear: `(<w, mu> + |mu|) / 2`.
pub fn excess_loss<Z>(fam: &LossFamily<Z>, w: &[f64], mu: &[f64]) -> Result<f64, ConvexError> {
    if w.len() != fam.dim() || mu.len() != fam.dim() {
        return Err(ConvexError::DimensionMismatch {
            expected: fam.dim(),
            got: if w.len() != fam.dim() {
                w.len()
            } else {
                mu.len()
            },
        });
    }
    match fam.analytic_form() {
        Some(AnalyticForm::Quadratic { curvature }) => {
            let d = w[0] - mu[0];
            Ok(curvature * d * d)
        }
        Some(AnalyticForm::Linear) => {
            let dot: f64 = w.iter().zip(mu).map(|(a, b)| a * b).sum();
            let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok(0.5 * (dot + norm))
        }
        None => Err(ConvexError::NoAnalyticForm),
    }
}
