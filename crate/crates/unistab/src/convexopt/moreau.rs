//! Envelope smoothing for scalar convex functions.
//!
//! Infimal convolution with a quadratic turns a Lipschitz convex function
//! into one with `sigma`-Lipschitz gradient while moving values by at most
//! `lipschitz^2 / (2 sigma)`.

use std::sync::Arc;

use crate::convexopt::ConvexError;

/// Bisection width at which the proximal search stops.
const PROX_TOL: f64 = 1e-10;
const PROX_CAP: u32 = 300;

/// A convex `f: R -> R` together with its smoothed envelope
/// `w -> min_v f(v) + (sigma/2)(v - w)^2`.
pub struct SmoothedScalar {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lipschitz: f64,
    sigma: f64,
}

impl SmoothedScalar {
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Minimizer of `f(v) + (sigma/2)(v - w)^2`. The quadratic term makes
    /// the objective strictly convex, and the minimizer lies within
    /// `lipschitz / sigma` of `w`, so a ternary search on that interval
    /// converges.
    pub fn prox(&self, w: f64) -> f64 {
        let radius = self.lipschitz / self.sigma + PROX_TOL;
        let (mut a, mut b) = (w - radius, w + radius);
        let g = |v: f64| (self.f)(v) + 0.5 * self.sigma * (v - w) * (v - w);
        let mut rounds = 0;
        while b - a > PROX_TOL && rounds < PROX_CAP {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if g(m1) <= g(m2) {
                b = m2;
            } else {
                a = m1;
            }
            rounds += 1;
        }
        0.5 * (a + b)
    }

    /// Envelope value at `w`.
    pub fn eval(&self, w: f64) -> f64 {
        let p = self.prox(w);
        (self.f)(p) + 0.5 * self.sigma * (p - w) * (p - w)
    }

    /// Envelope gradient `sigma (w - prox(w))`.
    pub fn grad(&self, w: f64) -> f64 {
        self.sigma * (w - self.prox(w))
    }

    /// The underlying unsmoothed function.
    pub fn original(&self, w: f64) -> f64 {
        (self.f)(w)
    }
}

/// Wrap a `lipschitz`-Lipschitz convex function with its `sigma`-smooth
/// envelope. `f` must actually be convex; the search in [`SmoothedScalar::prox`]
/// assumes it.
pub fn moreau_smooth(
    f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    lipschitz: f64,
    sigma: f64,
) -> Result<SmoothedScalar, ConvexError> {
    if !(lipschitz.is_finite() && lipschitz > 0.0) {
        return Err(ConvexError::InvalidCertificate { value: lipschitz });
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(ConvexError::SmoothnessRequired);
    }
    Ok(SmoothedScalar {
        f: Arc::new(f),
        lipschitz,
        sigma,
    })
}
