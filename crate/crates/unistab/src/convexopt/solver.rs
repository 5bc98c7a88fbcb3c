//! Empirical-risk solvers whose results carry replace-one stability bounds.

use crate::convexopt::loss::{mean_grad, mean_loss, AnalyticForm, ConvexBody, LossFamily};
use crate::convexopt::schedule::{
    make_schedule, replacement_rate_tail, RateSchedule, ScheduleKind,
};
use crate::convexopt::ConvexError;
use crate::core::Dataset;

/// Gradient-mapping residual below which the accelerated solver stops.
const AGD_TOL: f64 = 1e-9;
const AGD_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub w: Vec<f64>,
    /// Mean unregularized training loss at `w`.
    pub empirical_loss: f64,
    /// Bound on how far the trained loss moves, at any query point, when one
    /// training example is replaced.
    pub stability_certificate: f64,
    pub iterations: u64,
}

fn reg_grad<Z: Clone>(
    fam: &LossFamily<Z>,
    w: &[f64],
    s: &Dataset<Z>,
    lambda: f64,
) -> Vec<f64> {
    let mut g = mean_grad(fam, w, s);
    for (gv, wv) in g.iter_mut().zip(w) {
        *gv += lambda * wv;
    }
    g
}

/// Minimize the mean loss plus `(lambda/2)|w|^2` over `body`.
///
/// Certificate: `4 Lambda^2 / ((lambda + lambda_0) n)` where `lambda_0` is
/// the family's declared strong convexity. Quadratic families solve in
/// closed form (the data mean is recovered from one gradient probe);
/// everything else runs accelerated projected gradient descent, which
/// requires a finite smoothness constant.
pub fn reg_erm<Z: Clone>(
    fam: &LossFamily<Z>,
    s: &Dataset<Z>,
    lambda: f64,
    body: &dyn ConvexBody,
) -> Result<SolveResult, ConvexError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(ConvexError::InvalidRegularization { lambda });
    }
    let mu = lambda + fam.strong_convexity();
    if mu <= 0.0 {
        return Err(ConvexError::NotStronglyConvex);
    }
    let n = s.len();
    let lip = fam.lipschitz();
    let certificate = 4.0 * lip * lip / (mu * n as f64);
    if let Some(AnalyticForm::Quadratic { curvature }) = fam.analytic_form() {
        // 2c(w - mean) + lambda w = 0; the mean comes from the gradient at 0.
        // Clamping the unconstrained minimizer is exact in dimension 1.
        let c = curvature;
        let z_bar = -mean_grad(fam, &[0.0], s)[0] / (2.0 * c);
        let mut w = vec![2.0 * c * z_bar / (2.0 * c + lambda)];
        body.project(&mut w);
        return Ok(SolveResult {
            empirical_loss: mean_loss(fam, &w, s),
            stability_certificate: certificate,
            iterations: 0,
            w,
        });
    }
    let sigma = fam.smoothness();
    if !sigma.is_finite() {
        return Err(ConvexError::SmoothnessRequired);
    }
    let big_l = sigma + lambda;
    if big_l <= 0.0 {
        return Err(ConvexError::SmoothnessRequired);
    }
    let theta = {
        let (sl, sm) = (big_l.sqrt(), mu.min(big_l).sqrt());
        (sl - sm) / (sl + sm)
    };
    let inv_l = 1.0 / big_l;
    let mut w = vec![0.0; fam.dim()];
    body.project(&mut w);
    let mut y = w.clone();
    let mut iterations = 0u64;
    loop {
        let gw = reg_grad(fam, &w, s, lambda);
        let mut mapped: Vec<f64> = w.iter().zip(&gw).map(|(v, g)| v - inv_l * g).collect();
        body.project(&mut mapped);
        let residual = w
            .iter()
            .zip(&mapped)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            * big_l;
        if residual <= AGD_TOL {
            return Ok(SolveResult {
                empirical_loss: mean_loss(fam, &w, s),
                stability_certificate: certificate,
                iterations,
                w,
            });
        }
        if iterations >= AGD_CAP {
            return Err(ConvexError::NoConvergence { iterations });
        }
        let gy = reg_grad(fam, &y, s, lambda);
        let mut next: Vec<f64> = y.iter().zip(&gy).map(|(v, g)| v - inv_l * g).collect();
        body.project(&mut next);
        y = next
            .iter()
            .zip(&w)
            .map(|(a, b)| a + theta * (a - b))
            .collect();
        w = next;
        iterations += 1;
    }
}

/// Projected gradient descent over an explicit rate schedule:
/// `w <- proj(w - sum_i eta_{t,i} grad l(w, s_i))` at each step.
///
/// Certificate: `2 Lambda^2` times the schedule's largest per-example total
/// rate, valid for smooth convex losses whose per-step total rate stays
/// within `2 / sigma`; steps above that limit are rejected.
pub fn pgd<Z: Clone>(
    fam: &LossFamily<Z>,
    s: &Dataset<Z>,
    w0: &[f64],
    sched: &RateSchedule,
    body: &dyn ConvexBody,
) -> Result<SolveResult, ConvexError> {
    if sched.n() != s.len() {
        return Err(ConvexError::ScheduleMismatch {
            schedule_n: sched.n(),
            dataset_n: s.len(),
        });
    }
    if w0.len() != fam.dim() {
        return Err(ConvexError::DimensionMismatch {
            expected: fam.dim(),
            got: w0.len(),
        });
    }
    let sigma = fam.smoothness();
    if !sigma.is_finite() {
        return Err(ConvexError::SmoothnessRequired);
    }
    let limit = 2.0 / sigma;
    for (step, l1) in sched.per_step_l1().into_iter().enumerate() {
        if l1 > limit {
            return Err(ConvexError::RateHypothesisViolated {
                step,
                observed: l1,
                limit,
            });
        }
    }
    let mut w = w0.to_vec();
    body.project(&mut w);
    for step in sched.steps() {
        let mut update = vec![0.0; w.len()];
        for &(i, eta) in step {
            for (u, g) in update.iter_mut().zip(fam.gradient(&w, &s.elems()[i])) {
                *u += eta * g;
            }
        }
        for (wv, u) in w.iter_mut().zip(&update) {
            *wv -= u;
        }
        body.project(&mut w);
    }
    let lip = fam.lipschitz();
    Ok(SolveResult {
        empirical_loss: mean_loss(fam, &w, s),
        stability_certificate: 2.0 * lip * lip * sched.one_inf_norm(),
        iterations: sched.len() as u64,
        w,
    })
}

/// Certificate that holds off a low-probability schedule event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighProbCertificate {
    /// Column-sum bound exceeded with probability at most `beta`.
    pub zeta: f64,
    /// Value-stability bound `2 Lambda^2 zeta` on the complement event.
    pub gamma: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsgdOutcome {
    pub result: SolveResult,
    /// The realized schedule; `result.stability_certificate` is computed
    /// from it, not from a distributional bound.
    pub schedule: RateSchedule,
    /// Present for resampled schedules when a tail level was requested:
    /// a certificate independent of the realized draws.
    pub high_prob: Option<HighProbCertificate>,
}

/// Projected stochastic gradient descent: builds a seeded schedule of the
/// requested kind, runs [`pgd`] over it, and (for resampled schedules, given
/// a tail level `beta`) attaches the occupancy-tail certificate from
/// [`replacement_rate_tail`].
#[allow(clippy::too_many_arguments)]
pub fn psgd<Z: Clone>(
    fam: &LossFamily<Z>,
    s: &Dataset<Z>,
    w0: &[f64],
    body: &dyn ConvexBody,
    kind: ScheduleKind,
    steps: usize,
    k: usize,
    eta: f64,
    seed: u64,
    beta: Option<f64>,
) -> Result<PsgdOutcome, ConvexError> {
    let schedule = make_schedule(kind, s.len(), steps, k, eta, seed)?;
    let result = pgd(fam, s, w0, &schedule, body)?;
    let high_prob = match (kind, beta) {
        (ScheduleKind::WithReplacement, Some(b)) => {
            let tail = replacement_rate_tail(steps as u64, k, s.len(), eta, b)?;
            let lip = fam.lipschitz();
            Some(HighProbCertificate {
                zeta: tail.zeta,
                gamma: 2.0 * lip * lip * tail.zeta,
                beta: b,
            })
        }
        _ => None,
    };
    Ok(PsgdOutcome {
        result,
        schedule,
        high_prob,
    })
}

/// Step budget and rate for full-batch descent on a sigma-smooth loss:
/// `T = floor(sigma sqrt(n) / ln n)` steps at `eta = 1/sigma`. The resulting
/// full-GD schedule norm is `T eta / n <= 1 / (sqrt(n) ln n)`, so the
/// certificate decays even though the budget grows with `n`.
pub fn smooth_gd_plan(sigma: f64, n: usize) -> Result<(u64, f64), ConvexError> {
    if n < 2 {
        return Err(ConvexError::TooFewSamples { n, min: 2 });
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(ConvexError::SmoothnessRequired);
    }
    let nf = n as f64;
    // The epsilon keeps whole-number budgets from rounding down.
    let t = (sigma * nf.sqrt() / nf.ln() + 1e-9).floor();
    Ok((t as u64, 1.0 / sigma))
}

/// One-example-per-step resampled SGD budget: `T = n` steps at
/// `eta = 1 / sqrt(T)`.
pub fn resample_sgd_plan(n: usize) -> Result<(u64, f64), ConvexError> {
    if n == 0 {
        return Err(ConvexError::TooFewSamples { n, min: 1 });
    }
    Ok((n as u64, 1.0 / (n as f64).sqrt()))
}
