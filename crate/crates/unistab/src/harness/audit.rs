//! Randomized property audits behind the CLI: exhaustive verification of
//! the adaptive clamp's guarantees on small instances, and neighbor-pair
//! stability checks of the trained solver.

use std::fmt::{self, Write as _};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::fmt_g17;
use crate::convexopt::{reg_erm, EuclideanBall, LossFamily};
use crate::core::{
    count_function, exhaustive_stability, for_each_dataset, unbias, DataDependentFunction,
    ExpectationOracle, FiniteDistribution,
};
use crate::harness::config::LambdaRule;
use crate::harness::experiment::mean_erm_problem;
use crate::harness::report::ReportFormat;
use crate::harness::HarnessError;
use crate::reduction::{adaptive_clamp, ClampSpec};
use crate::rng::{stream, substream};

/// Aggregate outcome of clamping randomly generated small instances and
/// checking every guarantee by exhaustive enumeration. Excess values are
/// signed observed-minus-allowed gaps; negative means comfortable margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampAuditReport {
    pub instances: usize,
    pub seed: u64,
    /// Largest |mean over query points of the clamped function|, over
    /// every dataset of every instance.
    pub max_mean_abs: f64,
    /// Largest |shift| minus the window half-width.
    pub max_shift_excess: f64,
    /// Largest exhaustively observed stability minus the declared constant.
    pub max_stability_excess: f64,
    /// Largest mean clamp error minus four times the tail-mass budget.
    pub max_error_excess: f64,
    pub violations: usize,
}

pub const CLAMP_AUDIT_HEADER: &str =
    "instances,seed,max_mean_abs,max_shift_excess,max_stability_excess,max_error_excess,violations";

impl ClampAuditReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{CLAMP_AUDIT_HEADER}\n{},{},{},{},{},{},{}\n",
            self.instances,
            self.seed,
            fmt_g17(self.max_mean_abs),
            fmt_g17(self.max_shift_excess),
            fmt_g17(self.max_stability_excess),
            fmt_g17(self.max_error_excess),
            self.violations
        )
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => self.to_json(),
        }
    }
}

struct ClampInstance {
    p: FiniteDistribution<i64>,
    n: usize,
    k: DataDependentFunction<i64>,
}

fn random_probs(q: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..q).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Product-form instance `K(s, z) = a (g(z) - E g) (mean_i h(s_i) - E h)`:
/// unbiased for every dataset, with exactly computable range and stability.
fn product_instance(q: usize, n: usize, rng: &mut impl Rng) -> ClampInstance {
    let probs = random_probs(q, rng);
    let p = FiniteDistribution::new((0..q as i64).collect(), probs).expect("valid distribution");
    let mut g: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
    g[0] = rng.random_range(0.6..1.0);
    g[1] = rng.random_range(-1.0..-0.6);
    let mut h: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
    let spread = h.iter().cloned().fold(f64::MIN, f64::max)
        - h.iter().cloned().fold(f64::MAX, f64::min);
    if spread < 0.2 {
        h[0] += 0.5;
    }
    let a = rng.random_range(0.2..1.0);
    let eg = p.expectation(|z| g[*z as usize]);
    let eh = p.expectation(|z| h[*z as usize]);
    let bg = g.iter().map(|v| (v - eg).abs()).fold(0.0, f64::max);
    let bh = h.iter().map(|v| (v - eh).abs()).fold(0.0, f64::max);
    let h_span = h.iter().cloned().fold(f64::MIN, f64::max)
        - h.iter().cloned().fold(f64::MAX, f64::min);
    let r0 = a * bg * bh;
    let gamma = a * bg * h_span / n as f64;
    let k = DataDependentFunction::new((-r0, r0), gamma, move |s, z: &i64| {
        let centered: f64 = s.elems().iter().map(|e| h[*e as usize] - eh).sum::<f64>()
            / s.len() as f64;
        a * (g[*z as usize] - eg) * centered
    })
    .expect("valid instance")
    .with_unbiased_flag(true);
    ClampInstance { p, n, k }
}

/// Centered occurrence-count instance via [`count_function`] and [`unbias`].
fn count_instance(q: usize, n: usize, rng: &mut impl Rng) -> ClampInstance {
    let probs = random_probs(q, rng);
    let p = FiniteDistribution::new((0..q as i64).collect(), probs).expect("valid distribution");
    let gamma = rng.random_range(0.05..0.3);
    let base = count_function::<i64>(gamma, n).expect("valid count function");
    let k = unbias(&base, &p);
    ClampInstance { p, n, k }
}

/// Run `instances` randomly generated clamp instances, checking by
/// exhaustive enumeration that the clamped function stays mean-zero on
/// every dataset, that shifts stay inside the window, that stability is
/// preserved, and that the mean clamp error respects four times the
/// exactly computed tail-mass budget.
pub fn run_clamp_audit(instances: usize, seed: u64) -> Result<ClampAuditReport, HarnessError> {
    if instances == 0 {
        return Err(HarnessError::BadConfig {
            reason: "at least one audit instance is required".into(),
        });
    }
    let mut report = ClampAuditReport {
        instances,
        seed,
        max_mean_abs: 0.0,
        max_shift_excess: f64::NEG_INFINITY,
        max_stability_excess: f64::NEG_INFINITY,
        max_error_excess: f64::NEG_INFINITY,
        violations: 0,
    };
    for i in 0..instances {
        let mut rng = stream(seed, i as u64);
        let q = rng.random_range(2..=3);
        let n = rng.random_range(2..=3);
        let inst = if i % 2 == 0 {
            product_instance(q, n, &mut rng)
        } else {
            count_instance(q, n, &mut rng)
        };
        let (lo, hi) = inst.k.range();
        let r0 = lo.abs().max(hi.abs());
        let width = rng.random_range(0.3..1.2) * r0;

        // Exact one-sided tail masses define the error budget.
        let mut tail_plus = 0.0;
        let mut tail_minus = 0.0;
        for_each_dataset(&inst.p, inst.n, |s, ps| {
            tail_plus += ps
                * inst
                    .p
                    .expectation(|z| (inst.k.evaluate(s, z) - width).max(0.0));
            tail_minus += ps
                * inst
                    .p
                    .expectation(|z| (-width - inst.k.evaluate(s, z)).max(0.0));
        })?;
        let beta = tail_plus.max(tail_minus).max(1e-15);

        let spec = ClampSpec {
            width,
            budget: beta,
        };
        let clamp = adaptive_clamp(&inst.k, &inst.p, spec, inst.n, &ExpectationOracle::Exhaustive)?;

        let mut mean_abs: f64 = 0.0;
        let mut shift_excess = f64::NEG_INFINITY;
        let mut shift_failure = None;
        for_each_dataset(&inst.p, inst.n, |s, _| {
            let mean = inst.p.expectation(|z| clamp.clamped.evaluate(s, z));
            mean_abs = mean_abs.max(mean.abs());
            match clamp.shifts.shift(s) {
                Ok(b) => shift_excess = shift_excess.max(b.abs() - width),
                Err(e) => shift_failure = Some(e),
            }
        })?;
        if let Some(e) = shift_failure {
            return Err(e.into());
        }
        let observed = exhaustive_stability(&clamp.clamped, &inst.p, inst.n)?;
        let stability_excess = observed - clamp.clamped.stability();
        let error_excess = clamp.clamp_error_mean.value - 4.0 * beta;

        report.max_mean_abs = report.max_mean_abs.max(mean_abs);
        report.max_shift_excess = report.max_shift_excess.max(shift_excess);
        report.max_stability_excess = report.max_stability_excess.max(stability_excess);
        report.max_error_excess = report.max_error_excess.max(error_excess);
        if mean_abs > 1e-9
            || shift_excess > 1e-12
            || stability_excess > 1e-9
            || error_excess > 1e-9
        {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// One sample size of the solver stability audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverAuditRow {
    pub n: usize,
    pub pairs: usize,
    /// Certificate the observed deviations are held against.
    pub declared: f64,
    /// Largest loss deviation across neighbor pairs and query points.
    pub observed: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverAuditReport {
    pub rows: Vec<SolverAuditRow>,
    pub seed: u64,
}

pub const SOLVER_AUDIT_HEADER: &str = "n,pairs,declared,observed,violation";

impl SolverAuditReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| !r.violation)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SOLVER_AUDIT_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.n,
                r.pairs,
                fmt_g17(r.declared),
                fmt_g17(r.observed),
                r.violation
            )
            .expect("write to string");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => self.to_json(),
        }
    }
}

impl fmt::Display for SolverAuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            writeln!(
                f,
                "n={}: observed {:.3e} vs declared {:.3e} over {} pairs{}",
                r.n,
                r.observed,
                r.declared,
                r.pairs,
                if r.violation { " VIOLATION" } else { "" }
            )?;
        }
        Ok(())
    }
}

/// Neighbor-pair stability audit of the regularized solver on the mean
/// estimation problem. For each sample size, `pairs` random (dataset,
/// neighbor) pairs are solved and the trained losses compared at every
/// support point against the certificate (or `declared_override`).
pub fn run_solver_audit(
    n_list: &[usize],
    pairs: usize,
    seed: u64,
    lambda: LambdaRule,
    declared_override: Option<f64>,
) -> Result<SolverAuditReport, HarnessError> {
    if n_list.is_empty() {
        return Err(HarnessError::BadConfig {
            reason: "at least one sample size is required".into(),
        });
    }
    if pairs == 0 {
        return Err(HarnessError::BadConfig {
            reason: "at least one neighbor pair is required".into(),
        });
    }
    let problem = mean_erm_problem();
    let fam = LossFamily::quadratic_1d();
    let ball = EuclideanBall::unit();
    let lip = fam.lipschitz();
    let mut rows = Vec::new();
    for (n_index, &n) in n_list.iter().enumerate() {
        if n == 0 {
            return Err(HarnessError::BadConfig {
                reason: "sample sizes must be positive".into(),
            });
        }
        let lam = lambda.lambda(n);
        let declared = declared_override
            .unwrap_or(4.0 * lip * lip / ((lam + fam.strong_convexity()) * n as f64));
        let mut observed: f64 = 0.0;
        for t in 0..pairs {
            let mut rng = substream(seed, n_index as u64, t as u64);
            let s = problem.dist.sample_dataset(n, &mut rng)?;
            let i = rng.random_range(0..n);
            let replacement = *problem.dist.sample(&mut rng);
            let neighbor = s.replace(i, replacement)?;
            let w = reg_erm(&fam, &s, lam, &ball)?.w;
            let wn = reg_erm(&fam, &neighbor, lam, &ball)?.w;
            for z in problem.dist.support() {
                let d = (fam.evaluate(&w, z) - fam.evaluate(&wn, z)).abs();
                observed = observed.max(d);
            }
        }
        rows.push(SolverAuditRow {
            n,
            pairs,
            declared,
            observed,
            violation: observed > declared + 1e-9,
        });
    }
    Ok(SolverAuditReport { rows, seed })
}
