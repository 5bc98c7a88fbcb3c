//! Monte Carlo tail and excess-loss experiments over seeded problem
//! instances.
//!
//! Trial `j` at the `i`-th sample size always runs on the random stream
//! keyed by `(master seed, i, j)`, and per-size results are collected in
//! trial order, so reports do not depend on how trials are scheduled.

use rand::Rng;
use rayon::prelude::*;

use crate::bounds::{be02_bound, fv18_bound, main_bound, BoundParams};
use crate::convexopt::{
    excess_loss, make_schedule, mean_loss, pgd, psgd, reg_erm, replacement_rate_tail,
    resample_sgd_plan, smooth_gd_plan, EuclideanBall, LossFamily, ScheduleKind,
};
use crate::core::{Dataset, FiniteDistribution};
use crate::harness::config::{ExperimentConfig, LambdaRule, ProblemKind, SolverKind};
use crate::harness::report::{ExcessReport, ExcessRow, TailReport, TailRow};
use crate::harness::HarnessError;
use crate::rng::substream;

/// Sampling distribution plus the analytic facts experiments rely on.
#[derive(Debug, Clone)]
pub struct Problem {
    pub dist: FiniteDistribution<f64>,
    /// Population mean of the sampling distribution.
    pub mean: f64,
}

/// Mean estimation over 21 evenly spaced points on [-0.6, 1.0]; the
/// population mean is 0.2 and sits inside the unit-ball constraint.
pub fn mean_erm_problem() -> Problem {
    let support: Vec<f64> = (0..21).map(|j| 0.08 * j as f64 - 0.6).collect();
    let dist = FiniteDistribution::uniform(support).expect("nonempty support");
    let mean = dist.expectation(|z| *z);
    Problem { dist, mean }
}

/// Same sampling distribution, but trials evaluate a fixed function of the
/// query point, so the estimation error is pure sampling error.
pub fn constant_problem() -> Problem {
    mean_erm_problem()
}

fn constant_output(z: f64) -> f64 {
    (z + 1.0) / 2.0
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))
}

fn solve_weights(
    fam: &LossFamily<f64>,
    ball: &EuclideanBall,
    solver: SolverKind,
    lambda: LambdaRule,
    s: &Dataset<f64>,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, HarnessError> {
    let n = s.len();
    match solver {
        SolverKind::RegErm => Ok(reg_erm(fam, s, lambda.lambda(n), ball)?.w),
        SolverKind::SmoothGd => {
            let (t, eta) = smooth_gd_plan(fam.smoothness(), n)?;
            let sched = make_schedule(ScheduleKind::FullGd, n, t as usize, 1, eta, 0)?;
            Ok(pgd(fam, s, &[0.0], &sched, ball)?.w)
        }
        SolverKind::ResampleSgd => {
            let (t, eta) = resample_sgd_plan(n)?;
            let schedule_seed: u64 = rng.random();
            let out = psgd(
                fam,
                s,
                &[0.0],
                ball,
                ScheduleKind::WithReplacement,
                t as usize,
                1,
                eta,
                schedule_seed,
                None,
            )?;
            Ok(out.result.w)
        }
    }
}

fn tail_trial(
    cfg: &ExperimentConfig,
    problem: &Problem,
    fam: &LossFamily<f64>,
    ball: &EuclideanBall,
    n: usize,
    n_index: u64,
    j: u64,
) -> Result<f64, HarnessError> {
    let mut rng = substream(cfg.seed, n_index, j);
    let s = problem.dist.sample_dataset(n, &mut rng)?;
    match cfg.problem {
        ProblemKind::Constant => {
            let truth = problem.dist.expectation(|&z| constant_output(z));
            let emp = s.elems().iter().map(|&z| constant_output(z)).sum::<f64>() / n as f64;
            Ok((truth - emp).abs())
        }
        ProblemKind::MeanErm => {
            let w = solve_weights(fam, ball, cfg.solver, cfg.lambda, &s, &mut rng)?;
            let truth = problem.dist.expectation(|z| fam.evaluate(&w, z));
            Ok((truth - mean_loss(fam, &w, &s)).abs())
        }
    }
}

/// Stability constant attached to the (problem, solver) pair at sample size
/// `n`, used for the report's bound columns.
///
/// The resampled-SGD constant is the occupancy-tail certificate at level
/// `delta`, which itself fails on a schedule event of probability at most
/// `delta`; tail rows for that solver are nominally at level `2 delta`.
pub fn solver_gamma(
    problem: ProblemKind,
    solver: SolverKind,
    lambda: LambdaRule,
    n: usize,
    delta: f64,
) -> Result<f64, HarnessError> {
    if problem == ProblemKind::Constant {
        return Ok(0.0);
    }
    let fam = LossFamily::quadratic_1d();
    let lip = fam.lipschitz();
    match solver {
        SolverKind::RegErm => {
            let lambda = lambda.lambda(n);
            Ok(4.0 * lip * lip / ((lambda + fam.strong_convexity()) * n as f64))
        }
        SolverKind::SmoothGd => {
            let (t, eta) = smooth_gd_plan(fam.smoothness(), n)?;
            Ok(2.0 * lip * lip * t as f64 * eta / n as f64)
        }
        SolverKind::ResampleSgd => {
            let (t, eta) = resample_sgd_plan(n)?;
            let tail = replacement_rate_tail(t, 1, n, eta, delta)?;
            Ok(2.0 * lip * lip * tail.zeta)
        }
    }
}

/// Order statistic at 1-indexed position `ceil((1 - delta) m)`, a
/// conservative upper quantile. `sorted` must be ascending and nonempty.
pub fn empirical_quantile(sorted: &[f64], delta: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let m = sorted.len();
    // The epsilon keeps exact products like 0.99 * 2000 from ceiling up.
    let idx = (((1.0 - delta) * m as f64) - 1e-9).ceil() as isize;
    sorted[idx.clamp(1, m as isize) as usize - 1]
}

/// Estimation-error tail experiment: per sample size, `cfg.trials`
/// independent draws of dataset and solver output, reduced to upper
/// quantiles and compared against the closed-form bounds at the solver's
/// certificate.
pub fn run_tail_experiment(cfg: &ExperimentConfig) -> Result<TailReport, HarnessError> {
    cfg.validate()?;
    let problem = match cfg.problem {
        ProblemKind::MeanErm => mean_erm_problem(),
        ProblemKind::Constant => constant_problem(),
    };
    let fam = LossFamily::quadratic_1d();
    let ball = EuclideanBall::unit();
    let pool = build_pool(cfg.workers)?;
    let mut rows = Vec::new();
    for (n_index, &n) in cfg.n.iter().enumerate() {
        let errors: Result<Vec<f64>, HarnessError> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|j| tail_trial(cfg, &problem, &fam, &ball, n, n_index as u64, j as u64))
                .collect()
        });
        let mut sorted = errors?;
        sorted.sort_unstable_by(f64::total_cmp);
        for &delta in &cfg.delta {
            let gamma = solver_gamma(cfg.problem, cfg.solver, cfg.lambda, n, delta)?;
            let params = BoundParams::new(n as u128, gamma, delta)?;
            let main = main_bound(&params)?;
            rows.push(TailRow {
                n,
                delta,
                quantile: empirical_quantile(&sorted, delta),
                be02: be02_bound(&params)?.value,
                fv18: fv18_bound(&params)?.value,
                main: main.value,
                main_vacuous: main.vacuous,
                trials: cfg.trials,
                seed: cfg.seed,
            });
        }
    }
    Ok(TailReport { rows })
}

fn excess_trial(
    cfg: &ExperimentConfig,
    problem: &Problem,
    fam: &LossFamily<f64>,
    ball: &EuclideanBall,
    n: usize,
    n_index: u64,
    j: u64,
) -> Result<f64, HarnessError> {
    let mut rng = substream(cfg.seed, n_index, j);
    let s = problem.dist.sample_dataset(n, &mut rng)?;
    let w = solve_weights(fam, ball, cfg.solver, cfg.lambda, &s, &mut rng)?;
    Ok(excess_loss(fam, &w, &[problem.mean])?)
}

fn reference_curve(n: usize, delta: f64) -> f64 {
    (n as f64 / delta).ln() / (n as f64).sqrt()
}

fn excess_rows(problem: &Problem, cfg: &ExperimentConfig) -> Result<ExcessReport, HarnessError> {
    let fam = LossFamily::quadratic_1d();
    let ball = EuclideanBall::unit();
    let pool = build_pool(cfg.workers)?;
    let mut quantiles = vec![vec![0.0; cfg.delta.len()]; cfg.n.len()];
    for (n_index, &n) in cfg.n.iter().enumerate() {
        let values: Result<Vec<f64>, HarnessError> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|j| excess_trial(cfg, problem, &fam, &ball, n, n_index as u64, j as u64))
                .collect()
        });
        let mut sorted = values?;
        sorted.sort_unstable_by(f64::total_cmp);
        for (d_index, &delta) in cfg.delta.iter().enumerate() {
            quantiles[n_index][d_index] = empirical_quantile(&sorted, delta);
        }
    }
    // One constant per tail level, least squares through the origin
    // against the reference curve across sample sizes.
    let fits: Vec<f64> = (0..cfg.delta.len())
        .map(|d_index| {
            let mut num = 0.0;
            let mut den = 0.0;
            for (n_index, &n) in cfg.n.iter().enumerate() {
                let r = reference_curve(n, cfg.delta[d_index]);
                num += quantiles[n_index][d_index] * r;
                den += r * r;
            }
            num / den
        })
        .collect();
    let mut rows = Vec::new();
    for (n_index, &n) in cfg.n.iter().enumerate() {
        for (d_index, &delta) in cfg.delta.iter().enumerate() {
            rows.push(ExcessRow {
                n,
                delta,
                quantile: quantiles[n_index][d_index],
                reference: reference_curve(n, delta),
                fitted_c: fits[d_index],
                trials: cfg.trials,
                seed: cfg.seed,
            });
        }
    }
    Ok(ExcessReport { rows })
}

/// Excess-loss experiment: upper quantiles of the trained solution's
/// population suboptimality, against `c ln(n/delta)/sqrt(n)` reference
/// curves. Requires a problem with an analytic excess loss.
pub fn run_excess_experiment(cfg: &ExperimentConfig) -> Result<ExcessReport, HarnessError> {
    cfg.validate()?;
    match cfg.problem {
        ProblemKind::Constant => Err(HarnessError::ExcessUnsupported {
            problem: cfg.problem.to_string(),
        }),
        ProblemKind::MeanErm => excess_rows(&mean_erm_problem(), cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_erm_problem_facts() {
        let p = mean_erm_problem();
        assert_eq!(p.dist.support().len(), 21);
        assert_relative_eq!(p.dist.support()[0], -0.6, max_relative = 1e-15);
        assert_relative_eq!(p.dist.support()[20], 1.0, max_relative = 1e-15);
        assert_relative_eq!(p.mean, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn quantile_convention() {
        let sorted: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(empirical_quantile(&sorted, 0.05), 1.0);
        assert_eq!(empirical_quantile(&sorted, 0.5), 0.5);
        assert_eq!(empirical_quantile(&sorted, 0.95), 0.1);
        assert_eq!(empirical_quantile(&sorted, 0.999), 0.1);
        assert_eq!(empirical_quantile(&[2.5], 0.01), 2.5);
    }

    #[test]
    fn constant_problem_matches_direct_simulation() {
        let cfg = ExperimentConfig {
            problem: ProblemKind::Constant,
            n: vec![16],
            trials: 40,
            delta: vec![0.25, 0.1],
            seed: 5,
            workers: 2,
            ..ExperimentConfig::default()
        };
        let report = run_tail_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);

        let problem = constant_problem();
        let truth = problem.dist.expectation(|&z| constant_output(z));
        let mut manual: Vec<f64> = (0..40u64)
            .map(|j| {
                let mut rng = substream(5, 0, j);
                let s = problem.dist.sample_dataset(16, &mut rng).unwrap();
                let emp =
                    s.elems().iter().map(|&z| constant_output(z)).sum::<f64>() / 16.0;
                (truth - emp).abs()
            })
            .collect();
        manual.sort_unstable_by(f64::total_cmp);
        assert_eq!(report.rows[0].quantile, empirical_quantile(&manual, 0.25));
        assert_eq!(report.rows[1].quantile, empirical_quantile(&manual, 0.1));
        // Smaller tail level, larger (or equal) quantile.
        assert!(report.rows[1].quantile >= report.rows[0].quantile);
        // Zero stability: the bound column reduces to the sampling term.
        let zero = BoundParams::new(16, 0.0, 0.1).unwrap();
        assert_eq!(report.rows[1].main, main_bound(&zero).unwrap().value);
    }

    #[test]
    fn tail_report_is_identical_across_worker_counts() {
        let base = ExperimentConfig {
            problem: ProblemKind::MeanErm,
            n: vec![32],
            trials: 60,
            delta: vec![0.1],
            seed: 11,
            ..ExperimentConfig::default()
        };
        let one = run_tail_experiment(&ExperimentConfig {
            workers: 1,
            ..base.clone()
        })
        .unwrap();
        let four = run_tail_experiment(&ExperimentConfig {
            workers: 4,
            ..base
        })
        .unwrap();
        assert_eq!(one.to_csv(), four.to_csv());
    }

    #[test]
    fn every_solver_produces_rows() {
        for solver in [
            SolverKind::RegErm,
            SolverKind::SmoothGd,
            SolverKind::ResampleSgd,
        ] {
            let cfg = ExperimentConfig {
                problem: ProblemKind::MeanErm,
                n: vec![100],
                trials: 5,
                delta: vec![0.01],
                seed: 3,
                solver,
                ..ExperimentConfig::default()
            };
            let report = run_tail_experiment(&cfg).unwrap();
            assert_eq!(report.rows.len(), 1);
            let row = &report.rows[0];
            assert!(row.quantile.is_finite() && row.quantile >= 0.0);
            assert!(row.main.is_finite());
        }
    }

    #[test]
    fn solver_gamma_formulas() {
        let g = solver_gamma(
            ProblemKind::MeanErm,
            SolverKind::RegErm,
            LambdaRule::LogNOverSqrtN,
            100,
            0.01,
        )
        .unwrap();
        let lambda = 100f64.ln() / 10.0;
        assert_relative_eq!(g, 4.0 / ((lambda + 0.5) * 100.0), max_relative = 1e-15);

        // Step budget floor(0.5 * 10 / ln 100) = 1 at rate 2.
        let g = solver_gamma(
            ProblemKind::MeanErm,
            SolverKind::SmoothGd,
            LambdaRule::LogNOverSqrtN,
            100,
            0.01,
        )
        .unwrap();
        assert_relative_eq!(g, 0.04, max_relative = 1e-12);

        // Occupancy tail at (T=100, k=1, n=100, eta=0.1, beta=0.01).
        let g = solver_gamma(
            ProblemKind::MeanErm,
            SolverKind::ResampleSgd,
            LambdaRule::LogNOverSqrtN,
            100,
            0.01,
        )
        .unwrap();
        assert_relative_eq!(g, 1.4, max_relative = 1e-12);

        let g = solver_gamma(
            ProblemKind::Constant,
            SolverKind::ResampleSgd,
            LambdaRule::LogNOverSqrtN,
            100,
            0.01,
        )
        .unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn point_mass_excess_is_the_regularization_bias() {
        let problem = Problem {
            dist: FiniteDistribution::point_mass(0.2),
            mean: 0.2,
        };
        let cfg = ExperimentConfig {
            problem: ProblemKind::MeanErm,
            n: vec![16],
            trials: 12,
            delta: vec![0.3, 0.1],
            seed: 2,
            lambda: LambdaRule::Fixed(0.5),
            ..ExperimentConfig::default()
        };
        let report = excess_rows(&problem, &cfg).unwrap();
        // w = 0.5 * 0.2 / (0.5 + 0.5) = 0.1, so the excess is fixed at
        // 0.25 * (0.1 - 0.2)^2 regardless of the draw or the level.
        for row in &report.rows {
            assert_relative_eq!(row.quantile, 0.0025, max_relative = 1e-12);
        }
    }

    #[test]
    fn excess_quantile_grows_with_lambda() {
        let run = |lambda: f64| {
            let cfg = ExperimentConfig {
                problem: ProblemKind::MeanErm,
                n: vec![64],
                trials: 30,
                delta: vec![0.1],
                seed: 8,
                lambda: LambdaRule::Fixed(lambda),
                ..ExperimentConfig::default()
            };
            run_excess_experiment(&cfg).unwrap().rows[0].quantile
        };
        assert!(run(2.0) > run(0.2));
    }

    #[test]
    fn excess_quantile_falls_as_n_grows() {
        let cfg = ExperimentConfig {
            problem: ProblemKind::MeanErm,
            n: vec![64, 256],
            trials: 300,
            delta: vec![0.1],
            seed: 17,
            workers: 4,
            ..ExperimentConfig::default()
        };
        let report = run_excess_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        let (small, large) = (&report.rows[0], &report.rows[1]);
        assert!(large.quantile < small.quantile);
        assert_eq!(small.fitted_c, large.fitted_c);
        assert!(small.fitted_c > 0.0);
        assert_relative_eq!(
            small.reference,
            (64f64 / 0.1).ln() / 8.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn excess_needs_an_analytic_problem() {
        let cfg = ExperimentConfig {
            problem: ProblemKind::Constant,
            ..ExperimentConfig::default()
        };
        assert!(matches!(
            run_excess_experiment(&cfg),
            Err(HarnessError::ExcessUnsupported { .. })
        ));
    }
}
