//! One test per shipping criterion. Each prints a single
//! `acceptance <k>: PASS|FAIL - <what>` line; run with `--nocapture` to see
//! the lines for passing tests too.

use std::panic::{catch_unwind, resume_unwind, UnwindSafe};

use approx::assert_relative_eq;
use rand::Rng;

use unistab::bounds::{
    be02_bound, fv18_bound, inductive_bound, main_bound, mcdiarmid_tail, moment_bounds,
    regime_threshold, thm_large_bound, thm_small_bound, BoundParams, BoundValue,
};
use unistab::convexopt::{
    make_schedule, mean_loss, moreau_smooth, pgd, reg_erm, replacement_rate_tail, smooth_gd_plan,
    EuclideanBall, LossFamily, ScheduleKind,
};
use unistab::core::{
    count_function, exhaustive_stability, for_each_dataset, loo_error, unbias,
    DataDependentFunction, Dataset, ExpectationOracle, FiniteDistribution,
};
use unistab::dp::{
    dp_ratio_audit, exp_mech_majority, expected_loss_function, DpPredictor, LabeledExample,
};
use unistab::harness::{
    mean_erm_problem, run_clamp_audit, run_tail_experiment, ExperimentConfig, LambdaRule,
    ProblemKind, ReportFormat, SolverKind,
};
use unistab::reduction::{
    adaptive_clamp, block_loo, overlapping_block_loo, range_reduce, ClampSpec,
};
use unistab::rng::{stream, substream};

fn criterion(k: u32, what: &str, body: impl FnOnce() + UnwindSafe) {
    match catch_unwind(body) {
        Ok(()) => println!("acceptance {k}: PASS - {what}"),
        Err(cause) => {
            println!("acceptance {k}: FAIL - {what}");
            resume_unwind(cause);
        }
    }
}

#[test]
fn c01_adaptive_clamp_suite() {
    criterion(1, "adaptive clamp keeps mean zero, shift in window, stability, error budget", || {
        let report = run_clamp_audit(200, 0).expect("audit should run");
        assert_eq!(report.instances, 200);
        assert_eq!(report.violations, 0, "{report:?}");
        assert!(report.max_mean_abs <= 1e-9);
        assert!(report.max_shift_excess <= 1e-12);
        assert!(report.max_stability_excess <= 1e-9);
        assert!(report.max_error_excess <= 1e-9);

        // Two-point instance: 2 w.p. 1/4, -2/3 w.p. 3/4. With width 1 the
        // window mean is x - 1/2 for shifts in [1/3, 1], so the centering
        // shift is 1/2 and the clamp sends 2 -> 3/2 and -2/3 -> -1/2.
        let p = FiniteDistribution::new(vec![0i64, 1], vec![0.25, 0.75]).unwrap();
        let k = DataDependentFunction::new((-2.0 / 3.0, 2.0), 0.0, |_: &Dataset<i64>, z: &i64| {
            if *z == 0 {
                2.0
            } else {
                -2.0 / 3.0
            }
        })
        .unwrap()
        .with_unbiased_flag(true);
        let spec = ClampSpec {
            width: 1.0,
            budget: 0.25,
        };
        let out = adaptive_clamp(&k, &p, spec, 2, &ExpectationOracle::Exhaustive).unwrap();
        let s = Dataset::new(vec![0i64, 1]).unwrap();
        let shift = out.shifts.shift(&s).unwrap();
        assert!((shift - 0.5).abs() <= 1e-9, "shift {shift}");
        let mean = p.expectation(|z| out.clamped.evaluate(&s, z));
        assert!(mean.abs() <= 1e-12, "clamped mean {mean}");
    });
}

#[test]
fn c02_block_identities() {
    criterion(2, "block averages reproduce the leave-one-out error", || {
        // Hand case: terms [0.1, -0.3, 0.2, 0.0] sum to zero.
        let l = DataDependentFunction::new((-0.3, 0.2), 1.0, |_: &Dataset<i64>, z: &i64| {
            match z {
                0 => 0.1,
                1 => -0.3,
                2 => 0.2,
                _ => 0.0,
            }
        })
        .unwrap()
        .with_unbiased_flag(true);
        let s = Dataset::new(vec![0i64, 1, 2, 3]).unwrap();
        let four = block_loo(&l, &s, &9, 4).unwrap();
        assert_eq!(four.per_block, vec![0.1, -0.3, 0.2, 0.0]);
        assert!(four.total.abs() <= 1e-12);
        let cyc = overlapping_block_loo(&l, &s, &9, 2).unwrap();
        assert!(cyc.total.abs() <= 1e-12);

        for t in 0..100u64 {
            let mut rng = stream(202, t);
            let m = rng.random_range(2..=5i64);
            let n = rng.random_range(2..=64usize);
            let p = FiniteDistribution::uniform((0..m).collect()).unwrap();
            let l = if t % 2 == 0 {
                let gamma = 0.02 + 0.3 * rng.random::<f64>();
                unbias(&count_function::<i64>(gamma, n).unwrap(), &p)
            } else {
                let table: Vec<f64> = (0..m).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
                let mean = table.iter().sum::<f64>() / m as f64;
                let centered: Vec<f64> = table.iter().map(|v| v - mean).collect();
                DataDependentFunction::new((-2.0, 2.0), 0.0, move |_: &Dataset<i64>, z: &i64| {
                    centered[*z as usize]
                })
                .unwrap()
                .with_unbiased_flag(true)
            };
            let s = p.sample_dataset(n, &mut rng).unwrap();
            let z = *p.sample(&mut rng);
            let plain = loo_error(&l, &s, &z).unwrap();
            for blocks in (1..=n).filter(|b| n % b == 0) {
                let split = block_loo(&l, &s, &z, blocks).unwrap();
                assert_eq!(split.per_block.len(), blocks);
                assert!((split.total - plain).abs() <= 1e-12);
            }
            for size in [1, rng.random_range(1..=n), n] {
                let cyc = overlapping_block_loo(&l, &s, &z, size).unwrap();
                assert_eq!(cyc.per_block.len(), n);
                assert!((cyc.total - plain).abs() <= 1e-12);
            }
        }
    });
}

#[test]
fn c03_range_reduction_reconstruction() {
    criterion(3, "centered + clamped + residual rebuilds the function exactly", || {
        let p = FiniteDistribution::uniform(vec![0i64, 1, 2]).unwrap();
        let l = DataDependentFunction::new((-1.0, 1.0), 0.05, |s: &Dataset<i64>, z: &i64| {
            let count = s.elems().iter().filter(|e| *e == z).count() as f64;
            0.05 * (count - s.len() as f64 / 3.0)
        })
        .unwrap()
        .with_unbiased_flag(true);
        let rr = range_reduce(&l, &p, 4, 0.1, &ExpectationOracle::Exhaustive).unwrap();
        assert_relative_eq!(rr.width, 0.19206455826398416, max_relative = 1e-12);
        assert_relative_eq!(rr.residual_budget, 8.0 * 0.01 / 16.0, max_relative = 1e-12);

        let mut seen = 0u32;
        for_each_dataset(&p, 4, |s, _| {
            seen += 1;
            for z in p.support() {
                let direct = l.evaluate(s, z);
                let rebuilt =
                    (rr.phi)(z) + rr.clamped.evaluate(s, z) + rr.residual.evaluate(s, z);
                assert!((direct - rebuilt).abs() <= 1e-12);
            }
        })
        .unwrap();
        assert_eq!(seen, 81);

        let mut residual_mean = 0.0;
        for_each_dataset(&p, 4, |s, wgt| {
            residual_mean += wgt * p.expectation(|z| rr.residual.evaluate(s, z).abs());
        })
        .unwrap();
        assert!(residual_mean <= rr.residual_budget, "residual mean {residual_mean}");
        assert_relative_eq!(residual_mean, rr.clamp_error_mean.value, max_relative = 1e-9);
    });
}

#[test]
fn c04_bound_formulas() {
    criterion(4, "closed-form bounds, homogeneity, large-n crossover", || {
        assert_relative_eq!(
            mcdiarmid_tail(100, 0.1, 0.5).unwrap(),
            0.6065306597126334,
            max_relative = 1e-9
        );
        let p = BoundParams::new(10_000, 0.01, 1e-3).unwrap();
        assert_relative_eq!(
            be02_bound(&p).unwrap().value,
            2.6545434937272505,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            fv18_bound(&p).unwrap().value,
            0.28910869733663125,
            max_relative = 1e-9
        );
        let pm = BoundParams::new(10_000, 1e-4, 0.01).unwrap();
        assert_relative_eq!(
            main_bound(&pm).unwrap().value,
            1.4880940927901567,
            max_relative = 1e-9
        );
        let p0 = BoundParams::new(100, 0.0, 0.01).unwrap();
        assert_relative_eq!(
            main_bound(&p0).unwrap().value,
            0.4895493661361633,
            max_relative = 1e-9
        );
        let inv_e = (-1.0f64).exp();
        let ps = BoundParams::new(4, 0.5, inv_e).unwrap();
        assert_relative_eq!(
            thm_large_bound(&ps).unwrap().value,
            82.54212933375474,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            regime_threshold(&ps),
            0.08091853389717853,
            max_relative = 1e-9
        );
        let pt = BoundParams::new(100, 1e-3, 0.01).unwrap();
        assert_relative_eq!(
            thm_small_bound(&pt).unwrap().value,
            2.5950644725769343,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            inductive_bound(1, inv_e).unwrap(),
            30.18070977791825,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            inductive_bound(2, inv_e).unwrap(),
            52.3614195558365,
            max_relative = 1e-9
        );
        let (first, second) = moment_bounds(0.1, 100).unwrap();
        assert_relative_eq!(first, 0.2, max_relative = 1e-12);
        assert_relative_eq!(second, 0.02, max_relative = 1e-12);

        // Degree-1 homogeneity: scaling stability and range together scales
        // every bound by the same factor.
        let base = BoundParams::new(10_000, 0.01, 1e-3).unwrap();
        let evals: [fn(&BoundParams) -> Result<BoundValue, _>; 5] = [
            be02_bound,
            fv18_bound,
            main_bound,
            thm_large_bound,
            thm_small_bound,
        ];
        for alpha in [0.5, 2.0, 10.0] {
            let scaled = BoundParams::new(10_000, 0.01 * alpha, 1e-3)
                .unwrap()
                .with_range(alpha)
                .unwrap();
            for eval in evals {
                let lhs = eval(&scaled).unwrap().value;
                let rhs = alpha * eval(&base).unwrap().value;
                assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
            }
        }

        let far = BoundParams::new(10u128.pow(24), 1e-12, 1e-3).unwrap();
        let main_far = main_bound(&far).unwrap().value;
        let fv_far = fv18_bound(&far).unwrap().value;
        assert_relative_eq!(main_far, 4.446954971184532e-07, max_relative = 1e-9);
        assert_relative_eq!(fv_far, 2.628263513139351e-06, max_relative = 1e-9);
        assert!(main_far < fv_far);
    });
}

#[test]
fn c05_certificate_audits() {
    criterion(5, "trained-loss shifts stay under the declared certificates", || {
        let problem = mean_erm_problem();
        // Declared modulus 0 forces the lambda-only certificate 4/(lambda n).
        let fam = LossFamily::quadratic_1d()
            .with_strong_convexity(0.0)
            .unwrap();
        let ball = EuclideanBall::unit();
        let n = 50usize;
        let lambda = 0.1;
        let erm_limit = 4.0 / (lambda * n as f64);
        let steps = 20usize;
        let eta = 1.0;
        let pgd_limit = 2.0 * steps as f64 * eta / n as f64;
        let sched = make_schedule(ScheduleKind::FullGd, n, steps, 1, eta, 0).unwrap();
        let loss_shift = |w: &[f64], v: &[f64]| {
            problem
                .dist
                .support()
                .iter()
                .map(|z| (fam.evaluate(w, z) - fam.evaluate(v, z)).abs())
                .fold(0.0f64, f64::max)
        };
        let mut worst_erm = 0.0f64;
        let mut worst_pgd = 0.0f64;
        for t in 0..1000u64 {
            let mut rng = stream(505, t);
            let s = problem.dist.sample_dataset(n, &mut rng).unwrap();
            let i = rng.random_range(0..n);
            let s2 = s.replace(i, *problem.dist.sample(&mut rng)).unwrap();
            let a = reg_erm(&fam, &s, lambda, &ball).unwrap();
            let b = reg_erm(&fam, &s2, lambda, &ball).unwrap();
            assert_relative_eq!(a.stability_certificate, erm_limit, max_relative = 1e-12);
            worst_erm = worst_erm.max(loss_shift(&a.w, &b.w));
            let c = pgd(&fam, &s, &[0.0], &sched, &ball).unwrap();
            let d = pgd(&fam, &s2, &[0.0], &sched, &ball).unwrap();
            assert_relative_eq!(c.stability_certificate, pgd_limit, max_relative = 1e-12);
            worst_pgd = worst_pgd.max(loss_shift(&c.w, &d.w));
        }
        assert!(worst_erm <= erm_limit + 1e-7, "erm shift {worst_erm}");
        assert!(worst_pgd <= pgd_limit + 1e-7, "pgd shift {worst_pgd}");

        // Smooth preset at n = 100: the planned budget certifies exactly
        // 2 / (sqrt(n) ln n) for a Lipschitz-1 family.
        let n2 = 100usize;
        let sigma = (n2 as f64).ln();
        let (t2, eta2) = smooth_gd_plan(sigma, n2).unwrap();
        let sched2 = make_schedule(ScheduleKind::FullGd, n2, t2 as usize, 1, eta2, 0).unwrap();
        let mut rng = stream(505, 9999);
        let s = problem.dist.sample_dataset(n2, &mut rng).unwrap();
        let run = pgd(&LossFamily::quadratic_1d(), &s, &[0.0], &sched2, &ball).unwrap();
        assert_relative_eq!(
            run.stability_certificate,
            2.0 / ((n2 as f64).sqrt() * (n2 as f64).ln()),
            max_relative = 1e-12
        );
    });
}

#[test]
fn c06_gd_convergence() {
    criterion(6, "full-batch descent lands within 2/(eta T) of the optimum", || {
        let problem = mean_erm_problem();
        let ball = EuclideanBall::unit();
        for t in 0..50u64 {
            let mut rng = stream(606, t);
            let c = 0.05 + 0.2 * rng.random::<f64>();
            let fam = LossFamily::quadratic_1d_with(c).unwrap();
            let sigma = fam.smoothness();
            let n = rng.random_range(4..=40usize);
            let s = problem.dist.sample_dataset(n, &mut rng).unwrap();
            let steps = rng.random_range(5..=60usize);
            let eta = (0.2 + 0.8 * rng.random::<f64>()) / sigma;
            let sched = make_schedule(ScheduleKind::FullGd, n, steps, 1, eta, 0).unwrap();
            let w0 = [2.0 * rng.random::<f64>() - 1.0];
            let run = pgd(&fam, &s, &w0, &sched, &ball).unwrap();
            let z_bar = s.elems().iter().sum::<f64>() / n as f64;
            let best = mean_loss(&fam, &[z_bar.clamp(-1.0, 1.0)], &s);
            let gap = run.empirical_loss - best;
            assert!(gap >= -1e-12);
            assert!(
                gap <= 2.0 / (eta * steps as f64) + 1e-6,
                "gap {gap} over budget at eta {eta}, T {steps}"
            );
        }
    });
}

#[test]
fn c07_mcdiarmid_empirical() {
    criterion(7, "Bernoulli-mean exceedance stays under the closed-form tail", || {
        let trials = 100_000u64;
        let n = 100u32;
        let ts = [0.05, 0.1, 0.2];
        // Thresholds in counts; all three t values give integral cutoffs.
        let cutoffs: Vec<u32> = ts
            .iter()
            .map(|t| (n as f64 / 2.0 + n as f64 * t).round() as u32)
            .collect();
        let mut exceed = [0u64; 3];
        for j in 0..trials {
            let mut rng = substream(707, 0, j);
            let count = (0..n).filter(|_| rng.random::<bool>()).count() as u32;
            for (slot, &cut) in exceed.iter_mut().zip(&cutoffs) {
                if count >= cut {
                    *slot += 1;
                }
            }
        }
        for (hits, &t) in exceed.iter().zip(&ts) {
            let bound = mcdiarmid_tail(n as u128, 1.0 / n as f64, t).unwrap();
            let freq = *hits as f64 / trials as f64;
            let se = (bound * (1.0 - bound) / trials as f64).sqrt();
            assert!(
                freq <= bound + 3.0 * se,
                "t {t}: frequency {freq} above bound {bound}"
            );
        }
    });
}

#[test]
fn c08_tail_scaling() {
    criterion(8, "0.99-quantile of the estimation error decays like n^-1/2", || {
        let cfg = ExperimentConfig {
            problem: ProblemKind::MeanErm,
            n: vec![100, 400, 1600, 6400],
            trials: 2000,
            delta: vec![0.01],
            seed: 808,
            solver: SolverKind::RegErm,
            lambda: LambdaRule::LogNOverSqrtN,
            workers: 8,
            out: None,
            format: ReportFormat::Csv,
        };
        let report = run_tail_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 4);
        for pair in report.rows.windows(2) {
            assert!(
                pair[1].quantile < pair[0].quantile,
                "quantile should fall with n: {:?}",
                report.rows
            );
        }
        let xs: Vec<f64> = report.rows.iter().map(|r| (r.n as f64).ln()).collect();
        let ys: Vec<f64> = report.rows.iter().map(|r| r.quantile.ln()).collect();
        let x_bar = xs.iter().sum::<f64>() / xs.len() as f64;
        let y_bar = ys.iter().sum::<f64>() / ys.len() as f64;
        let cov = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - x_bar) * (y - y_bar))
            .sum::<f64>();
        let var = xs.iter().map(|x| (x - x_bar) * (x - x_bar)).sum::<f64>();
        let alpha = -(cov / var);
        assert!(
            (0.40..=0.60).contains(&alpha),
            "decay exponent {alpha} outside [0.40, 0.60]; quantiles {:?}",
            report.rows.iter().map(|r| r.quantile).collect::<Vec<_>>()
        );
    });
}

#[test]
fn c09_replacement_rate_tail() {
    criterion(9, "occupancy tail is exact and rarely exceeded by real draws", || {
        let tail = replacement_rate_tail(100, 1, 100, 0.1, 0.01).unwrap();
        assert_eq!(tail.occupancy, 7);
        assert_eq!(tail.zeta, 0.1 * 7.0);
        assert!((tail.zeta - 0.7).abs() < 1e-15);

        let draws = 10_000u64;
        let mut hits = 0u64;
        for j in 0..draws {
            let sched =
                make_schedule(ScheduleKind::WithReplacement, 100, 100, 1, 0.1, j).unwrap();
            let max_col = sched.column_sums().into_iter().fold(0.0f64, f64::max);
            if max_col > tail.zeta {
                hits += 1;
            }
        }
        let freq = hits as f64 / draws as f64;
        let se = (0.01f64 * 0.99 / draws as f64).sqrt();
        assert!(freq <= 0.01 + 3.0 * se, "exceedance frequency {freq}");
    });
}

#[test]
fn c10_moreau_envelope() {
    criterion(10, "envelope hits Huber values, the exact sup-gap, and the smoothness cap", || {
        let sigma = 2.0;
        let h = moreau_smooth(|v| v.abs(), 1.0, sigma).unwrap();
        assert!(h.eval(0.0).abs() <= 1e-9);
        assert!((h.eval(1.0) - 0.75).abs() <= 1e-9);

        let mut sup_gap = f64::NEG_INFINITY;
        for j in -2000..=2000i32 {
            let w = j as f64 * 1e-3;
            sup_gap = sup_gap.max(h.original(w) - h.eval(w));
        }
        assert!(
            (sup_gap - 1.0 / (2.0 * sigma)).abs() <= 1e-9,
            "sup gap {sup_gap}"
        );

        let fd = 1e-4;
        let mut max_slope = 0.0f64;
        for j in -150..=150i32 {
            let w = j as f64 * 0.01;
            max_slope = max_slope.max((h.grad(w + fd) - h.grad(w)).abs() / fd);
        }
        assert!(max_slope <= 1.05 * sigma, "difference quotient {max_slope}");
    });
}

#[test]
fn c11_dp_prediction() {
    criterion(11, "privacy ratios, loss stability, and the worked probability", || {
        for eps in [0.1, 0.5, 1.0, 2.0] {
            let worst = dp_ratio_audit(20, eps).unwrap();
            assert!(worst <= eps.exp(), "ratio {worst} breaks the budget at {eps}");
            assert!(worst > 1.0);
        }

        let s = Dataset::new(vec![
            LabeledExample { x: 0, y: 1 },
            LabeledExample { x: 1, y: 1 },
        ])
        .unwrap();
        let p1 = exp_mech_majority(&s, 2.0).unwrap()[1];
        assert!((p1 - 0.880797).abs() <= 1e-6, "P[1] = {p1}");

        let pred = DpPredictor::majority(1.0).unwrap();
        let zero_one = [[0.0, 1.0], [1.0, 0.0]];
        let m = expected_loss_function(&pred, zero_one).unwrap();
        let p = FiniteDistribution::uniform(vec![
            LabeledExample { x: 0, y: 0 },
            LabeledExample { x: 1, y: 1 },
        ])
        .unwrap();
        let declared = 1.0f64.exp_m1();
        for n in 1..=6usize {
            let observed = exhaustive_stability(&m, &p, n).unwrap();
            assert!(observed <= declared + 1e-12, "n {n}: observed {observed}");
            assert!(observed > 0.0);
        }
    });
}

#[test]
fn c12_determinism() {
    criterion(12, "tail runs are byte-identical across repeats and worker counts", || {
        let base = ExperimentConfig {
            problem: ProblemKind::MeanErm,
            n: vec![64, 256],
            trials: 400,
            delta: vec![0.1, 0.01],
            seed: 1212,
            solver: SolverKind::RegErm,
            lambda: LambdaRule::LogNOverSqrtN,
            workers: 1,
            out: None,
            format: ReportFormat::Csv,
        };
        let mut wide = base.clone();
        wide.workers = 8;
        let a = run_tail_experiment(&base).unwrap().to_csv();
        let b = run_tail_experiment(&base).unwrap().to_csv();
        let c = run_tail_experiment(&wide).unwrap().to_csv();
        let d = run_tail_experiment(&wide).unwrap().to_csv();
        assert!(a.lines().count() > 1);
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(c, d);
    });
}
