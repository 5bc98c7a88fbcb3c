//! Randomized invariants over wide parameter ranges, complementing the
//! example-driven unit tests.

use proptest::collection::vec;
use proptest::prelude::*;

use unistab::bounds::{be02_bound, fv18_bound, main_bound, mcdiarmid_tail, moment_bounds, scale_bound, BoundParams};
use unistab::convexopt::{make_schedule, ConvexBody, EuclideanBall, ScheduleKind};
use unistab::core::{count_function, loo_error, unbias, FiniteDistribution};
use unistab::harness::{empirical_quantile, ExcessReport, ExcessRow, TailReport, TailRow};
use unistab::reduction::{block_loo, find_shift, overlapping_block_loo};
use unistab::rng::stream;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bounds_scale_linearly_with_the_function(
        n in 4u128..1_000_000_000,
        gamma in 1e-8f64..1e-2,
        delta in 1e-6f64..0.3,
        alpha in 0.02f64..50.0,
    ) {
        let base = BoundParams::new(n, gamma, delta).unwrap();
        let scaled = BoundParams::new(n, gamma * alpha, delta)
            .unwrap()
            .with_range(alpha)
            .unwrap();
        for eval in [be02_bound, fv18_bound, main_bound] {
            let lhs = eval(&scaled).unwrap().value;
            let rhs = alpha * eval(&base).unwrap().value;
            prop_assert!(rel_close(lhs, rhs, 1e-9), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn scaling_a_bound_and_back_is_identity(value in 1e-12f64..1e6, alpha in 1e-6f64..1e6) {
        let there = scale_bound(value, alpha).unwrap();
        let back = scale_bound(there, 1.0 / alpha).unwrap();
        prop_assert!(rel_close(back, value, 1e-12));
    }

    #[test]
    fn mcdiarmid_tail_decreases_in_threshold(
        n in 1u128..100_000,
        gamma in 1e-6f64..1.0,
        t1 in 0.0f64..2.0,
        bump in 0.0f64..2.0,
    ) {
        let lo = mcdiarmid_tail(n, gamma, t1 + bump).unwrap();
        let hi = mcdiarmid_tail(n, gamma, t1).unwrap();
        prop_assert!(lo <= hi);
        prop_assert!(hi <= 1.0);
        prop_assert!(lo >= 0.0);
    }

    #[test]
    fn moment_bounds_shrink_with_more_samples(
        gamma in 0.0f64..1.0,
        n in 1u128..1_000_000,
        extra in 1u128..1_000_000,
    ) {
        let (f1, s1) = moment_bounds(gamma, n).unwrap();
        let (f2, s2) = moment_bounds(gamma, n + extra).unwrap();
        prop_assert!(f2 <= f1);
        prop_assert!(s2 <= s1);
        prop_assert!(f1 > 0.0 && s1 > 0.0);
    }

    #[test]
    fn quantile_rises_as_the_tail_level_tightens(
        data in vec(-1e6f64..1e6, 1..200),
        d1 in 0.01f64..0.99,
        d2 in 0.01f64..0.99,
    ) {
        let mut sorted = data;
        sorted.sort_unstable_by(f64::total_cmp);
        let (tight, loose) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let q_tight = empirical_quantile(&sorted, tight);
        let q_loose = empirical_quantile(&sorted, loose);
        prop_assert!(q_tight >= q_loose);
        prop_assert!(sorted.contains(&q_tight));
    }

    #[test]
    fn shift_centers_the_clamped_distribution(
        raw in vec((-10.0f64..10.0, 0.05f64..1.0), 2..8),
        width in 0.1f64..5.0,
    ) {
        let total: f64 = raw.iter().map(|&(_, q)| q).sum();
        let mean: f64 = raw.iter().map(|&(v, q)| v * q).sum::<f64>() / total;
        let values: Vec<(f64, f64)> = raw
            .iter()
            .map(|&(v, q)| (v - mean, q / total))
            .collect();
        let b = find_shift(&values, width).unwrap();
        prop_assert!(b.abs() <= width);
        let clamped_mean: f64 = values
            .iter()
            .map(|&(v, q)| q * v.clamp(b - width, b + width))
            .sum();
        prop_assert!(clamped_mean.abs() <= 1e-9, "residual mean {clamped_mean}");
    }

    #[test]
    fn ball_projection_is_nonexpansive(
        x in vec(-5.0f64..5.0, 1..4),
        shift in vec(-5.0f64..5.0, 1..4),
        radius in 0.1f64..1.0,
    ) {
        let dim = x.len().min(shift.len());
        let ball = EuclideanBall::new(radius).unwrap();
        let mut a = x[..dim].to_vec();
        let mut b: Vec<f64> = a.iter().zip(&shift[..dim]).map(|(u, v)| u + v).collect();
        let before: f64 = a
            .iter()
            .zip(&b)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt();
        ball.project(&mut a);
        ball.project(&mut b);
        let after: f64 = a
            .iter()
            .zip(&b)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt();
        prop_assert!(after <= before + 1e-12);
        prop_assert!(a.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius + 1e-12);
    }

    #[test]
    fn block_means_agree_with_plain_leave_one_out(
        seed in 0u64..1_000_000,
        m in 2i64..5,
        n in 2usize..24,
        gamma in 0.01f64..0.5,
    ) {
        let p = FiniteDistribution::uniform((0..m).collect()).unwrap();
        let l = unbias(&count_function::<i64>(gamma, n).unwrap(), &p);
        let mut rng = stream(seed, 0);
        let s = p.sample_dataset(n, &mut rng).unwrap();
        let z = *p.sample(&mut rng);
        let plain = loo_error(&l, &s, &z).unwrap();
        for blocks in (1..=n).filter(|b| n % b == 0) {
            let split = block_loo(&l, &s, &z, blocks).unwrap();
            prop_assert!((split.total - plain).abs() <= 1e-12);
        }
        for size in 1..=n {
            let cyc = overlapping_block_loo(&l, &s, &z, size).unwrap();
            prop_assert!((cyc.total - plain).abs() <= 1e-12);
        }
    }

    #[test]
    fn schedule_norm_is_the_largest_column_sum(
        n in 1usize..16,
        steps in 1usize..16,
        k_frac in 0.0f64..1.0,
        eta in 0.01f64..2.0,
        seed in 0u64..1_000_000,
        kind_pick in 0u8..3,
    ) {
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let kind = match kind_pick {
            0 => ScheduleKind::FullGd,
            1 => ScheduleKind::Shuffle,
            _ => ScheduleKind::WithReplacement,
        };
        let sched = make_schedule(kind, n, steps, k, eta, seed).unwrap();
        let cols = sched.column_sums();
        prop_assert_eq!(cols.len(), n);
        let max = cols.iter().fold(0.0f64, |a, &b| a.max(b));
        prop_assert!(rel_close(sched.one_inf_norm(), max, 1e-12));
        let l1s = sched.per_step_l1();
        prop_assert_eq!(l1s.len(), sched.len());
        let by_steps: f64 = l1s.iter().sum();
        let by_cols: f64 = cols.iter().sum();
        prop_assert!(rel_close(by_steps, by_cols, 1e-9) || (by_steps == 0.0 && by_cols == 0.0));
    }

    #[test]
    fn tail_report_round_trips_through_both_formats(
        rows in vec(
            (1usize..1_000_000, 0.001f64..0.999, 0.0f64..10.0, 0.0f64..100.0, any::<bool>(), 1usize..100_000, any::<u64>()),
            0..5,
        ),
    ) {
        let report = TailReport {
            rows: rows
                .into_iter()
                .map(|(n, delta, quantile, scale, vac, trials, seed)| TailRow {
                    n,
                    delta,
                    quantile,
                    be02: scale,
                    fv18: scale / 2.0,
                    main: scale / 3.0,
                    main_vacuous: vac,
                    trials,
                    seed,
                })
                .collect(),
        };
        let csv = report.to_csv();
        prop_assert_eq!(&TailReport::from_csv(&csv).unwrap(), &report);
        let json = report.to_json();
        prop_assert_eq!(&TailReport::from_json(&json).unwrap(), &report);
    }

    #[test]
    fn excess_report_round_trips_through_both_formats(
        rows in vec(
            (4usize..1_000_000, 0.001f64..0.999, 0.0f64..10.0, 1e-6f64..10.0, 0.0f64..100.0, 1usize..100_000, any::<u64>()),
            0..5,
        ),
    ) {
        let report = ExcessReport {
            rows: rows
                .into_iter()
                .map(|(n, delta, quantile, reference, fitted_c, trials, seed)| ExcessRow {
                    n,
                    delta,
                    quantile,
                    reference,
                    fitted_c,
                    trials,
                    seed,
                })
                .collect(),
        };
        let csv = report.to_csv();
        prop_assert_eq!(&ExcessReport::from_csv(&csv).unwrap(), &report);
        let json = report.to_json();
        prop_assert_eq!(&ExcessReport::from_json(&json).unwrap(), &report);
    }
}
