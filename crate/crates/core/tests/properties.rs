//! Property tests over episodes, the surrogate, acquisition and optimization runs.

use esbo_core::acquisition::mes_term;
use esbo_core::harness::average_rank;
use esbo_core::{
    make_task, run_episode, run_optimization, BoxDomain, EpisodeStatus, KernelParams,
    OptimizerConfig, ParamVector, TaskId, TrainedGp, Variant,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, d)
}

fn task_id() -> impl Strategy<Value = TaskId> {
    prop::sample::select(TaskId::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stage_costs_are_nonnegative_and_deterministic(id in task_id(), u in unit_vec(5)) {
        let task = make_task(id);
        let theta = task.domain().from_unit(&u[..task.dim()]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = run_episode(&task, &theta, f64::INFINITY, false, &mut rng);
        let b = run_episode(&task, &theta, f64::INFINITY, false, &mut rng);
        prop_assert!(a.stage_costs.iter().all(|c| c.is_finite() && *c >= 0.0));
        prop_assert_eq!(&a, &b);
        prop_assert!(a.stop_time() <= task.t_max());
        if a.status == EpisodeStatus::Complete {
            prop_assert_eq!(a.stop_time(), task.t_max());
        }
    }

    #[test]
    fn early_stopping_is_a_lossless_prefix(id in task_id(), u in unit_vec(5), frac in 0.0..2.0f64) {
        let task = make_task(id);
        let theta = task.domain().from_unit(&u[..task.dim()]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let full = run_episode(&task, &theta, f64::INFINITY, false, &mut rng);
        let incumbent = frac * full.observed_cost();
        let stopped = run_episode(&task, &theta, incumbent, true, &mut rng);
        let n = stopped.stop_time();
        prop_assert_eq!(&stopped.stage_costs[..], &full.stage_costs[..n]);
        if stopped.status == EpisodeStatus::StoppedEarly {
            // Stopped at the first crossing, so the full cost is at least the incumbent.
            prop_assert_eq!(full.crossing_time(incumbent), Some(n));
            prop_assert!(full.observed_cost() >= incumbent);
        } else {
            prop_assert_eq!(stopped.status, full.status);
            prop_assert_eq!(n, full.stop_time());
        }
    }

    #[test]
    fn lowering_the_incumbent_never_lengthens_an_episode(u in unit_vec(3), a in 0.0..50.0f64, b in 0.0..50.0f64) {
        let task = make_task(TaskId::Pt2Pid);
        let theta = task.domain().from_unit(&u);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (lo, hi) = (a.min(b), a.max(b));
        let short = run_episode(&task, &theta, lo, true, &mut rng).stop_time();
        let long = run_episode(&task, &theta, hi, true, &mut rng).stop_time();
        prop_assert!(short <= long);
    }

    #[test]
    fn gp_interpolates_and_has_nonnegative_variance(
        seed in 0u64..1000,
        n in 2usize..20,
        d in 1usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let domain = BoxDomain::unit(d);
        let points: Vec<(ParamVector, f64)> = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                let y = x.iter().map(|v| (4.0 * v).cos()).sum::<f64>();
                (ParamVector::new(x), y)
            })
            .collect();
        let kp = KernelParams { length_scales: vec![0.1; d], ..KernelParams::default_for_dim(d) };
        let gp = TrainedGp::with_params(&domain, &points, kp.clone()).unwrap();
        for (x, y) in &points {
            let p = gp.posterior(x);
            prop_assert!((p.mean - y).abs() <= 1e-6 * (1.0 + y.abs()), "{} vs {}", p.mean, y);
        }
        for _ in 0..10 {
            let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
            prop_assert!(gp.posterior(&x).variance >= 0.0);
        }

        // Reordering the data leaves the posterior unchanged.
        let mut shuffled = points.clone();
        shuffled.reverse();
        let gp2 = TrainedGp::with_params(&domain, &shuffled, kp).unwrap();
        let q: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let (a, b) = (gp.posterior(&q), gp2.posterior(&q));
        prop_assert!((a.mean - b.mean).abs() <= 1e-8 * (1.0 + a.mean.abs()));
        prop_assert!((a.variance - b.variance).abs() <= 1e-8);
    }

    #[test]
    fn mes_term_is_nonnegative(gamma in -40.0..40.0f64) {
        let v = mes_term(gamma);
        prop_assert!(v.is_finite() && v >= 0.0, "{v}");
    }

    #[test]
    fn ranks_sum_to_triangular_number(values in prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0, 2.0, f64::INFINITY]), 1..10)) {
        let r = average_rank(&values);
        let n = values.len() as f64;
        prop_assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] < values[j] {
                    prop_assert!(r[i] < r[j]);
                }
                if values[i] == values[j] {
                    prop_assert_eq!(r[i], r[j]);
                }
            }
        }
    }
}

#[test]
fn boiler_and_pi_never_crash() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for id in [TaskId::BoilerBangbang, TaskId::ThreetankPi] {
        let task = make_task(id);
        prop_assert_never_crashes(
            &task,
            &mut rng,
            if id == TaskId::BoilerBangbang {
                10_000
            } else {
                2_000
            },
        );
    }
}

fn prop_assert_never_crashes(task: &esbo_core::ClosedLoopTask, rng: &mut ChaCha8Rng, draws: usize) {
    for _ in 0..draws {
        let theta = task.domain().sample_uniform(rng);
        let out = run_episode(task, &theta, f64::INFINITY, false, rng);
        assert_eq!(
            out.status,
            EpisodeStatus::Complete,
            "{} crashed at {:?}",
            task.id(),
            theta
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn runs_respect_budgets_and_incumbents_only_improve(
        seed in 0u64..10_000,
        variant in prop::sample::select(Variant::ALL.to_vec()),
        id in prop::sample::select(vec![TaskId::BoilerBangbang, TaskId::Pt2Pid]),
    ) {
        let task = make_task(id);
        let mut cfg = OptimizerConfig::for_task(&task, variant, seed);
        cfg.k_init = 3;
        cfg.max_evals = 8;
        cfg.step_budget = 5 * task.t_max();
        cfg.fit_restarts = 2;
        let trace = run_optimization(&cfg, &task).unwrap();
        let recs = &trace.records;
        prop_assert!(recs.len() >= cfg.k_init && recs.len() <= cfg.max_evals);
        let total: usize = recs.iter().map(|r| r.stop_time).sum();
        prop_assert_eq!(total, recs.last().unwrap().cumulative_steps);
        prop_assert!(total <= cfg.step_budget + task.t_max());
        for w in recs.windows(2) {
            prop_assert!(w[1].incumbent <= w[0].incumbent);
        }
        for r in recs {
            prop_assert!(task.domain().contains(&r.theta));
            if r.status != EpisodeStatus::Complete {
                prop_assert!(variant.early_stops() || r.status == EpisodeStatus::Crashed);
            }
        }
        prop_assert_eq!(trace.invariants.violations, 0);
    }
}

#[test]
fn budget_equal_to_initial_design_evaluates_only_the_design() {
    let task = make_task(TaskId::ThreetankPi);
    for variant in Variant::ALL {
        let mut cfg = OptimizerConfig::for_task(&task, variant, 3);
        cfg.k_init = 4;
        cfg.max_evals = 4;
        let trace = run_optimization(&cfg, &task).unwrap();
        assert_eq!(trace.records.len(), 4, "{variant}");
    }
}
