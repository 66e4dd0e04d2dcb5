use ndarray::Array1;
use stoch_acfgm::optimizer::{
    read_records_csv, records_to_csv_string, run_with_observer, CSV_COLUMNS,
};
use stoch_acfgm::problem::generators::{lasso, quadratic_finite_sum, QuadraticSpec};
use stoch_acfgm::problem::Components;
use stoch_acfgm::sampling::audit_filtration;
use stoch_acfgm::*;

fn noise_free(dim: usize) -> CompositeProblem {
    let spec = QuadraticSpec {
        dim,
        components: 1,
        condition: 10.0,
        noise: 0.0,
        ..Default::default()
    };
    quadratic_finite_sum(&spec, 4).unwrap()
}

fn finite_sum(components: usize) -> CompositeProblem {
    let spec = QuadraticSpec {
        dim: 5,
        components,
        condition: 10.0,
        heterogeneity: 0.2,
        noise: 0.05,
        ..Default::default()
    };
    quadratic_finite_sum(&spec, 8).unwrap()
}

fn all_variants(n: usize) -> Vec<ScheduleConfig> {
    vec![
        ScheduleConfig::new(Variant::A, 0.125, 0.5, 1.0, Some(n)),
        ScheduleConfig::new(Variant::B, 0.1, 0.5, 1.0, None),
        ScheduleConfig::new(Variant::C, 0.1, 0.5, 1.0, Some(n)),
        ScheduleConfig::new(Variant::Hp { lambda: 0.5 }, 0.1, 0.5, 1.0, None),
    ]
}

#[test]
fn zero_noise_single_component_uses_unit_batches() {
    let p = noise_free(3);
    let cfg = ScheduleConfig::new(Variant::A, 0.125, 1.0, 1.0, Some(5));
    let a = run(&p, &cfg, &RunOptions::iterations(1, 5)).unwrap();
    let b = run(&p, &cfg, &RunOptions::iterations(2, 5)).unwrap();
    assert_eq!(a.records.len(), 5);
    assert!(a.records.iter().all(|r| r.m == 1 && r.n == 1));
    assert_eq!(a.records, b.records);
    assert_eq!(a.x_final, b.x_final);
    assert_eq!(a.log.total_calls, 15);
}

#[test]
fn first_iteration_unrolled() {
    let p = noise_free(3);
    let Components::Quadratic { linear, .. } = p.f.components() else {
        unreachable!()
    };
    // grad f(0) = H 0 - b = -b for the single component
    let g: Array1<f64> = -linear.row(0).to_owned();
    let x0 = p.x0.clone();
    let cfg = ScheduleConfig::new(Variant::A, 0.125, 0.7, 1.0, Some(1));
    let mut seen = false;
    run_with_observer(&p, &cfg, &RunOptions::iterations(3, 1), |s| {
        assert_eq!(s.k, 1);
        assert_eq!(s.gamma, 0.0);
        assert_eq!(s.tau, 0.5);
        let z1 = &x0 - &(&g * 0.7);
        let x1 = (&z1 + &(&x0 * 0.5)) / 1.5;
        for (a, b) in s.z.iter().zip(&z1).chain(s.x.iter().zip(&x1)) {
            assert!((a - b).abs() <= 1e-14 * (1.0 + b.abs()));
        }
        assert_eq!(s.y, &x0);
        seen = true;
    })
    .unwrap();
    assert!(seen);
}

#[test]
fn replay_is_byte_identical() {
    let p = finite_sum(30);
    for cfg in all_variants(15) {
        let go = |seed| run(&p, &cfg, &RunOptions::iterations(seed, 15)).unwrap();
        let (a, b, c) = (go(11), go(11), go(12));
        let csv = |o: &RunOutput| records_to_csv_string(&o.records).unwrap();
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(a.log.to_csv_string().unwrap(), b.log.to_csv_string().unwrap());
        assert_ne!(csv(&a), csv(&c), "{:?}: seeds 11 and 12 coincide", cfg.variant);
    }
}

#[test]
fn records_survive_csv_round_trip() {
    let p = finite_sum(30);
    let cfg = ScheduleConfig::new(Variant::C, 0.1, 0.5, 1.0, Some(10));
    let mut opts = RunOptions::iterations(5, 10);
    opts.track_exact = true;
    opts.reduced_gradient = true;
    opts.gap_every = 3;
    let out = run(&p, &cfg, &opts).unwrap();
    let text = records_to_csv_string(&out.records).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    assert_eq!(read_records_csv(text.as_bytes()).unwrap(), out.records);
    let log = FiltrationLog::read_csv(out.log.to_csv_string().unwrap().as_bytes()).unwrap();
    assert_eq!(log, out.log);
    assert_eq!(out.records.iter().filter(|r| r.gap.is_some()).count(), 4);
}

#[test]
fn call_counter_matches_batch_identity_for_every_variant() {
    let p = finite_sum(40);
    for cfg in all_variants(12) {
        let out = run(&p, &cfg, &RunOptions::iterations(3, 12)).unwrap();
        let r = &out.records;
        let sum_m: u64 = r.iter().map(|x| x.m as u64).sum();
        let sum_n: u64 = r.iter().map(|x| x.n as u64).sum();
        let sum_r: u64 = r.iter().map(|x| x.r as u64).sum();
        let init = if cfg.variant == Variant::C {
            2 * (8.0 * (12.0f64 / 0.05).ln()).ceil() as u64
        } else {
            0
        };
        assert_eq!(out.log.total_calls, sum_m + 2 * sum_n + 6 * sum_r + init, "{:?}", cfg.variant);
        assert_eq!(out.summary.accounting_ok, Some(true));
        assert!(audit_filtration(&out.log).passed());
        assert_eq!(r.last().unwrap().calls_total, out.log.total_calls);
    }
}

#[test]
fn gap_decreases_on_finite_sum_quadratic() {
    let p = finite_sum(50);
    let cfg = ScheduleConfig::new(Variant::A, 0.125, 0.5, 1.0, Some(40));
    let (mut at20, mut at40) = (0.0, 0.0);
    for seed in 0..10 {
        let out = run(&p, &cfg, &RunOptions::iterations(seed, 40)).unwrap();
        at20 += out.records[19].gap.unwrap();
        at40 += out.records[39].gap.unwrap();
    }
    assert!(at40 < at20, "{at40} >= {at20}");
}

#[test]
fn composite_lasso_run_reaches_small_gap() {
    let p = lasso(60, 8, 0.05, 13).unwrap();
    let cfg = ScheduleConfig::new(Variant::A, 0.125, 0.5, 1.0, Some(12));
    let out = run(&p, &cfg, &RunOptions::iterations(1, 12)).unwrap();
    let start = evaluate_gap(&p, &p.x0).unwrap();
    let last = out.summary.final_gap.unwrap();
    assert!(last >= -1e-9 * p.value_scale());
    assert!(last < 0.6 * start, "{last} vs {start}");
    assert!(out.records.iter().all(|r| r.gap.unwrap() < start));
}

#[test]
fn target_gap_stops_early() {
    let p = finite_sum(30);
    let cfg = ScheduleConfig::new(Variant::B, 0.1, 0.5, 1.0, None);
    let full = run(&p, &cfg, &RunOptions::iterations(7, 40)).unwrap();
    let eps = full.records[19].gap.unwrap();
    let opts = RunOptions::new(
        7,
        Stop::TargetGap {
            epsilon: eps,
            max_iterations: 40,
        },
    );
    let out = run(&p, &cfg, &opts).unwrap();
    let stop = out.records.last().unwrap();
    assert!(stop.k <= 20);
    assert!(stop.gap.unwrap() <= eps);
    assert_eq!(&out.records[..], &full.records[..stop.k]);
}

#[test]
fn oversized_batches_are_reported() {
    let p = finite_sum(30);
    let mut cfg = ScheduleConfig::new(Variant::A, 0.125, 0.5, 1e-4, Some(20));
    cfg.batch_cap = 1000;
    match run(&p, &cfg, &RunOptions::iterations(1, 20)) {
        Err(Error::BudgetExceeded { requested, cap, .. }) => {
            assert_eq!(cap, 1000);
            assert!(requested > 1000.0);
        }
        other => panic!("expected a budget error, got {other:?}"),
    }
}

#[test]
fn invalid_runs_are_rejected() {
    let p = finite_sum(10);
    let cfg = ScheduleConfig::new(Variant::A, 0.125, 0.5, 1.0, Some(5));
    assert!(matches!(run(&p, &cfg, &RunOptions::iterations(1, 6)), Err(Error::Contract(_))));
    assert!(matches!(run(&p, &cfg, &RunOptions::iterations(1, 0)), Err(Error::Contract(_))));
    let bad = ScheduleConfig::new(Variant::B, 0.125, 0.5, 1.0, None);
    assert!(run(&p, &bad, &RunOptions::iterations(1, 5)).is_err());
    let mut no_opt = p.clone();
    no_opt.optimum = None;
    let stop = Stop::TargetGap {
        epsilon: 1e-3,
        max_iterations: 5,
    };
    assert!(matches!(
        run(&no_opt, &cfg, &RunOptions::new(1, stop)),
        Err(Error::Unsupported(_))
    ));
    // without a known optimum the run still works; gaps are simply absent
    let out = run(&no_opt, &cfg, &RunOptions::iterations(1, 5)).unwrap();
    assert!(out.records.iter().all(|r| r.gap.is_none()));
}

#[test]
fn exact_noise_columns_are_consistent() {
    let p = finite_sum(30);
    let cfg = ScheduleConfig::new(Variant::B, 0.1, 0.5, 1.0, None);
    let out = run(&p, &cfg, &RunOptions::iterations(2, 10)).unwrap();
    for w in out.records.windows(2) {
        // the point variance at x_k sizes both delta_k and sigma_k
        assert_eq!(w[1].sigma_sq, w[0].delta_sq);
        assert_eq!(w[0].delta_sq_exact, Some(w[0].delta_sq));
        assert!(w[1].v >= w[0].v);
        assert!(w[1].v >= w[0].v_k);
    }
}
