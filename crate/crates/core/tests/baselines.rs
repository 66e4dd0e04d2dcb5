use stoch_acfgm::optimizer::{records_to_csv_string, CSV_COLUMNS};
use stoch_acfgm::problem::generators::{quadratic_finite_sum, QuadraticSpec};
use stoch_acfgm::*;

fn noise_free() -> CompositeProblem {
    let spec = QuadraticSpec {
        dim: 20,
        components: 1,
        condition: 100.0,
        noise: 0.0,
        ..Default::default()
    };
    quadratic_finite_sum(&spec, 11).unwrap()
}

fn final_gap(p: &CompositeProblem, kind: BaselineKind, params: &BaselineParams, n: usize) -> f64 {
    let mut opts = RunOptions::iterations(1, n);
    opts.gap_every = n;
    run_baseline(p, kind, params, &opts).unwrap().summary.final_gap.unwrap()
}

fn ratio(kind: BaselineKind, params: &BaselineParams) -> f64 {
    let p = noise_free();
    final_gap(&p, kind, params, 400) / final_gap(&p, kind, params, 200)
}

#[test]
fn deterministic_acfgm_is_accelerated() {
    let r = ratio(BaselineKind::DeterministicAcfgm, &BaselineParams::default());
    assert!(r <= 0.35, "{r}");
}

#[test]
fn plain_sgd_is_not_accelerated() {
    let r = ratio(BaselineKind::PlainSgd, &BaselineParams::default());
    assert!(r >= 0.4, "{r}");
}

#[test]
fn known_l_ac_sa_without_noise_is_accelerated() {
    let params = BaselineParams {
        sigma_sq: Some(0.0),
        ..Default::default()
    };
    let r = ratio(BaselineKind::KnownLAcSa, &params);
    assert!(r <= 0.35, "{r}");
}

#[test]
fn deterministic_acfgm_matches_main_loop_on_single_component() {
    // With M = 1 every batch is the full gradient, so the main loop and the
    // deterministic baseline take identical steps.
    let p = noise_free();
    let cfg = ScheduleConfig::new(Variant::A, 0.125, 1.0, 1.0, Some(50));
    let main = run(&p, &cfg, &RunOptions::iterations(4, 50)).unwrap();
    let base = run_baseline(
        &p,
        BaselineKind::DeterministicAcfgm,
        &BaselineParams::default(),
        &RunOptions::iterations(4, 50),
    )
    .unwrap();
    for (a, b) in main.records.iter().zip(&base.records) {
        assert_eq!(a.eta, b.eta);
        assert_eq!(a.gap, b.gap);
    }
}

#[test]
fn baselines_charge_their_oracle_calls() {
    let spec = QuadraticSpec {
        dim: 4,
        components: 12,
        noise: 0.1,
        ..Default::default()
    };
    let p = quadratic_finite_sum(&spec, 2).unwrap();
    let n = 9;
    let det = run_baseline(&p, BaselineKind::DeterministicAcfgm, &Default::default(), &RunOptions::iterations(1, n)).unwrap();
    assert_eq!(det.log.total_calls, 12 * (n as u64 + 1));
    let sgd = run_baseline(&p, BaselineKind::PlainSgd, &Default::default(), &RunOptions::iterations(1, n)).unwrap();
    assert_eq!(sgd.log.total_calls, n as u64);
    let acsa = run_baseline(&p, BaselineKind::KnownLAcSa, &Default::default(), &RunOptions::iterations(1, n)).unwrap();
    let sum_m: u64 = acsa.records.iter().map(|r| r.m as u64).sum();
    assert_eq!(acsa.log.total_calls, sum_m);
    // batches grow like k^2
    assert!(acsa.records[n - 1].m > acsa.records[0].m);
    for out in [&det, &sgd, &acsa] {
        let csv = records_to_csv_string(&out.records).unwrap();
        assert_eq!(csv.lines().next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(csv.lines().count(), n + 1);
    }
}
