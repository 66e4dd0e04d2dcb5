//! Acceptance suite: thirteen seeded, hermetic checks with measured values.
//!
//! Trajectory invariants (stepsize bounds, call accounting, `R_N^2`) are
//! recomputed here from the records rather than taken from the library's own
//! summary, and the prox check compares against an independent solver of the
//! unmerged subproblem.

use std::fmt;
use std::time::Instant;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use stoch_acfgm::estimators::{
    grad_diff, local_smoothness, pairwise_grad_variance, pairwise_smoothness_variance, taylor_remainder,
};
use stoch_acfgm::optimizer::{rate_fit, records_to_csv_string};
use stoch_acfgm::problem::generators::{least_squares, quadratic_finite_sum, LeastSquaresSpec, QuadraticSpec};
use stoch_acfgm::sampling::draw_batch;
use stoch_acfgm::{
    evaluate_gap, run, run_baseline, BaselineKind, BaselineParams, BatchDraw, CompositeProblem,
    FeasibleSet, ProxTerm, RunOptions, RunOutput, ScheduleConfig, StreamKind, TrajectoryRecord, Variant,
};

use crate::error::Result;
use crate::run::thread_pool;

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {:>2}. {}: {}", self.id, self.title, self.detail)
    }
}

fn result(id: u8, title: &'static str, passed: bool, detail: String) -> CriterionResult {
    CriterionResult {
        id,
        title,
        passed,
        detail,
    }
}

// ---------------------------------------------------------------------------
// Instances

const BETA_A: f64 = 0.125;
const BETA_FREE: f64 = 0.12;
const ETA1: f64 = 0.5;
const SEEDS_A: std::ops::Range<u64> = 1000..1020;
const SEEDS_C: std::ops::Range<u64> = 5000..5050;
const SEEDS_HP: std::ops::Range<u64> = 7000..7005;

/// Noise-free quadratic with one component, dimension 20, condition 100.
pub fn deterministic_problem() -> Result<CompositeProblem> {
    let spec = QuadraticSpec {
        dim: 20,
        components: 1,
        condition: 100.0,
        l_max: 1.0,
        heterogeneity: 0.0,
        noise: 0.0,
        distance: 1.0,
    };
    Ok(quadratic_finite_sum(&spec, 11)?)
}

/// Finite-sum quadratic with 200 components in dimension 10.
pub fn stochastic_problem() -> Result<CompositeProblem> {
    let (spec, seed) = crate::run::bundled_problem();
    Ok(spec.build(seed)?)
}

/// One seeded trajectory together with the schedule that produced it.
#[derive(Clone, Debug)]
struct Trajectory {
    label: String,
    cfg: ScheduleConfig,
    seed: u64,
    out: RunOutput,
}

fn run_many(
    pool: &rayon::ThreadPool,
    label: &str,
    problem: &CompositeProblem,
    cfg: &ScheduleConfig,
    seeds: impl Iterator<Item = u64>,
    n: usize,
    track_exact: bool,
) -> Result<Vec<Trajectory>> {
    let seeds: Vec<u64> = seeds.collect();
    let outs: Vec<Result<Trajectory>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut opts = RunOptions::iterations(seed, n);
                opts.track_exact = track_exact;
                Ok(Trajectory {
                    label: label.to_owned(),
                    cfg: cfg.clone(),
                    seed,
                    out: run(problem, cfg, &opts)?,
                })
            })
            .collect()
    });
    outs.into_iter().collect()
}

fn final_gap(t: &Trajectory) -> f64 {
    t.out.records.last().and_then(|r| r.gap).unwrap_or(f64::NAN)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn gap_points(records: &[TrajectoryRecord]) -> Vec<(usize, f64)> {
    records.iter().filter_map(|r| r.gap.map(|g| (r.k, g))).collect()
}

// ---------------------------------------------------------------------------
// Independent oracles

/// `(violations of eta_k >= factor k / (32 L_hat_{k-1}))` recomputed from the
/// records: `L_hat` is the running maximum of the recorded `L_bar` seeded
/// with `1/(32 (1 - beta) eta1)` (A) or `1/(64 (1 - beta) eta1)`.
fn lower_bound_violations(records: &[TrajectoryRecord], cfg: &ScheduleConfig) -> usize {
    let b = cfg.beta;
    let (factor, mut l_hat) = match cfg.variant {
        Variant::A => (1.0, 1.0 / (32.0 * (1.0 - b) * cfg.eta1)),
        _ => (15.0 / 16.0, 1.0 / (64.0 * (1.0 - b) * cfg.eta1)),
    };
    let mut bad = 0;
    for r in records {
        if r.k >= 2 && r.eta < factor * r.k as f64 / (32.0 * l_hat) * (1.0 - 1e-12) {
            bad += 1;
        }
        l_hat = l_hat.max(r.l_bar);
    }
    bad
}

/// Growth-cap and curvature-cap violations between consecutive records.
fn cap_violations(records: &[TrajectoryRecord], cfg: &ScheduleConfig) -> usize {
    let b = cfg.beta;
    let mut bad = 0;
    for w in records.windows(2) {
        let k = w[0].k as f64;
        let growth = match (cfg.variant, w[0].k) {
            (Variant::A, 1) => f64::min(2.0 * (1.0 - b) * cfg.eta1, 2.0 * cfg.eta1 / b),
            (Variant::A, _) => (k + 1.0) / k * w[0].eta,
            (_, 1) => 2.0 * (1.0 - b) / (3.0 - b) * cfg.eta1,
            _ => k * (k + 3.0 - b) / ((k + 1.0) * (k + 1.0)) * w[0].eta,
        };
        if w[1].eta > growth * (1.0 + 1e-12) {
            bad += 1;
        }
        if w[1].eta * w[0].l_bar > k / 16.0 * (1.0 + 1e-12) {
            bad += 1;
        }
    }
    bad
}

fn expected_calls(records: &[TrajectoryRecord], cfg: &ScheduleConfig) -> u64 {
    let mut calls: u64 = records.iter().map(|r| r.m as u64 + 2 * r.n as u64 + 6 * r.r as u64).sum();
    if cfg.variant == Variant::C {
        // pairs drawn once before the first iteration
        let n = cfg.horizon.expect("variant C runs here carry a horizon") as f64;
        calls += 2 * (8.0 * (n / cfg.p_n).ln()).ceil() as u64;
    }
    calls
}

fn r_n_sq(records: &[TrajectoryRecord], d_tilde: f64) -> f64 {
    let mut total = 0.0;
    let mut prev_l = records.first().map_or(0.0, |r| r.l_bar);
    for r in records {
        let num = r.v * d_tilde * d_tilde + r.delta_sq + r.sigma_sq;
        if prev_l > 0.0 {
            total += num / (prev_l * prev_l);
        }
        prev_l = r.l_bar;
    }
    total / records.len() as f64
}

/// Solves `min_{z in box ∩ ball} <g, z> + w |z|_1 + |y - z|^2/(2 eta) + gamma |y0 - z|^2/(2 eta)`
/// coordinate by coordinate: bisection on the right derivative for a fixed
/// ball multiplier `mu`, and an outer bisection on `mu`.
#[allow(clippy::too_many_arguments)]
fn subproblem_oracle(
    g: &[f64],
    y: &[f64],
    y0: &[f64],
    eta: f64,
    gamma: f64,
    w: f64,
    lo: &[f64],
    hi: &[f64],
    ball: Option<(&[f64], f64)>,
) -> Vec<f64> {
    let solve = |mu: f64| -> Vec<f64> {
        let c = ball.map(|(c, _)| c);
        (0..g.len())
            .map(|j| {
                let cj = c.map_or(0.0, |c| c[j]);
                let d = |z: f64| {
                    let s = if z >= 0.0 { w } else { -w };
                    g[j] + s + ((1.0 + gamma) * z - y[j] - gamma * y0[j]) / eta + mu * (z - cj)
                };
                let (mut a, mut b) = (lo[j], hi[j]);
                if d(a) >= 0.0 {
                    return a;
                }
                if d(b) < 0.0 {
                    return b;
                }
                for _ in 0..400 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    if d(m) >= 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                b
            })
            .collect()
    };
    let Some((c, r)) = ball else { return solve(0.0) };
    let outside = |z: &[f64]| z.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() > r;
    let z = solve(0.0);
    if !outside(&z) {
        return z;
    }
    let (mut a, mut b) = (0.0, 1.0);
    while outside(&solve(b)) {
        a = b;
        b *= 2.0;
    }
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if outside(&solve(m)) {
            a = m;
        } else {
            b = m;
        }
    }
    solve(b)
}

// ---------------------------------------------------------------------------
// Criteria

fn deterministic_recovery(
    problem: &CompositeProblem,
) -> Result<(CriterionResult, Vec<Trajectory>)> {
    let start = Instant::now();
    let mut trajs = Vec::new();
    for n in [200, 400] {
        let cfg = ScheduleConfig::new(Variant::A, 0.125, 1.0, 1.0, Some(n));
        trajs.push(Trajectory {
            label: format!("deterministic A N={n}"),
            out: run(problem, &cfg, &RunOptions::iterations(1, n))?,
            cfg,
            seed: 1,
        });
    }
    let secs = start.elapsed().as_secs_f64();
    let ratio = final_gap(&trajs[1]) / final_gap(&trajs[0]);
    let slope = rate_fit(&gap_points(&trajs[1].out.records), 0.5).unwrap_or(f64::NAN);
    let passed = ratio <= 0.35 && slope <= -1.8 && secs < 2.0;
    let detail = format!("gap(400)/gap(200) = {ratio:.4e} (<= 0.35), slope = {slope:.3} (<= -1.8), {secs:.2} s (< 2 s)");
    Ok((result(1, "deterministic O(1/N^2) recovery", passed, detail), trajs))
}

fn smoothness_bound() -> Result<CriterionResult> {
    let spec = LeastSquaresSpec {
        components: 50,
        heterogeneity: 1.0,
        ..Default::default()
    };
    let p = least_squares(&spec, 404)?;
    let l_max = p.f.max_smoothness();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut over, mut negative, mut worst_ratio, mut worst_raw) = (0, 0, 0.0f64, 0.0f64);
    let mut split_over = 0;
    for i in 0..10_000u64 {
        let size = rng.random_range(1..=50);
        let xp = Array1::from_iter((0..p.dim()).map(|_| rng.random_range(-2.0..2.0)));
        let scale = 10f64.powf(rng.random_range(-4.0..0.5));
        let dir = Array1::from_iter((0..p.dim()).map(|_| rng.random_range(-1.0..1.0)));
        let xc = &xp + &(dir * scale);
        let b = draw_batch(i, StreamKind::StepGradDiff, 1, size, p.num_components())?;
        let t_same = BatchDraw::forced(StreamKind::StepTaylor, 1, b.indices.clone());
        let dg = grad_diff(&p, &xp, &xc, &b)?;
        let t = taylor_remainder(&p, &xp, &xc, &t_same)?;
        let l = local_smoothness(&dg, t.clamped, 1.0).or_previous(f64::INFINITY);
        let d = &xc - &xp;
        let value_scale = l_max * d.dot(&d);
        if !(l <= l_max * (1.0 + 1e-6)) {
            over += 1;
        }
        if t.clamped < 0.0 || t.raw < -1e-10 * value_scale {
            negative += 1;
        }
        worst_ratio = worst_ratio.max(l / l_max);
        worst_raw = worst_raw.min(t.raw / value_scale);
        // informational: the gradient difference and the remainder on independent batches
        let t_other = draw_batch(i, StreamKind::StepTaylor, 1, size, p.num_components())?;
        let t2 = taylor_remainder(&p, &xp, &xc, &t_other)?;
        if local_smoothness(&dg, t2.clamped, 1.0).or_previous(f64::INFINITY) > l_max * (1.0 + 1e-6) {
            split_over += 1;
        }
    }
    let passed = over == 0 && negative == 0;
    let detail = format!(
        "10000 draws, max L_bar/max L_i = {worst_ratio:.6}, {over} above bound, min T/(L|d|^2) = {worst_raw:.3e}, \
         {negative} remainders below tolerance; info: {split_over} draws exceed the bound when the remainder uses an independent batch"
    );
    Ok(result(4, "local smoothness bound", passed, detail))
}

fn prox_equivalence() -> Result<CriterionResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bases: Vec<CompositeProblem> = (2..=6)
        .map(|dim| {
            let spec = QuadraticSpec {
                dim,
                components: 1,
                noise: 0.0,
                ..Default::default()
            };
            quadratic_finite_sum(&spec, dim as u64)
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut worst = [0.0f64; 3];
    for kind in 0..3 {
        for i in 0..200 {
            let base = &bases[i % bases.len()];
            let d = base.dim();
            let mut u = |a: f64, b: f64| rng.random_range(a..b);
            let lower: Vec<f64> = (0..d).map(|_| u(-2.0, -0.1)).collect();
            let upper: Vec<f64> = (0..d).map(|_| u(0.1, 2.0)).collect();
            let lower2: Vec<f64> = (0..d).map(|_| u(-2.0, -0.1)).collect();
            let upper2: Vec<f64> = (0..d).map(|_| u(0.1, 2.0)).collect();
            let center: Vec<f64> = (0..d).map(|_| u(-0.1, 0.1)).collect();
            let radius = u(0.2, 2.0);
            let g: Vec<f64> = (0..d).map(|_| u(-3.0, 3.0)).collect();
            let y: Vec<f64> = (0..d).map(|_| u(-2.0, 2.0)).collect();
            let y0: Vec<f64> = (0..d).map(|_| u(-2.0, 2.0)).collect();
            let eta = u(0.01, 5.0);
            let gamma = if u(0.0, 1.0) < 0.3 { 0.0 } else { u(0.0, 2.0) };
            let weight = u(0.0, 2.0);
            let boxed = FeasibleSet::Box {
                lower: lower.clone(),
                upper: upper.clone(),
            };
            let ball = FeasibleSet::Ball {
                center: center.clone(),
                radius,
            };
            let free = (vec![-1e6; d], vec![1e6; d]);
            // (h, X, oracle box, oracle ball)
            let (h, set, (lo, hi), with_ball) = match (kind, i % 3) {
                (0, 0) => (ProxTerm::Zero, FeasibleSet::FullSpace, free, false),
                (0, 1) => (ProxTerm::Zero, boxed, (lower, upper), false),
                (0, _) => (ProxTerm::Zero, ball, free, true),
                (1, 0) => (ProxTerm::L1 { weight }, FeasibleSet::FullSpace, free, false),
                (1, 1) => (ProxTerm::L1 { weight }, boxed, (lower, upper), false),
                (1, _) => (ProxTerm::L1 { weight }, ball, free, true),
                (_, 0) => (ProxTerm::SetIndicator { set: boxed }, FeasibleSet::FullSpace, (lower, upper), false),
                (_, 1) => {
                    let inner = FeasibleSet::Box {
                        lower: lower2.clone(),
                        upper: upper2.clone(),
                    };
                    let lo = lower.iter().zip(&lower2).map(|(a, b)| a.max(*b)).collect();
                    let hi = upper.iter().zip(&upper2).map(|(a, b)| a.min(*b)).collect();
                    (ProxTerm::SetIndicator { set: inner }, boxed, (lo, hi), false)
                }
                _ => (ProxTerm::SetIndicator { set: ball }, boxed, (lower, upper), true),
            };
            let w = if let ProxTerm::L1 { weight } = h { weight } else { 0.0 };
            let p = CompositeProblem::new(base.f.clone(), h, set, Array1::zeros(d), None)?;
            let z = p.prox_step(&Array1::from(g.clone()), &Array1::from(y.clone()), &Array1::from(y0.clone()), eta, gamma)?;
            let oracle = subproblem_oracle(
                &g,
                &y,
                &y0,
                eta,
                gamma,
                w,
                &lo,
                &hi,
                with_ball.then_some((&center[..], radius)),
            );
            let err = z.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst[kind] = worst[kind].max(err);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = worst.iter().all(|&e| e <= 1e-8) && secs < 5.0;
    let detail = format!(
        "max |z - z_oracle| over 200 instances: zero {:.2e}, l1 {:.2e}, set indicator {:.2e} (<= 1e-8), {secs:.2} s (< 5 s)",
        worst[0], worst[1], worst[2]
    );
    Ok(result(5, "prox oracle equivalence", passed, detail))
}

fn pairwise_unbiasedness() -> Result<CriterionResult> {
    let p = least_squares(&LeastSquaresSpec::default(), 21)?;
    let point = |shift: f64| Array1::from_iter((0..p.dim()).map(|j| ((j as f64) * 0.7 + shift).sin()));
    let x = point(-0.4);
    let pairs = 100_000;
    let exact_sigma = p.exact_point_variance(&x)?;
    let b = draw_batch(5, StreamKind::VarMain, 3, 2 * pairs, p.num_components())?;
    let est_sigma = pairwise_grad_variance(&p, &x, &b, 1.0)?;
    let (xp, xc) = (point(0.0), point(2.0));
    let exact_v = p.exact_smoothness_variance(&xp, &xc)?;
    let b = draw_batch(6, StreamKind::VarGradDiff, 3, 2 * pairs, p.num_components())?;
    let est_v = pairwise_smoothness_variance(&p, &xp, &xc, &b, 1.0)?;
    let rel_s = (est_sigma / exact_sigma - 1.0).abs();
    let rel_v = (est_v / exact_v - 1.0).abs();
    let passed = rel_s <= 0.02 && rel_v <= 0.02;
    let detail = format!("10^5 pairs: sigma^2 rel. error {rel_s:.2e}, v^2 rel. error {rel_v:.2e} (<= 2e-2)");
    Ok(result(6, "pairwise estimator unbiasedness", passed, detail))
}

/// Runs the whole suite; results are in criterion order.
pub fn run_acceptance() -> Result<Vec<CriterionResult>> {
    let pool = thread_pool()?;
    let mut out = Vec::with_capacity(13);
    let mut all: Vec<Trajectory> = Vec::new();

    let det = deterministic_problem()?;
    let (c1, det_runs) = deterministic_recovery(&det)?;
    all.extend(det_runs);

    let problem = stochastic_problem()?;
    let d_tilde = problem.initial_distance_sq().map_or(1.0, f64::sqrt);
    let cfg_a = |n| ScheduleConfig::new(Variant::A, BETA_A, ETA1, d_tilde, Some(n));

    // 7: rate scaling
    let start = Instant::now();
    let a30 = run_many(&pool, "A N=30", &problem, &cfg_a(30), SEEDS_A, 30, false)?;
    let a60 = run_many(&pool, "A N=60", &problem, &cfg_a(60), SEEDS_A, 60, false)?;
    let secs7 = start.elapsed().as_secs_f64();
    let g30 = mean(a30.iter().map(final_gap));
    let g60 = mean(a60.iter().map(final_gap));
    let ratio7 = g60 / g30;
    let c7 = result(
        7,
        "stochastic rate scaling",
        ratio7 <= 0.5 && secs7 < 60.0,
        format!("mean gap N=60 {g60:.4e} / N=30 {g30:.4e} = {ratio7:.4} (<= 0.5), {secs7:.2} s (< 60 s)"),
    );

    // 8: scaling by 100
    let scaled = problem.scaled(100.0)?;
    let s60 = run_many(&pool, "A N=60 x100", &scaled, &cfg_a(60), SEEDS_A, 60, false)?;
    let psi0 = evaluate_gap(&problem, &problem.x0)?;
    let psi0_s = evaluate_gap(&scaled, &scaled.x0)?;
    let gs60 = mean(s60.iter().map(final_gap));
    let rel = (gs60 / psi0_s) / (g60 / psi0);
    let l_hat = mean(a60.iter().map(|t| t.out.summary.l_hat_final));
    let l_hat_s = mean(s60.iter().map(|t| t.out.summary.l_hat_final));
    let l_ratio = l_hat_s / l_hat;
    let finite = s60.iter().all(|t| final_gap(t).is_finite() && t.out.x_final.iter().all(|v| v.is_finite()));
    let c8 = result(
        8,
        "parameter-freeness to scaling",
        finite && (1.0 / 3.0..=3.0).contains(&rel) && (90.0..=110.0).contains(&l_ratio),
        format!("relative-gap ratio {rel:.4} (within factor 3), L_hat ratio {l_ratio:.3} (in [90, 110]), finite = {finite}"),
    );

    // 9: horizon-free variant B
    let cfg_b = ScheduleConfig::new(Variant::B, BETA_FREE, ETA1, d_tilde, None);
    let b60 = run_many(&pool, "B k=60", &problem, &cfg_b, SEEDS_A, 60, false)?;
    let gb = mean(b60.iter().map(final_gap));
    let ratio9 = gb / g60;
    let c9 = result(
        9,
        "variant B horizon-freeness",
        (0.2..=5.0).contains(&ratio9),
        format!("mean gap B {gb:.4e} / A {g60:.4e} = {ratio9:.4} (within factor 5)"),
    );

    // 10: variant C coverage
    let cfg_c = ScheduleConfig::new(Variant::C, BETA_FREE, ETA1, d_tilde, Some(30));
    let c30 = run_many(&pool, "C N=30", &problem, &cfg_c, SEEDS_C, 30, true)?;
    // Exact variances carry cancellation error; a mathematically zero smoothness
    // variance comes out near 1e-30, so domination is checked up to rounding.
    let v_floor = 1e-12 * problem.f.max_smoothness().powi(2);
    let covered = c30
        .iter()
        .filter(|t| {
            t.out.records.iter().all(|r| {
                let dominates = |est: f64, exact: Option<f64>, floor: f64| exact.is_some_and(|e| est >= e - floor);
                dominates(r.sigma_sq, r.sigma_sq_exact, 0.0)
                    && dominates(r.delta_sq, r.delta_sq_exact, 0.0)
                    && dominates(r.v_k, r.v_k_exact, v_floor)
            })
        })
        .count();
    let frac = covered as f64 / c30.len() as f64;
    let c10 = result(
        10,
        "variant C coverage",
        frac >= 0.9,
        format!(
            "{covered}/{} runs dominate at every k ({frac:.2} >= 0.90), inflation {}, r_k = {}, v rounding floor {v_floor:.0e}",
            c30.len(),
            cfg_c.inflation,
            cfg_c.pair_count(1)
        ),
    );

    // high-probability variant, exercised for the trajectory invariants
    let cfg_hp = ScheduleConfig::new(Variant::Hp { lambda: 0.5 }, BETA_FREE, ETA1, d_tilde, None);
    let hp = run_many(&pool, "HP k=60", &problem, &cfg_hp, SEEDS_HP, 60, false)?;

    // 12: baselines
    let sgd_n = mean(a60.iter().map(|t| t.out.summary.total_calls as f64)).round() as usize;
    let sgd = |theta: f64| -> Result<f64> {
        let params = BaselineParams {
            theta: Some(theta),
            ..Default::default()
        };
        let gaps: Vec<Result<f64>> = pool.install(|| {
            SEEDS_A
                .into_par_iter()
                .map(|seed| {
                    let mut opts = RunOptions::iterations(seed, sgd_n);
                    opts.gap_every = sgd_n;
                    let o = run_baseline(&problem, BaselineKind::PlainSgd, &params, &opts)?;
                    Ok(o.summary.final_gap.unwrap_or(f64::NAN))
                })
                .collect()
        });
        Ok(mean(gaps.into_iter().collect::<Result<Vec<_>>>()?.into_iter()))
    };
    let g_sgd = sgd(ETA1)?;
    let g_sgd_l = sgd(1.0 / problem.f.max_smoothness())?;
    let det_params = BaselineParams {
        beta: 0.125,
        eta1: 1.0,
        ..Default::default()
    };
    let det_gap = |n: usize| -> Result<RunOutput> {
        Ok(run_baseline(&det, BaselineKind::DeterministicAcfgm, &det_params, &RunOptions::iterations(1, n))?)
    };
    let (d200, d400) = (det_gap(200)?, det_gap(400)?);
    let det_ratio = d400.summary.final_gap.unwrap_or(f64::NAN) / d200.summary.final_gap.unwrap_or(f64::NAN);
    let det_slope = rate_fit(&gap_points(&d400.records), 0.5).unwrap_or(f64::NAN);
    let det_ok = det_ratio <= 0.35 && det_slope <= -1.8;
    let c12 = result(
        12,
        "baseline sanity",
        g60 <= g_sgd && det_ok,
        format!(
            "at {sgd_n} oracle calls: A {g60:.4e} vs PlainSGD(theta=eta1) {g_sgd:.4e} (A <= SGD: {}); \
             info: PlainSGD(theta=1/L_max) {g_sgd_l:.4e}; DeterministicACFGM ratio {det_ratio:.4e} (<= 0.35), slope {det_slope:.3} (<= -1.8)",
            g60 <= g_sgd
        ),
    );

    all.extend(a30.iter().cloned());
    all.extend(a60.iter().cloned());
    all.extend(s60.iter().cloned());
    all.extend(b60.iter().cloned());
    all.extend(c30.iter().cloned());
    all.extend(hp.iter().cloned());

    // 2: stepsize lower bound
    let (mut lb_a, mut lb_free, mut n_a, mut n_free) = (0, 0, 0, 0);
    let mut first_free = None;
    for t in &all {
        let v = lower_bound_violations(&t.out.records, &t.cfg);
        if t.cfg.variant == Variant::A {
            lb_a += v;
            n_a += 1;
        } else {
            lb_free += v;
            n_free += 1;
            if v > 0 && first_free.is_none() {
                first_free = Some(format!("{} seed {}", t.label, t.seed));
            }
        }
    }
    let c2 = result(
        2,
        "stepsize lower bound",
        lb_a + lb_free == 0,
        format!(
            "variant A: {lb_a} violations over {n_a} trajectories; variants B/C/HP: {lb_free} violations over {n_free} trajectories{}",
            first_free.map(|s| format!(" (first in {s})")).unwrap_or_default()
        ),
    );

    // 3: stepsize caps
    let caps: usize = all.iter().map(|t| cap_violations(&t.out.records, &t.cfg)).sum();
    let c3 = result(
        3,
        "stepsize upper caps",
        caps == 0,
        format!("{caps} growth/curvature cap violations over {} trajectories", all.len()),
    );

    // 11: accounting and R_N^2
    let mut bad_calls = 0;
    let mut worst_rn = 0.0f64;
    for t in &all {
        if t.out.log.total_calls != expected_calls(&t.out.records, &t.cfg)
            || t.out.records.last().map(|r| r.calls_total) != Some(t.out.log.total_calls)
        {
            bad_calls += 1;
        }
        let direct = r_n_sq(&t.out.records, t.cfg.d_tilde);
        let reported = t.out.summary.r_n_sq;
        let rel = if direct == 0.0 { reported.abs() } else { (reported / direct - 1.0).abs() };
        worst_rn = worst_rn.max(rel);
    }
    let c11 = result(
        11,
        "oracle-call accounting",
        bad_calls == 0 && worst_rn <= 1e-12,
        format!(
            "{bad_calls} of {} trajectories with a call-count mismatch; max R_N^2 relative deviation {worst_rn:.2e} (<= 1e-12)",
            all.len()
        ),
    );

    // 13: replay determinism
    let replays: Vec<(&Trajectory, usize)> = [&a60[0], &s60[0], &b60[0], &c30[0], &hp[0]]
        .into_iter()
        .map(|t| (t, t.out.records.len()))
        .collect();
    let mut mismatches = Vec::new();
    for (t, n) in &replays {
        let p = if t.label.contains("x100") { &scaled } else { &problem };
        let mut opts = RunOptions::iterations(t.seed, *n);
        opts.track_exact = t.cfg.variant == Variant::C;
        let again = run(p, &t.cfg, &opts)?;
        if records_to_csv_string(&again.records)? != records_to_csv_string(&t.out.records)?
            || again.log.to_csv_string()? != t.out.log.to_csv_string()?
        {
            mismatches.push(t.label.clone());
        }
    }
    let mut opts = RunOptions::iterations(SEEDS_A.start, 50);
    opts.gap_every = 10;
    let sgd_a = run_baseline(&problem, BaselineKind::PlainSgd, &Default::default(), &opts)?;
    let sgd_b = run_baseline(&problem, BaselineKind::PlainSgd, &Default::default(), &opts)?;
    if records_to_csv_string(&sgd_a.records)? != records_to_csv_string(&sgd_b.records)? {
        mismatches.push("PlainSGD".into());
    }
    let c13 = result(
        13,
        "replay determinism",
        mismatches.is_empty(),
        format!("{} replays, byte-identical except: {:?}", replays.len() + 1, mismatches),
    );

    out.push(c1);
    out.push(c2);
    out.push(c3);
    out.push(smoothness_bound()?);
    out.push(prox_equivalence()?);
    out.push(pairwise_unbiasedness()?);
    out.push(c7);
    out.push(c8);
    out.push(c9);
    out.push(c10);
    out.push(c11);
    out.push(c12);
    out.push(c13);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_solves_unconstrained_l1_in_closed_form() {
        // minimizer of g z + w|z| + (z - y)^2 / (2 eta): soft threshold of y - eta g at eta w
        let z = subproblem_oracle(&[1.0, -0.2], &[0.5, 0.1], &[0.0, 0.0], 0.5, 0.0, 0.4, &[-9.0; 2], &[9.0; 2], None);
        assert!((z[0] - 0.0).abs() < 1e-12);
        assert!((z[1] - 0.0).abs() < 1e-12);
        let z = subproblem_oracle(&[-2.0], &[0.5], &[0.0], 0.5, 0.0, 0.4, &[-9.0], &[9.0], None);
        assert!((z[0] - 1.3).abs() < 1e-12);
    }

    #[test]
    fn oracle_projects_onto_the_ball() {
        let z = subproblem_oracle(&[0.0, 0.0], &[3.0, 4.0], &[0.0, 0.0], 1.0, 0.0, 0.0, &[-9.0; 2], &[9.0; 2], Some((&[0.0, 0.0], 1.0)));
        assert!((z[0] - 0.6).abs() < 1e-12 && (z[1] - 0.8).abs() < 1e-12, "{z:?}");
    }

    #[test]
    fn r_n_oracle_uses_previous_estimate() {
        let rec = |k, l_bar, v, d, s| TrajectoryRecord {
            k,
            gap: None,
            eta: 1.0,
            l_bar,
            m: 1,
            n: 1,
            r: 0,
            calls_total: 0,
            sigma_sq: s,
            v,
            red_grad: None,
            wall_ms: 0.0,
            delta_sq: d,
            l_hat: 1.0,
            v_k: 0.0,
            sigma_sq_exact: None,
            delta_sq_exact: None,
            v_k_exact: None,
        };
        let rs = [rec(1, 2.0, 1.0, 1.0, 2.0), rec(2, 4.0, 0.0, 2.0, 2.0)];
        // (4 / 4 + 4 / 4) / 2
        assert_eq!(r_n_sq(&rs, 1.0), 1.0);
    }
}
