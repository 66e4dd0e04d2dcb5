//! Reference methods sharing the record schema of the main loop.

use std::time::Instant;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::records::TrajectoryRecord;
use super::summary::report_summary;
use super::{evaluate_gap, RunOptions, RunOutput, Stop};
use crate::error::{contract, Error, Result};
use crate::estimators::batch_grad;
use crate::problem::prox::prox_composite;
use crate::problem::CompositeProblem;
use crate::sampling::{Sampler, StreamKind};
use crate::schedule::{ScheduleConfig, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Full gradients with the fixed-horizon stepsize rule.
    DeterministicAcfgm,
    /// AC-SA with stepsizes from a known smoothness constant.
    KnownLAcSa,
    /// `eta_k = theta / sqrt(k)`, single-sample gradients, last iterate.
    PlainSgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub beta: f64,
    pub eta1: f64,
    /// Smoothness constant for AC-SA; defaults to `max_i L_i`.
    pub l: Option<f64>,
    /// Variance bound for AC-SA batch sizes; defaults to the exact variance at `x0`.
    pub sigma_sq: Option<f64>,
    pub d_tilde: f64,
    /// SGD scale; defaults to `1 / max_i L_i`.
    pub theta: Option<f64>,
    pub batch_cap: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            beta: 0.125,
            eta1: 1.0,
            l: None,
            sigma_sq: None,
            d_tilde: 1.0,
            theta: None,
            batch_cap: crate::schedule::DEFAULT_BATCH_CAP,
        }
    }
}

pub fn run_baseline(
    problem: &CompositeProblem,
    kind: BaselineKind,
    params: &BaselineParams,
    opts: &RunOptions,
) -> Result<RunOutput> {
    let n = opts.stop.max_iterations();
    if n == 0 {
        return contract("run needs at least one iteration");
    }
    if matches!(opts.stop, Stop::TargetGap { .. }) && problem.optimum.is_none() {
        return Err(Error::Unsupported("target-gap stopping needs a known optimum".into()));
    }
    match kind {
        BaselineKind::DeterministicAcfgm => deterministic(problem, params, opts),
        BaselineKind::KnownLAcSa => ac_sa(problem, params, opts),
        BaselineKind::PlainSgd => sgd(problem, params, opts),
    }
}

/// Shared bookkeeping for baseline loops.
struct Recorder<'a> {
    problem: &'a CompositeProblem,
    opts: &'a RunOptions,
    records: Vec<TrajectoryRecord>,
}

impl Recorder<'_> {
    /// Returns true when the loop should stop.
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        k: usize,
        x_eval: &Array1<f64>,
        eta: f64,
        l_bar: f64,
        m: usize,
        calls: u64,
        started: Option<Instant>,
    ) -> Result<bool> {
        let n_max = self.opts.stop.max_iterations();
        if !x_eval.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: k,
                last_good: self.records.last().cloned().map(Box::new),
            });
        }
        let gap = if self.problem.optimum.is_some() && self.opts.wants_gap(k, k == n_max) {
            Some(evaluate_gap(self.problem, x_eval)?)
        } else {
            None
        };
        let reached = match (self.opts.stop, gap) {
            (Stop::TargetGap { epsilon, .. }, Some(g)) => g <= epsilon,
            _ => false,
        };
        let last = k == n_max || reached;
        if self.opts.keeps(k, last) {
            self.records.push(TrajectoryRecord {
                k,
                gap,
                eta,
                l_bar,
                m,
                n: 0,
                r: 0,
                calls_total: calls,
                sigma_sq: 0.0,
                v: 0.0,
                red_grad: None,
                wall_ms: started.map(|s| s.elapsed().as_secs_f64() * 1e3).unwrap_or(0.0),
                delta_sq: 0.0,
                l_hat: 0.0,
                v_k: 0.0,
                sigma_sq_exact: None,
                delta_sq_exact: None,
                v_k_exact: None,
            });
        }
        Ok(last)
    }
}

fn finish(
    problem: &CompositeProblem,
    cfg: &ScheduleConfig,
    rec: Recorder<'_>,
    sampler: Sampler,
    x_final: Array1<f64>,
) -> RunOutput {
    let log = sampler.into_log();
    let mut summary = report_summary(&rec.records, cfg, &log, Some(problem));
    // Baselines do not follow the stochastic batch identity or stepsize lemma.
    summary.accounting_ok = None;
    summary.invariants = Default::default();
    summary.variant = "baseline".into();
    RunOutput {
        x_final,
        records: rec.records,
        log,
        summary,
    }
}

/// Fixed-horizon AC-FGM with exact gradients: `L_bar_k` comes from full
/// gradient differences and Taylor remainders. The gradient at `x_k` is
/// evaluated once (M calls) and reused by the next main update.
fn deterministic(problem: &CompositeProblem, p: &BaselineParams, opts: &RunOptions) -> Result<RunOutput> {
    let n_max = opts.stop.max_iterations();
    let cfg = ScheduleConfig::new(Variant::A, p.beta, p.eta1, p.d_tilde, Some(n_max));
    cfg.validate()?;
    let m = problem.num_components();
    let all: Vec<usize> = (0..m).collect();
    let mut sampler = Sampler::new(opts.seed, m);
    let mut state = crate::schedule::ScheduleState::new(&cfg);
    let mut rec = Recorder {
        problem,
        opts,
        records: Vec::new(),
    };
    let y0 = problem.x0.clone();
    let mut x_prev = problem.x0.clone();
    let mut y = problem.x0.clone();
    sampler.charge(StreamKind::MainUpdate, 1, m);
    let (_, mut g_prev) = problem.f.batch_value_grad(&x_prev, &all);
    for k in 1..=n_max {
        let started = opts.wall_time.then(Instant::now);
        let eta = state.eta;
        let (gamma, tau, beta_k) = cfg.geometry(k);
        let z = problem.prox_step(&g_prev, &y, &y0, eta, gamma)?;
        let x = (&z + &(&x_prev * tau)) / (1.0 + tau);
        y = &y * (1.0 - beta_k) + &z * beta_k;
        sampler.charge(StreamKind::StepGradDiff, k, m);
        let (_, g) = problem.f.batch_value_grad(&x, &all);
        let dg = &g - &g_prev;
        let t = problem.f.batch_taylor(&x_prev, &x, &all).max(0.0);
        let scale = g.dot(&g).sqrt().max(f64::MIN_POSITIVE);
        let l_bar = crate::estimators::local_smoothness(&dg, t, scale).or_previous(state.l_bar_prev);
        let stop = rec.push(k, &x, eta, l_bar, m, sampler.log().total_calls, started)?;
        state.advance(&cfg, l_bar, 0.0);
        x_prev = x;
        g_prev = g;
        if stop {
            break;
        }
    }
    Ok(finish(problem, &cfg, rec, sampler, x_prev))
}

/// AC-SA: `x_md = (1 - a) x_ag + a x`, prox step of size `k/(4L)` from `x`
/// along the batch gradient at `x_md`, `x_ag = (1 - a) x_ag + a x` with
/// `a = 2/(k+1)`, batch `m_k = ceil(max{1, N k^2 sigma^2 / (L^2 D~^2)})`.
fn ac_sa(problem: &CompositeProblem, p: &BaselineParams, opts: &RunOptions) -> Result<RunOutput> {
    let n_max = opts.stop.max_iterations();
    let l = p.l.unwrap_or_else(|| problem.f.max_smoothness());
    if !(l.is_finite() && l > 0.0) {
        return contract("AC-SA needs a positive smoothness constant");
    }
    let sigma_sq = match p.sigma_sq {
        Some(s) => s,
        None => problem.exact_point_variance(&problem.x0)?,
    };
    let cfg = ScheduleConfig::new(Variant::A, p.beta, p.eta1, p.d_tilde, Some(n_max));
    let mut sampler = Sampler::new(opts.seed, problem.num_components());
    let mut rec = Recorder {
        problem,
        opts,
        records: Vec::new(),
    };
    let mut x = problem.x0.clone();
    let mut x_ag = problem.x0.clone();
    for k in 1..=n_max {
        let started = opts.wall_time.then(Instant::now);
        let kf = k as f64;
        let a = 2.0 / (kf + 1.0);
        let step = kf / (4.0 * l);
        let want = (n_max as f64) * kf * kf * sigma_sq / (l * l * p.d_tilde * p.d_tilde);
        let size = want.max(1.0).ceil();
        if !size.is_finite() || size > p.batch_cap as f64 {
            return Err(Error::BudgetExceeded {
                iteration: k,
                which: "main",
                requested: want,
                cap: p.batch_cap,
            });
        }
        let x_md = &x_ag * (1.0 - a) + &x * a;
        let b = sampler.draw(StreamKind::MainUpdate, k, size as usize)?;
        let g = batch_grad(problem, &x_md, &b)?.mean_grad;
        x = prox_composite(&problem.h, &problem.set, &(&x - &(&g * step)), step);
        x_ag = &x_ag * (1.0 - a) + &x * a;
        let stop = rec.push(k, &x_ag, step, l, size as usize, sampler.log().total_calls, started)?;
        if stop {
            break;
        }
    }
    Ok(finish(problem, &cfg, rec, sampler, x_ag))
}

fn sgd(problem: &CompositeProblem, p: &BaselineParams, opts: &RunOptions) -> Result<RunOutput> {
    let n_max = opts.stop.max_iterations();
    let theta = p.theta.unwrap_or_else(|| 1.0 / problem.f.max_smoothness());
    if !(theta.is_finite() && theta > 0.0) {
        return contract("SGD needs a positive stepsize scale");
    }
    let cfg = ScheduleConfig::new(Variant::A, p.beta, p.eta1, p.d_tilde, Some(n_max));
    let mut sampler = Sampler::new(opts.seed, problem.num_components());
    let mut rec = Recorder {
        problem,
        opts,
        records: Vec::new(),
    };
    let mut x = problem.x0.clone();
    for k in 1..=n_max {
        let started = opts.wall_time.then(Instant::now);
        let eta = theta / (k as f64).sqrt();
        let b = sampler.draw(StreamKind::MainUpdate, k, 1)?;
        let g = batch_grad(problem, &x, &b)?.mean_grad;
        x = prox_composite(&problem.h, &problem.set, &(&x - &(&g * eta)), eta);
        let stop = rec.push(k, &x, eta, 0.0, 1, sampler.log().total_calls, started)?;
        if stop {
            break;
        }
    }
    Ok(finish(problem, &cfg, rec, sampler, x))
}
