use std::time::Instant;

use ndarray::Array1;

use super::records::TrajectoryRecord;
use super::summary::report_summary;
use super::{evaluate_gap, RunOptions, RunOutput, Stop};
use crate::error::{contract, Error, Result};
use crate::estimators::{
    batch_grad, grad_diff, local_smoothness, pairwise_grad_variance, pairwise_smoothness_variance,
    taylor_remainder, LocalSmoothness,
};
use crate::problem::CompositeProblem;
use crate::sampling::{Sampler, StreamKind};
use crate::schedule::{batch_size_main, batch_size_step, ScheduleConfig, ScheduleState, Variant};

/// State handed to an observer after each iteration's point updates.
#[derive(Clone, Debug)]
pub struct IterSnapshot<'a> {
    pub k: usize,
    pub x_prev: &'a Array1<f64>,
    pub x: &'a Array1<f64>,
    pub y_prev: &'a Array1<f64>,
    pub y: &'a Array1<f64>,
    pub z: &'a Array1<f64>,
    pub grad: &'a Array1<f64>,
    pub eta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub beta_k: f64,
}

/// Runs stochastic AC-FGM.
pub fn run(problem: &CompositeProblem, cfg: &ScheduleConfig, opts: &RunOptions) -> Result<RunOutput> {
    run_with_observer(problem, cfg, opts, |_| {})
}

fn all_finite(v: &Array1<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Where the variance inputs of the batch rules come from.
#[derive(Clone, Copy)]
enum Noise {
    /// Exact backdoors, multiplied by a proxy factor.
    Exact(f64),
    /// Pairwise estimates with this inflation.
    Pairwise(f64),
}

pub fn run_with_observer<F>(
    problem: &CompositeProblem,
    cfg: &ScheduleConfig,
    opts: &RunOptions,
    mut observe: F,
) -> Result<RunOutput>
where
    F: FnMut(&IterSnapshot<'_>),
{
    cfg.validate()?;
    let n_max = opts.stop.max_iterations();
    if n_max == 0 {
        return contract("run needs at least one iteration");
    }
    if let (Variant::A, Some(h)) = (cfg.variant, cfg.horizon) {
        if n_max > h {
            return contract(format!("variant A horizon {h} is shorter than the {n_max} requested iterations"));
        }
    }
    if let Stop::TargetGap { epsilon, .. } = opts.stop {
        if problem.optimum.is_none() {
            return Err(Error::Unsupported("target-gap stopping needs a known optimum".into()));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return contract("target gap must be positive");
        }
    }
    let noise = match cfg.variant {
        Variant::C => Noise::Pairwise(cfg.inflation),
        Variant::Hp { .. } => Noise::Exact(cfg.proxy_factor),
        _ => Noise::Exact(1.0),
    };
    let track = opts.track_exact || matches!(noise, Noise::Exact(_));

    let mut sampler = Sampler::new(opts.seed, problem.num_components());
    let mut state = ScheduleState::new(cfg);
    let y0 = problem.x0.clone();
    let mut x_prev = problem.x0.clone();
    let mut y = problem.x0.clone();
    let mut records: Vec<TrajectoryRecord> = Vec::new();

    let mut sigma_prev = match noise {
        Noise::Exact(p) => p * problem.exact_point_variance(&x_prev)?,
        Noise::Pairwise(infl) => {
            let r0 = cfg.pair_count(0);
            let b = sampler.draw(StreamKind::VarTaylor, 0, 2 * r0)?;
            pairwise_grad_variance(problem, &x_prev, &b, infl)?
        }
    };
    let mut sigma_prev_exact = if track {
        Some(problem.exact_point_variance(&x_prev)?)
    } else {
        None
    };
    let mut m_k = batch_size_main(cfg, state.eta, sigma_prev, 1)?;

    for k in 1..=n_max {
        let started = opts.wall_time.then(Instant::now);
        let eta = state.eta;
        let l_hat_prev = state.l_hat;
        let v_max_prev = state.v_max;

        let red_grad = if opts.reduced_gradient {
            let (_, g_full) = problem.f.full_value_grad(&x_prev);
            let (_, red) = problem.gradient_mapping(&y, &g_full, eta)?;
            Some(red.dot(&red).sqrt())
        } else {
            None
        };

        // Main update.
        let main = sampler.draw(StreamKind::MainUpdate, k, m_k)?;
        let g = batch_grad(problem, &x_prev, &main)?.mean_grad;
        let (gamma, tau, beta_k) = cfg.geometry(k);
        let z = problem.prox_step(&g, &y, &y0, eta, gamma)?;
        let x = (&z + &(&x_prev * tau)) / (1.0 + tau);
        let y_next = &y * (1.0 - beta_k) + &z * beta_k;
        if !(all_finite(&x) && all_finite(&z) && all_finite(&y_next)) {
            return Err(Error::NonFinite {
                iteration: k,
                last_good: records.last().cloned().map(Box::new),
            });
        }
        observe(&IterSnapshot {
            k,
            x_prev: &x_prev,
            x: &x,
            y_prev: &y,
            y: &y_next,
            z: &z,
            grad: &g,
            eta,
            gamma,
            tau,
            beta_k,
        });

        let point_var_exact = if track {
            Some(problem.exact_point_variance(&x)?)
        } else {
            None
        };
        let r_k = match noise {
            Noise::Pairwise(_) => cfg.pair_count(k),
            Noise::Exact(_) => 0,
        };
        let delta_sq = match noise {
            Noise::Exact(p) => p * point_var_exact.expect("tracked"),
            Noise::Pairwise(infl) => {
                let b = sampler.draw(StreamKind::VarMain, k, 2 * r_k)?;
                pairwise_grad_variance(problem, &x, &b, infl)?
            }
        };

        // Stepsize batches.
        let n_k = batch_size_step(cfg, eta, v_max_prev, sigma_prev, delta_sq, k)?;
        let gd = sampler.draw(StreamKind::StepGradDiff, k, n_k)?;
        let dg = grad_diff(problem, &x_prev, &x, &gd)?;
        let v_k_est = match noise {
            Noise::Pairwise(infl) => {
                let b = sampler.draw(StreamKind::VarGradDiff, k, 2 * r_k)?;
                Some(pairwise_smoothness_variance(problem, &x_prev, &x, &b, infl)?)
            }
            Noise::Exact(_) => None,
        };
        let ta = sampler.draw(StreamKind::StepTaylor, k, n_k)?;
        let t = taylor_remainder(problem, &x_prev, &x, &ta)?;
        let sigma_k = match noise {
            Noise::Pairwise(infl) => {
                let b = sampler.draw(StreamKind::VarTaylor, k, 2 * r_k)?;
                pairwise_grad_variance(problem, &x, &b, infl)?
            }
            // i.i.d. sampling: the point variance at x_k serves both roles.
            Noise::Exact(_) => delta_sq,
        };
        let v_k_exact = if track {
            Some(problem.exact_smoothness_variance(&x_prev, &x)?)
        } else {
            None
        };
        let v_k = match (v_k_est, noise) {
            (Some(v), _) => v,
            (None, Noise::Exact(p)) => p * v_k_exact.expect("tracked"),
            (None, Noise::Pairwise(_)) => unreachable!(),
        };

        let grad_scale = g.dot(&g).sqrt().max(f64::MIN_POSITIVE);
        let estimate = local_smoothness(&dg, t.clamped, grad_scale);
        if estimate == LocalSmoothness::Degenerate {
            log::warn!(
                "iteration {k}: Taylor remainder {:.3e} vanished while |dG|^2 = {:.3e}; keeping previous estimate",
                t.raw,
                dg.dot(&dg)
            );
        } else if t.raw < 0.0 {
            log::debug!("iteration {k}: clamped Taylor remainder {:.3e} to zero", t.raw);
        }
        let l_bar = estimate.or_previous(state.l_bar_prev);

        let gap_now = if problem.optimum.is_some() && opts.wants_gap(k, k == n_max) {
            Some(evaluate_gap(problem, &x)?)
        } else {
            None
        };
        let reached = match (opts.stop, gap_now) {
            (Stop::TargetGap { epsilon, .. }, Some(gp)) => gp <= epsilon,
            _ => false,
        };
        let last = k == n_max || reached;
        if opts.keeps(k, last) {
            records.push(TrajectoryRecord {
                k,
                gap: gap_now,
                eta,
                l_bar,
                m: m_k,
                n: n_k,
                r: r_k,
                calls_total: sampler.log().total_calls,
                sigma_sq: sigma_prev,
                v: v_max_prev,
                red_grad,
                wall_ms: started.map(|s| s.elapsed().as_secs_f64() * 1e3).unwrap_or(0.0),
                delta_sq,
                l_hat: l_hat_prev,
                v_k,
                sigma_sq_exact: sigma_prev_exact,
                delta_sq_exact: point_var_exact,
                v_k_exact,
            });
        }

        state.advance(cfg, l_bar, v_k);
        x_prev = x;
        y = y_next;
        sigma_prev = sigma_k;
        sigma_prev_exact = point_var_exact;
        if last {
            break;
        }
        m_k = batch_size_main(cfg, state.eta, sigma_prev, k + 1)?;
    }

    let log = sampler.into_log();
    let summary = report_summary(&records, cfg, &log, Some(problem));
    Ok(RunOutput {
        x_final: x_prev,
        records,
        log,
        summary,
    })
}
