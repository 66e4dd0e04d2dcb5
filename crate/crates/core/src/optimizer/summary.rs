use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::records::TrajectoryRecord;
use crate::problem::CompositeProblem;
use crate::sampling::{audit_filtration, FiltrationLog, StreamKind, Violation};
use crate::schedule::{stepsize_lower_bound, ScheduleConfig, Variant};

const SLACK: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub lower_bound_violations: usize,
    pub growth_cap_violations: usize,
    pub curvature_cap_violations: usize,
    pub messages: Vec<String>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.lower_bound_violations + self.growth_cap_violations + self.curvature_cap_violations == 0
    }
}

/// Stepsize lower bound, growth cap and curvature cap over consecutive records.
pub fn check_invariants(records: &[TrajectoryRecord], cfg: &ScheduleConfig) -> InvariantReport {
    let mut rep = InvariantReport::default();
    let b = cfg.beta;
    for r in records.iter().filter(|r| r.k >= 2) {
        let bound = stepsize_lower_bound(cfg, r.k, r.l_hat);
        if r.eta < bound * (1.0 - SLACK) {
            rep.lower_bound_violations += 1;
            rep.messages
                .push(format!("k={}: eta {:.6e} below lower bound {:.6e}", r.k, r.eta, bound));
        }
    }
    for w in records.windows(2) {
        let (cur, next) = (&w[0], &w[1]);
        if next.k != cur.k + 1 {
            continue;
        }
        let k = cur.k as f64;
        let cap = match (cfg.variant, cur.k) {
            (Variant::A, 1) => (2.0 * (1.0 - b) * cfg.eta1).min(2.0 * cfg.eta1 / b),
            (Variant::A, _) => (k + 1.0) * cur.eta / k,
            (_, 1) => 2.0 * (1.0 - b) * cfg.eta1 / (3.0 - b),
            (_, _) => k * (k + 3.0 - b) * cur.eta / ((k + 1.0) * (k + 1.0)),
        };
        if next.eta > cap * (1.0 + SLACK) {
            rep.growth_cap_violations += 1;
            rep.messages
                .push(format!("k={}: eta {:.6e} above growth cap {:.6e}", next.k, next.eta, cap));
        }
        if cur.l_bar > 0.0 && next.eta * cur.l_bar > k / 16.0 * (1.0 + SLACK) {
            rep.curvature_cap_violations += 1;
            rep.messages.push(format!(
                "k={}: eta * L_bar = {:.6e} above {:.6e}",
                next.k,
                next.eta * cur.l_bar,
                k / 16.0
            ));
        }
    }
    rep
}

/// `(1/N) sum_k (v^max_{k-1} D~^2 + delta_k^2 + sigma_{k-1}^2) / L_bar_{k-1}^2`.
///
/// The `k = 1` term has no earlier estimate and uses `L_bar_1`. Terms with a
/// zero estimate contribute nothing (`0/0 = 0`; a positive numerator over a
/// zero estimate is skipped as well and counted in the second return value).
pub fn r_n_squared(records: &[TrajectoryRecord], d_tilde: f64) -> (f64, usize) {
    if records.is_empty() {
        return (0.0, 0);
    }
    let mut total = 0.0;
    let mut skipped = 0;
    for (i, r) in records.iter().enumerate() {
        let l = if i == 0 { r.l_bar } else { records[i - 1].l_bar };
        let num = r.v * d_tilde * d_tilde + r.delta_sq + r.sigma_sq;
        if l > 0.0 {
            total += num / (l * l);
        } else if num > 0.0 {
            skipped += 1;
        }
    }
    (total / records.len() as f64, skipped)
}

/// Least-squares slope of `ln(gap)` against `ln(k)` over the trailing
/// `window` fraction of the points. `None` (with a log message) when fewer
/// than 10 points fall in the window or a gap there is not positive.
pub fn rate_fit(points: &[(usize, f64)], window: f64) -> Option<f64> {
    let take = ((points.len() as f64) * window.clamp(0.0, 1.0)).ceil() as usize;
    let tail = &points[points.len() - take.min(points.len())..];
    if tail.len() < 10 {
        log::info!("rate fit skipped: {} points in window", tail.len());
        return None;
    }
    if let Some((k, g)) = tail.iter().find(|(_, g)| !(*g > 0.0)) {
        log::warn!("rate fit skipped: gap {g:e} at k={k} is not positive");
        return None;
    }
    let xs: Vec<f64> = tail.iter().map(|(k, _)| (*k as f64).ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|(_, g)| g.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub variant: String,
    pub iterations: usize,
    pub total_calls: u64,
    pub calls_by_stream: BTreeMap<String, u64>,
    pub sum_m: u64,
    pub sum_n: u64,
    pub sum_r: u64,
    /// Whether the call counter equals the batch-size identity. `None` when
    /// records were thinned and the identity cannot be recomputed.
    pub accounting_ok: Option<bool>,
    pub final_gap: Option<f64>,
    pub r_n_sq: f64,
    pub r_n_skipped: usize,
    pub d0_sq: Option<f64>,
    pub rate_exponent: Option<f64>,
    pub l_hat_final: f64,
    pub invariants: InvariantReport,
    pub audit: Vec<Violation>,
}

/// Call count implied by the recorded batch sizes:
/// `sum m_k + 2 sum n_k`, plus `6 sum r_k + 2 r_0` for variant C.
pub fn expected_calls(records: &[TrajectoryRecord], cfg: &ScheduleConfig) -> u64 {
    let sum_m: u64 = records.iter().map(|r| r.m as u64).sum();
    let sum_n: u64 = records.iter().map(|r| r.n as u64).sum();
    let sum_r: u64 = records.iter().map(|r| r.r as u64).sum();
    let init = match cfg.variant {
        Variant::C => 2 * cfg.pair_count(0) as u64,
        _ => 0,
    };
    sum_m + 2 * sum_n + 6 * sum_r + init
}

pub fn report_summary(
    records: &[TrajectoryRecord],
    cfg: &ScheduleConfig,
    log: &FiltrationLog,
    problem: Option<&CompositeProblem>,
) -> Summary {
    let complete = records.iter().enumerate().all(|(i, r)| r.k == i + 1);
    let (r_n_sq, r_n_skipped) = r_n_squared(records, cfg.d_tilde);
    let gaps: Vec<(usize, f64)> = records.iter().filter_map(|r| r.gap.map(|g| (r.k, g))).collect();
    let d0_sq = problem.and_then(|p| {
        let dist_sq = p.initial_distance_sq()?;
        let (_, g) = p.f.full_value_grad(&p.x0);
        let s = &g + &p.h.min_norm_subgradient(&p.x0);
        let gn = s.dot(&s);
        let e2 = cfg.eta1 * cfg.eta1;
        let dt2 = cfg.d_tilde * cfg.d_tilde;
        Some(match cfg.variant {
            Variant::A => 36.0 * e2 * gn + 18.0 * (dist_sq + dt2),
            _ => 4.5 * e2 * gn + 30.0 * (dist_sq + dt2),
        })
    });
    let l_hat_final = records
        .last()
        .map(|r| r.l_hat.max(r.l_bar))
        .unwrap_or_else(|| cfg.lower_bound_params().1);
    Summary {
        variant: cfg.variant.name().to_string(),
        iterations: records.last().map(|r| r.k).unwrap_or(0),
        total_calls: log.total_calls,
        calls_by_stream: StreamKind::ALL
            .iter()
            .map(|k| (k.name().to_string(), log.calls(*k)))
            .collect(),
        sum_m: records.iter().map(|r| r.m as u64).sum(),
        sum_n: records.iter().map(|r| r.n as u64).sum(),
        sum_r: records.iter().map(|r| r.r as u64).sum(),
        accounting_ok: complete.then(|| expected_calls(records, cfg) == log.total_calls),
        final_gap: records.last().and_then(|r| r.gap),
        r_n_sq,
        r_n_skipped,
        d0_sq,
        rate_exponent: rate_fit(&gaps, 0.5),
        l_hat_final,
        invariants: check_invariants(records, cfg),
        audit: audit_filtration(log).violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_fit_synthetic_series() {
        let p: Vec<(usize, f64)> = (1..=100).map(|k| (k, 7.0 / (k * k) as f64)).collect();
        assert!((rate_fit(&p, 0.5).unwrap() + 2.0).abs() < 1e-6);
        let p: Vec<(usize, f64)> = (1..=100).map(|k| (k, 3.0 / k as f64)).collect();
        assert!((rate_fit(&p, 0.5).unwrap() + 1.0).abs() < 1e-6);
        assert!(rate_fit(&p[..15], 0.5).is_none());
        let mut bad = p.clone();
        bad[90].1 = 0.0;
        assert!(rate_fit(&bad, 0.5).is_none());
    }

    fn rec(k: usize, v: f64, l_bar: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            k,
            gap: None,
            eta: 1.0,
            l_bar,
            m: 1,
            n: 1,
            r: 0,
            calls_total: 3 * k as u64,
            sigma_sq: 0.0,
            v,
            red_grad: None,
            wall_ms: 0.0,
            delta_sq: 0.0,
            l_hat: 1.0,
            v_k: v,
            sigma_sq_exact: None,
            delta_sq_exact: None,
            v_k_exact: None,
        }
    }

    #[test]
    fn r_n_examples() {
        let zero: Vec<_> = (1..=5).map(|k| rec(k, 0.0, 2.0)).collect();
        assert_eq!(r_n_squared(&zero, 1.0).0, 0.0);
        let ones: Vec<_> = (1..=5).map(|k| rec(k, 1.0, 1.0)).collect();
        assert_eq!(r_n_squared(&ones, 1.0).0, 1.0);
    }
}
