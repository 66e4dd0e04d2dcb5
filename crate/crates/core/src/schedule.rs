//! Stepsize recursions and batch-size rules.
//!
//! Variant A knows the horizon `N` and uses `gamma_k = 0`, `tau_k = k/2`.
//! Variants B, C and HP are horizon-free: an anchored regularizer with
//! `gamma_k = 1/k` and `tau_k = (k + 2 - beta)/2`. C replaces the exact
//! variances by pairwise estimates; HP swaps in confidence-dependent
//! constants. All batch sizes are rounded up and capped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// Fixed horizon, exact variances.
    A,
    /// Horizon-free, exact variances.
    B,
    /// Horizon-free, pairwise variance estimates.
    C,
    /// Horizon-free with high-probability constants at confidence `lambda`.
    Hp { lambda: f64 },
}

impl Variant {
    pub fn is_horizon_free(&self) -> bool {
        !matches!(self, Variant::A)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::A => "a",
            Variant::B => "b",
            Variant::C => "c",
            Variant::Hp { .. } => "hp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c: f64,
    pub c_tilde: f64,
}

impl Constants {
    pub fn for_variant(v: &Variant) -> Self {
        match *v {
            Variant::A => Self {
                c: 73.0,
                c_tilde: 1728.0,
            },
            Variant::B | Variant::C => Self {
                c: 8.0,
                c_tilde: 745.0,
            },
            Variant::Hp { lambda } => Self {
                c: 9.0 * (1.0 + lambda) + 729.0 * lambda * lambda,
                c_tilde: 988.0 * (1.0 + lambda),
            },
        }
    }
}

pub const DEFAULT_V0: f64 = 1e-8;
pub const DEFAULT_BATCH_CAP: usize = 10_000_000;

fn default_inflation() -> f64 {
    1.5
}
fn default_p_n() -> f64 {
    0.05
}
fn default_cap() -> usize {
    DEFAULT_BATCH_CAP
}
fn default_proxy() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub variant: Variant,
    pub beta: f64,
    pub eta1: f64,
    pub d_tilde: f64,
    /// Iteration budget; required by Variant A, optional otherwise (C uses
    /// it for the pair count).
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Seed of the running maximum of the smoothness variance.
    #[serde(default)]
    pub v0: Option<f64>,
    /// Overrides the variant's constants table.
    #[serde(default)]
    pub constants: Option<Constants>,
    #[serde(default = "default_inflation")]
    pub inflation: f64,
    #[serde(default = "default_p_n")]
    pub p_n: f64,
    #[serde(default = "default_cap")]
    pub batch_cap: usize,
    /// HP only: sub-Gaussian parameter as a multiple of the exact variance.
    #[serde(default = "default_proxy")]
    pub proxy_factor: f64,
}

impl ScheduleConfig {
    pub fn new(variant: Variant, beta: f64, eta1: f64, d_tilde: f64, horizon: Option<usize>) -> Self {
        Self {
            variant,
            beta,
            eta1,
            d_tilde,
            horizon,
            v0: None,
            constants: None,
            inflation: default_inflation(),
            p_n: default_p_n(),
            batch_cap: DEFAULT_BATCH_CAP,
            proxy_factor: default_proxy(),
        }
    }

    pub fn constants(&self) -> Constants {
        self.constants.unwrap_or_else(|| Constants::for_variant(&self.variant))
    }

    pub fn v0(&self) -> f64 {
        self.v0.unwrap_or(DEFAULT_V0)
    }

    /// Checks every field; messages name the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(m));
        let b = self.beta;
        match self.variant {
            Variant::A => {
                if !(b > 0.0 && b <= 0.125) {
                    return bad(format!("beta must lie in (0, 1/8] for variant A, got {b}"));
                }
                match self.horizon {
                    Some(n) if n >= 1 => {}
                    _ => return bad("variant A requires a horizon N >= 1".into()),
                }
            }
            _ => {
                if !(b > 0.0 && b < 0.125) {
                    return bad(format!("beta must lie in (0, 1/8) for horizon-free variants, got {b}"));
                }
            }
        }
        if let Variant::Hp { lambda } = self.variant {
            if !(lambda.is_finite() && lambda > 0.0) {
                return bad(format!("lambda must be positive, got {lambda}"));
            }
        }
        if !(self.eta1.is_finite() && self.eta1 > 0.0) {
            return bad(format!("eta1 must be positive, got {}", self.eta1));
        }
        if !(self.d_tilde.is_finite() && self.d_tilde > 0.0) {
            return bad(format!("d_tilde must be positive, got {}", self.d_tilde));
        }
        if let Some(v0) = self.v0 {
            if !(v0.is_finite() && v0 > 0.0) {
                return bad(format!("v0 must be positive, got {v0}"));
            }
        }
        if let Some(c) = self.constants {
            if !(c.c > 0.0 && c.c_tilde > 0.0 && c.c.is_finite() && c.c_tilde.is_finite()) {
                return bad("constants must be positive".into());
            }
        }
        if !(self.inflation.is_finite() && self.inflation >= 1.0) {
            return bad(format!("inflation must be >= 1, got {}", self.inflation));
        }
        if !(self.p_n > 0.0 && self.p_n < 1.0) {
            return bad(format!("p_n must lie in (0, 1), got {}", self.p_n));
        }
        if self.batch_cap == 0 {
            return bad("batch_cap must be positive".into());
        }
        if !(self.proxy_factor.is_finite() && self.proxy_factor > 0.0) {
            return bad(format!("proxy_factor must be positive, got {}", self.proxy_factor));
        }
        Ok(())
    }

    /// `(gamma_k, tau_k, beta_k)`.
    pub fn geometry(&self, k: usize) -> (f64, f64, f64) {
        let kf = k as f64;
        let beta_k = if k == 1 { 0.0 } else { self.beta };
        match self.variant {
            Variant::A => (0.0, kf / 2.0, beta_k),
            _ => (1.0 / kf, (kf + 2.0 - self.beta) / 2.0, beta_k),
        }
    }

    /// Growth factor `H` of the batch rules at iteration `k`.
    fn growth(&self, k: usize) -> f64 {
        match self.variant {
            Variant::A => (self.horizon.unwrap_or(k) + 2) as f64,
            _ => (k + 2) as f64,
        }
    }

    /// Power of `beta` in the smoothness-variance term of `n_k`.
    fn beta_power(&self) -> i32 {
        match self.variant {
            Variant::A => 3,
            _ => 4,
        }
    }

    /// Lower-bound factor and `L_hat` seed of the stepsize lemma.
    pub fn lower_bound_params(&self) -> (f64, f64) {
        match self.variant {
            Variant::A => (1.0, 1.0 / (32.0 * (1.0 - self.beta) * self.eta1)),
            _ => (15.0 / 16.0, 1.0 / (64.0 * (1.0 - self.beta) * self.eta1)),
        }
    }

    /// Variance-estimation pairs per batch at iteration `k`.
    pub fn pair_count(&self, k: usize) -> usize {
        let arg = match self.horizon {
            Some(n) => n as f64 / self.p_n,
            None => ((k + 1) as f64).powi(2) / self.p_n,
        };
        ((8.0 * arg.ln()).ceil() as usize).max(1)
    }
}

/// Live schedule quantities, advanced once per iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    /// Current iteration `k` (the one `eta` belongs to).
    pub k: usize,
    /// `eta_k`.
    pub eta: f64,
    /// `L_bar_{k-1}` (0 before the first estimate).
    pub l_bar_prev: f64,
    /// `v^max_{k-1}`, seeded with `v0`.
    pub v_max: f64,
    /// `L_hat_{k-1}`, seeded per variant.
    pub l_hat: f64,
}

impl ScheduleState {
    pub fn new(cfg: &ScheduleConfig) -> Self {
        Self {
            k: 1,
            eta: cfg.eta1,
            l_bar_prev: 0.0,
            v_max: cfg.v0(),
            l_hat: cfg.lower_bound_params().1,
        }
    }

    /// Moves from iteration `k` to `k + 1` given `L_bar_k` and `v_k`.
    pub fn advance(&mut self, cfg: &ScheduleConfig, l_bar_k: f64, v_k: f64) {
        self.eta = next_stepsize(cfg, self, l_bar_k);
        self.k += 1;
        self.l_bar_prev = l_bar_k;
        self.l_hat = self.l_hat.max(l_bar_k);
        self.v_max = self.v_max.max(v_k);
    }
}

/// `eta_{k+1}` from `eta_k = state.eta` at `k = state.k` and `L_bar_k`.
/// A zero estimate drops the curvature term.
pub fn next_stepsize(cfg: &ScheduleConfig, state: &ScheduleState, l_bar_k: f64) -> f64 {
    let k = state.k as f64;
    let b = cfg.beta;
    let growth = match (cfg.variant, state.k) {
        (Variant::A, 1) => (2.0 * (1.0 - b) * cfg.eta1).min(2.0 * cfg.eta1 / b),
        (Variant::A, _) => (k + 1.0) * state.eta / k,
        (_, 1) => 2.0 * (1.0 - b) * cfg.eta1 / (3.0 - b),
        (_, _) => k * (k + 3.0 - b) * state.eta / ((k + 1.0) * (k + 1.0)),
    };
    if l_bar_k > 0.0 {
        growth.min(k / (16.0 * l_bar_k))
    } else {
        growth
    }
}

fn capped(cfg: &ScheduleConfig, value: f64, k: usize, which: &'static str) -> Result<usize> {
    let v = value.max(1.0).ceil();
    if !v.is_finite() || v > cfg.batch_cap as f64 {
        return Err(Error::BudgetExceeded {
            iteration: k,
            which,
            requested: value,
            cap: cfg.batch_cap,
        });
    }
    Ok(v as usize)
}

/// `m_k = ceil(max{1, H eta_k^2 / beta^2 * c sigma_{k-1}^2 / D~^2})`.
pub fn batch_size_main(cfg: &ScheduleConfig, eta_k: f64, sigma_prev_sq: f64, k: usize) -> Result<usize> {
    let c = cfg.constants().c;
    let b2 = cfg.beta * cfg.beta;
    let val = cfg.growth(k) * eta_k * eta_k / b2 * c * sigma_prev_sq / (cfg.d_tilde * cfg.d_tilde);
    capped(cfg, val, k, "main")
}

/// `n_k = ceil(max{1, c~ H eta_k^2 v^max_{k-1} / beta^p,
/// H eta_k^2 / beta^2 * c (sigma_{k-1}^2 + delta_k^2) / D~^2})`.
pub fn batch_size_step(
    cfg: &ScheduleConfig,
    eta_k: f64,
    v_max_prev: f64,
    sigma_prev_sq: f64,
    delta_k_sq: f64,
    k: usize,
) -> Result<usize> {
    let Constants { c, c_tilde } = cfg.constants();
    let h = cfg.growth(k);
    let e2 = eta_k * eta_k;
    let smooth = c_tilde * h * e2 * v_max_prev / cfg.beta.powi(cfg.beta_power());
    let noise = h * e2 / (cfg.beta * cfg.beta) * c * (sigma_prev_sq + delta_k_sq) / (cfg.d_tilde * cfg.d_tilde);
    capped(cfg, smooth.max(noise), k, "step")
}

/// `factor * k / (32 L_hat_{k-1})`.
pub fn stepsize_lower_bound(cfg: &ScheduleConfig, k: usize, l_hat_prev: f64) -> f64 {
    let (factor, _) = cfg.lower_bound_params();
    factor * k as f64 / (32.0 * l_hat_prev)
}

/// Whether `eta_k` respects the trajectory lower bound, with `1e-12` relative slack.
pub fn stepsize_lower_bound_check(cfg: &ScheduleConfig, state: &ScheduleState) -> bool {
    if state.k < 2 {
        return true;
    }
    state.eta >= stepsize_lower_bound(cfg, state.k, state.l_hat) * (1.0 - 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(v: Variant, n: Option<usize>) -> ScheduleConfig {
        ScheduleConfig::new(v, 0.125, 1.0, 1.0, n)
    }

    #[test]
    fn first_stepsize_examples() {
        for v in [Variant::A, Variant::B] {
            let c = cfg(v, Some(10));
            let s = ScheduleState::new(&c);
            assert_eq!(next_stepsize(&c, &s, 2.0), 1.0 / 32.0);
        }
    }

    #[test]
    fn growth_branch_when_estimate_is_zero() {
        let c = cfg(Variant::A, Some(10));
        let mut s = ScheduleState::new(&c);
        s.advance(&c, 2.0, 0.0);
        assert_eq!(s.eta, 1.0 / 32.0);
        assert_eq!(next_stepsize(&c, &s, 0.0), 3.0 / 64.0);
    }

    #[test]
    fn batch_size_examples() {
        let a = cfg(Variant::A, Some(10));
        assert_eq!(batch_size_main(&a, 0.5, 1.0, 1).unwrap(), 14016);
        assert_eq!(batch_size_main(&a, 0.5, 0.0, 1).unwrap(), 1);
        assert_eq!(batch_size_step(&a, 0.5, 1.0, 0.0, 0.0, 1).unwrap(), 2_654_208);
        assert_eq!(batch_size_step(&a, 0.5, 0.0, 0.0, 0.0, 1).unwrap(), 1);
        let b = cfg(Variant::B, None);
        assert_eq!(batch_size_main(&b, 1.0 / 32.0, 1.0, 2).unwrap(), 2);
    }

    #[test]
    fn hp_constants() {
        let c = Constants::for_variant(&Variant::Hp { lambda: 1.0 });
        assert_eq!((c.c, c.c_tilde), (747.0, 1976.0));
    }

    #[test]
    fn cap_raises_budget_error() {
        let mut a = cfg(Variant::A, Some(10));
        a.batch_cap = 1000;
        assert!(matches!(
            batch_size_main(&a, 0.5, 1.0, 1),
            Err(Error::BudgetExceeded { which: "main", .. })
        ));
    }

    #[test]
    fn validation_messages() {
        let mut a = cfg(Variant::A, Some(10));
        a.beta = 0.5;
        let msg = a.validate().unwrap_err().to_string();
        assert!(msg.contains("(0, 1/8]"), "{msg}");
        assert!(cfg(Variant::A, None).validate().is_err());
        assert!(cfg(Variant::B, None).validate().is_err(), "beta = 1/8 excluded for B");
        let mut b = cfg(Variant::B, None);
        b.beta = 0.1;
        assert!(b.validate().is_ok());
    }

    #[test]
    fn fixed_horizon_meets_lower_bound() {
        let c = cfg(Variant::A, Some(1000));
        let mut s = ScheduleState::new(&c);
        for _ in 0..1000 {
            s.advance(&c, 1.0, 0.0);
            assert!(stepsize_lower_bound_check(&c, &s), "k={}", s.k);
        }
        // randomized estimates in [0.1, 10]
        let mut seed = 0x2545_f491_4f6c_dd1d_u64;
        let mut s = ScheduleState::new(&c);
        for _ in 0..1000 {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            let u = (seed >> 11) as f64 / (1u64 << 53) as f64;
            s.advance(&c, 0.1 * 100f64.powf(u), 0.0);
            assert!(stepsize_lower_bound_check(&c, &s), "k={}", s.k);
        }
    }

    #[test]
    fn horizon_free_growth_cap_is_sublinear() {
        // With a constant estimate the growth factor k(k+3-beta)/(k+1)^2 binds
        // from k = 2 on, so eta_k grows like k^(1-beta) and drops below the
        // linear bound (15/16) k / (32 L) at k = 3.
        let mut c = cfg(Variant::B, None);
        c.beta = 0.1;
        let mut s = ScheduleState::new(&c);
        s.advance(&c, 1.0, 0.0);
        assert!(stepsize_lower_bound_check(&c, &s));
        s.advance(&c, 1.0, 0.0);
        let expect = 2.0 * (5.0 - 0.1) / 9.0 / 16.0;
        assert!((s.eta - expect).abs() < 1e-15);
        assert!(!stepsize_lower_bound_check(&c, &s));
    }

    #[test]
    fn pair_counts() {
        let mut c = cfg(Variant::C, Some(30));
        c.beta = 0.1;
        assert_eq!(c.pair_count(5), (8.0 * (30.0f64 / 0.05).ln()).ceil() as usize);
        c.horizon = None;
        assert_eq!(c.pair_count(3), (8.0 * (16.0f64 / 0.05).ln()).ceil() as usize);
    }
}
