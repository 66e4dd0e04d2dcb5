//! Composite problems `Psi = f + h` over a closed convex set.
//!
//! `f` is a uniform finite sum of convex smooth components and is only seen
//! by the optimizer through per-component value/gradient calls. Everything
//! that needs the whole sum at once (gaps, exact variances, full gradients)
//! is verification-side and is never charged to the oracle budget.

mod finite_sum;
pub mod generators;
mod json;
pub mod prox;
mod sets;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

pub use finite_sum::{Components, SmoothFiniteSum};
pub use json::ProblemDocument;
pub use sets::{FeasibleSet, ProxTerm};

use crate::error::{contract, Error, Result};

/// Known minimizer and optimal value of a synthetic instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub x_star: Vec<f64>,
    pub psi_star: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeProblem {
    pub f: SmoothFiniteSum,
    pub h: ProxTerm,
    pub set: FeasibleSet,
    pub x0: Array1<f64>,
    pub optimum: Option<Optimum>,
}

impl CompositeProblem {
    pub fn new(
        f: SmoothFiniteSum,
        h: ProxTerm,
        set: FeasibleSet,
        x0: Array1<f64>,
        optimum: Option<Optimum>,
    ) -> Result<Self> {
        let dim = f.dim();
        h.validate(dim)?;
        set.validate(dim)?;
        if x0.len() != dim {
            return Err(Error::InvalidProblem(format!(
                "x0 has dimension {}, expected {dim}",
                x0.len()
            )));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("x0 must be finite".into()));
        }
        let tol = 1e-12 * (1.0 + x0.dot(&x0).sqrt());
        if !set.contains(&x0, tol) {
            return Err(Error::InvalidProblem("x0 must lie in the feasible set".into()));
        }
        if let ProxTerm::SetIndicator { set: s } = &h {
            if !s.contains(&x0, tol) {
                return Err(Error::InvalidProblem("x0 must lie in the indicator's set".into()));
            }
        }
        if let Some(opt) = &optimum {
            if opt.x_star.len() != dim || !opt.psi_star.is_finite() {
                return Err(Error::InvalidProblem("optimum has wrong dimension or value".into()));
            }
        }
        Ok(Self {
            f,
            h,
            set,
            x0,
            optimum,
        })
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    /// Number of components `M`.
    pub fn num_components(&self) -> usize {
        self.f.len()
    }

    /// `Psi(x) = f(x) + h(x)` with the full finite sum.
    pub fn psi(&self, x: &Array1<f64>) -> f64 {
        self.f.value(x) + self.h.value(x)
    }

    /// A magnitude for relative tolerances on objective values.
    pub fn value_scale(&self) -> f64 {
        let base = self
            .optimum
            .as_ref()
            .map(|o| o.psi_star.abs())
            .unwrap_or(0.0);
        1.0 + base.max(self.psi(&self.x0).abs())
    }

    /// `(F(x, i), G(x, i))` of component `i`.
    pub fn sample_value_grad(&self, x: &Array1<f64>, index: usize) -> Result<(f64, Array1<f64>)> {
        self.f.value_grad(x, index)
    }

    /// Single-draw gradient variance at `x` under uniform sampling:
    /// `(1/M) sum_i |G(x, i) - grad f(x)|^2`.
    pub fn exact_point_variance(&self, x: &Array1<f64>) -> Result<f64> {
        if x.iter().any(|v| !v.is_finite()) {
            return contract("point has non-finite coordinates");
        }
        let m = self.f.len();
        if m == 1 {
            return Ok(0.0);
        }
        let grads: Vec<Array1<f64>> = (0..m)
            .map(|i| self.f.value_grad(x, i).map(|(_, g)| g))
            .collect::<Result<_>>()?;
        let mut mean = Array1::zeros(x.len());
        for g in &grads {
            mean += g;
        }
        mean /= m as f64;
        let total: f64 = grads
            .iter()
            .map(|g| {
                let d = g - &mean;
                d.dot(&d)
            })
            .sum();
        Ok(total / m as f64)
    }

    /// Per-component local smoothness `l(i) = 2 T_i / |x_curr - x_prev|^2` at a
    /// point pair, with `0/0 = 0` when the points coincide.
    pub fn sample_smoothness(&self, x_prev: &Array1<f64>, x_curr: &Array1<f64>, i: usize) -> f64 {
        let d = x_curr - x_prev;
        let dd = d.dot(&d);
        if dd == 0.0 {
            return 0.0;
        }
        2.0 * self.f.sample_taylor(x_prev, x_curr, i) / dd
    }

    /// Variance of the per-component local smoothness at `(x_prev, x_curr)`
    /// under uniform sampling.
    pub fn exact_smoothness_variance(&self, x_prev: &Array1<f64>, x_curr: &Array1<f64>) -> Result<f64> {
        if x_prev.iter().chain(x_curr.iter()).any(|v| !v.is_finite()) {
            return contract("point has non-finite coordinates");
        }
        let m = self.f.len();
        if m == 1 || x_prev == x_curr {
            return Ok(0.0);
        }
        let ell: Vec<f64> = (0..m).map(|i| self.sample_smoothness(x_prev, x_curr, i)).collect();
        let mean = ell.iter().sum::<f64>() / m as f64;
        Ok(ell.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / m as f64)
    }

    /// Squared distance from `x0` to the recorded minimizer.
    pub fn initial_distance_sq(&self) -> Option<f64> {
        self.optimum.as_ref().map(|o| {
            let d = &self.x0 - &Array1::from(o.x_star.clone());
            d.dot(&d)
        })
    }

    /// Same problem with every component of `f` multiplied by `s`; `h` and the
    /// optimum value are scaled accordingly (the minimizer does not move).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let f = self.f.scaled(s)?;
        let h = match &self.h {
            ProxTerm::L1 { weight } => ProxTerm::L1 { weight: weight * s },
            other => other.clone(),
        };
        let optimum = self.optimum.as_ref().map(|o| Optimum {
            x_star: o.x_star.clone(),
            psi_star: o.psi_star * s,
        });
        Self::new(f, h, self.set.clone(), self.x0.clone(), optimum)
    }
}
