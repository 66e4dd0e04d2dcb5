use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed convex feasible region with an exact Euclidean projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibleSet {
    FullSpace,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl FeasibleSet {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            FeasibleSet::FullSpace => Ok(()),
            FeasibleSet::Box { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::InvalidProblem(format!(
                        "box bounds have length {}/{}, expected {dim}",
                        lower.len(),
                        upper.len()
                    )));
                }
                for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if l.is_nan() || u.is_nan() || l > u {
                        return Err(Error::InvalidProblem(format!(
                            "box coordinate {i}: lower {l} must not exceed upper {u}"
                        )));
                    }
                }
                Ok(())
            }
            FeasibleSet::Ball { center, radius } => {
                if center.len() != dim {
                    return Err(Error::InvalidProblem(format!(
                        "ball center has length {}, expected {dim}",
                        center.len()
                    )));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidProblem(format!(
                        "ball radius must be positive and finite, got {radius}"
                    )));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidProblem("ball center must be finite".into()));
                }
                Ok(())
            }
        }
    }

    pub fn is_full_space(&self) -> bool {
        matches!(self, FeasibleSet::FullSpace)
    }

    pub fn project(&self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            FeasibleSet::FullSpace => x.clone(),
            FeasibleSet::Box { lower, upper } => {
                let mut out = x.clone();
                for ((v, l), u) in out.iter_mut().zip(lower).zip(upper) {
                    *v = v.clamp(*l, *u);
                }
                out
            }
            FeasibleSet::Ball { center, radius } => {
                let c = Array1::from(center.clone());
                let diff = x - &c;
                let norm = diff.dot(&diff).sqrt();
                if norm <= *radius {
                    x.clone()
                } else {
                    c + diff * (*radius / norm)
                }
            }
        }
    }

    /// Distance from `x` to the set.
    pub fn distance(&self, x: &Array1<f64>) -> f64 {
        let p = self.project(x);
        let d = x - &p;
        d.dot(&d).sqrt()
    }

    pub fn contains(&self, x: &Array1<f64>, tol: f64) -> bool {
        self.distance(x) <= tol
    }
}

/// The prox-friendly part `h` of the objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxTerm {
    Zero,
    L1 { weight: f64 },
    SetIndicator { set: FeasibleSet },
}

impl ProxTerm {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ProxTerm::Zero => Ok(()),
            ProxTerm::L1 { weight } => {
                if weight.is_finite() && *weight >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidProblem(format!(
                        "l1 weight must be nonnegative and finite, got {weight}"
                    )))
                }
            }
            ProxTerm::SetIndicator { set } => set.validate(dim),
        }
    }

    /// `h(x)`; `+inf` outside the indicator's set (with a small tolerance).
    pub fn value(&self, x: &Array1<f64>) -> f64 {
        match self {
            ProxTerm::Zero => 0.0,
            ProxTerm::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            ProxTerm::SetIndicator { set } => {
                if set.contains(x, 1e-9 * (1.0 + x.dot(x).sqrt())) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Minimum-norm element of the subdifferential of `h` at `x`.
    pub fn min_norm_subgradient(&self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            ProxTerm::Zero | ProxTerm::SetIndicator { .. } => Array1::zeros(x.len()),
            ProxTerm::L1 { weight } => x.mapv(|v| {
                if v > 0.0 {
                    *weight
                } else if v < 0.0 {
                    -*weight
                } else {
                    0.0
                }
            }),
        }
    }
}

pub(crate) fn soft_threshold(x: &Array1<f64>, thresh: f64) -> Array1<f64> {
    x.mapv(|v| v.signum() * (v.abs() - thresh).max(0.0))
}
