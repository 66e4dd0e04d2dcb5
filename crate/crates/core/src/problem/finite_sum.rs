use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{contract, Error, Result};

/// Component family of a finite sum `f = (1/M) sum_i f_i`.
#[derive(Clone, Debug, PartialEq)]
pub enum Components {
    /// `f_i(x) = 0.5 (a_i^T x - b_i)^2`, rows of `rows` are the `a_i`.
    LeastSquares {
        rows: Array2<f64>,
        targets: Array1<f64>,
    },
    /// `f_i(x) = ln(1 + exp(-y_i a_i^T x))` with labels `y_i` in {-1, +1}.
    Logistic {
        features: Array2<f64>,
        labels: Array1<f64>,
    },
    /// `f_i(x) = 0.5 s_i x^T H x - b_i^T x` with a shared PSD `H`.
    Quadratic {
        curvature: Array2<f64>,
        scales: Array1<f64>,
        linear: Array2<f64>,
    },
}

/// Convex smooth finite sum with uniform weights and exact per-component
/// smoothness constants.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothFiniteSum {
    components: Components,
    smoothness: Array1<f64>,
    dim: usize,
}

impl SmoothFiniteSum {
    pub fn new(components: Components) -> Result<Self> {
        let (dim, smoothness) = match &components {
            Components::LeastSquares { rows, targets } => {
                if rows.nrows() != targets.len() {
                    return Err(Error::InvalidProblem(format!(
                        "least squares: {} rows but {} targets",
                        rows.nrows(),
                        targets.len()
                    )));
                }
                let l = rows.rows().into_iter().map(|a| a.dot(&a)).collect();
                (rows.ncols(), l)
            }
            Components::Logistic { features, labels } => {
                if features.nrows() != labels.len() {
                    return Err(Error::InvalidProblem(format!(
                        "logistic: {} rows but {} labels",
                        features.nrows(),
                        labels.len()
                    )));
                }
                if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
                    return Err(Error::InvalidProblem("logistic labels must be +1 or -1".into()));
                }
                let l = features.rows().into_iter().map(|a| 0.25 * a.dot(&a)).collect();
                (features.ncols(), l)
            }
            Components::Quadratic {
                curvature,
                scales,
                linear,
            } => {
                let d = curvature.nrows();
                if curvature.ncols() != d || linear.ncols() != d || linear.nrows() != scales.len() {
                    return Err(Error::InvalidProblem(
                        "quadratic: curvature must be d x d and linear terms M x d".into(),
                    ));
                }
                if scales.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
                    return Err(Error::InvalidProblem("quadratic: scales must be positive".into()));
                }
                let asym = curvature
                    .indexed_iter()
                    .map(|((i, j), v)| (v - curvature[(j, i)]).abs())
                    .fold(0.0, f64::max);
                let scale = curvature.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
                if asym > 1e-12 * scale {
                    return Err(Error::InvalidProblem("quadratic: curvature is not symmetric".into()));
                }
                let (lo, hi) = symmetric_extreme_eigenvalues(curvature);
                if lo < -1e-10 * hi.abs().max(1e-300) {
                    return Err(Error::InvalidProblem(format!(
                        "quadratic: curvature is not positive semidefinite (min eigenvalue {lo})"
                    )));
                }
                (d, scales.mapv(|s| s * hi.max(0.0)))
            }
        };
        if smoothness.is_empty() {
            return Err(Error::InvalidProblem("finite sum needs at least one component".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidProblem("dimension must be positive".into()));
        }
        Ok(Self {
            components,
            smoothness,
            dim,
        })
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    /// Number of components `M`.
    pub fn len(&self) -> usize {
        self.smoothness.len()
    }

    pub fn is_empty(&self) -> bool {
        self.smoothness.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn component_smoothness(&self) -> &Array1<f64> {
        &self.smoothness
    }

    /// `max_i L_i`, the finite-sample cocoercivity constant of every batch.
    pub fn max_smoothness(&self) -> f64 {
        self.smoothness.iter().cloned().fold(0.0, f64::max)
    }

    /// Multiply every component by `s > 0`. Not available for logistic losses,
    /// whose family is not closed under scaling.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return contract(format!("scale factor must be positive, got {s}"));
        }
        let components = match &self.components {
            Components::LeastSquares { rows, targets } => {
                let r = s.sqrt();
                Components::LeastSquares {
                    rows: rows * r,
                    targets: targets * r,
                }
            }
            Components::Logistic { .. } => {
                return Err(Error::Unsupported("scaling a logistic finite sum".into()))
            }
            Components::Quadratic {
                curvature,
                scales,
                linear,
            } => Components::Quadratic {
                curvature: curvature.clone(),
                scales: scales * s,
                linear: linear * s,
            },
        };
        Ok(Self {
            components,
            smoothness: &self.smoothness * s,
            dim: self.dim,
        })
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            contract(format!("component index {i} out of range [0, {})", self.len()))
        } else {
            Ok(())
        }
    }

    /// Exact `(F(x, i), G(x, i))` of component `i`.
    pub fn value_grad(&self, x: &Array1<f64>, i: usize) -> Result<(f64, Array1<f64>)> {
        self.check_index(i)?;
        if x.len() != self.dim {
            return contract(format!("point has dimension {}, expected {}", x.len(), self.dim));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return contract("point has non-finite coordinates");
        }
        let mut g = Array1::zeros(self.dim);
        let v = self.accumulate(x.view(), i, 1.0, &mut g);
        Ok((v, g))
    }

    /// Adds `weight * G(x, i)` to `acc` and returns `F(x, i)`.
    fn accumulate(&self, x: ArrayView1<f64>, i: usize, weight: f64, acc: &mut Array1<f64>) -> f64 {
        match &self.components {
            Components::LeastSquares { rows, targets } => {
                let a = rows.row(i);
                let r = a.dot(&x) - targets[i];
                acc.scaled_add(weight * r, &a);
                0.5 * r * r
            }
            Components::Logistic { features, labels } => {
                let a = features.row(i);
                let t = labels[i] * a.dot(&x);
                acc.scaled_add(-weight * labels[i] * sigmoid(-t), &a);
                softplus(-t)
            }
            Components::Quadratic {
                curvature,
                scales,
                linear,
            } => {
                let hx = curvature.dot(&x);
                let b = linear.row(i);
                acc.scaled_add(weight * scales[i], &hx);
                acc.scaled_add(-weight, &b);
                0.5 * scales[i] * x.dot(&hx) - b.dot(&x)
            }
        }
    }

    /// Mean value and gradient over `indices`, reduced in index order.
    pub fn batch_value_grad(&self, x: &Array1<f64>, indices: &[usize]) -> (f64, Array1<f64>) {
        let n = indices.len() as f64;
        match &self.components {
            Components::Quadratic {
                curvature,
                scales,
                linear,
            } => {
                let hx = curvature.dot(x);
                let mut s_sum = 0.0;
                let mut b_sum = Array1::zeros(self.dim);
                for &i in indices {
                    s_sum += scales[i];
                    b_sum += &linear.row(i);
                }
                let grad = (&hx * s_sum - &b_sum) / n;
                let value = (0.5 * s_sum * x.dot(&hx) - b_sum.dot(x)) / n;
                (value, grad)
            }
            _ => {
                let mut grad = Array1::zeros(self.dim);
                let mut value = 0.0;
                for &i in indices {
                    value += self.accumulate(x.view(), i, 1.0, &mut grad);
                }
                (value / n, grad / n)
            }
        }
    }

    /// Mean of `G(x_curr, i) - G(x_prev, i)` over `indices`, same sample at both points.
    pub fn batch_grad_diff(&self, x_prev: &Array1<f64>, x_curr: &Array1<f64>, indices: &[usize]) -> Array1<f64> {
        let n = indices.len() as f64;
        let d = x_curr - x_prev;
        match &self.components {
            Components::LeastSquares { rows, .. } => {
                let mut acc = Array1::zeros(self.dim);
                for &i in indices {
                    let a = rows.row(i);
                    acc.scaled_add(a.dot(&d), &a);
                }
                acc / n
            }
            Components::Quadratic {
                curvature, scales, ..
            } => {
                let s_sum: f64 = indices.iter().map(|&i| scales[i]).sum();
                curvature.dot(&d) * (s_sum / n)
            }
            Components::Logistic { .. } => {
                let mut acc = Array1::zeros(self.dim);
                for &i in indices {
                    self.accumulate(x_curr.view(), i, 1.0, &mut acc);
                    self.accumulate(x_prev.view(), i, -1.0, &mut acc);
                }
                acc / n
            }
        }
    }

    /// `F(x_prev, i) - F(x_curr, i) - <G(x_curr, i), x_prev - x_curr>` for one component,
    /// evaluated in a cancellation-free form for each family.
    pub fn sample_taylor(&self, x_prev: &Array1<f64>, x_curr: &Array1<f64>, i: usize) -> f64 {
        match &self.components {
            Components::LeastSquares { rows, .. } => {
                let a = rows.row(i);
                let t = a.dot(x_prev) - a.dot(x_curr);
                0.5 * t * t
            }
            Components::Quadratic {
                curvature, scales, ..
            } => {
                let d = x_prev - x_curr;
                0.5 * scales[i] * d.dot(&curvature.dot(&d))
            }
            Components::Logistic { features, labels } => {
                let a = features.row(i);
                let u = -labels[i] * a.dot(x_prev);
                let v = -labels[i] * a.dot(x_curr);
                // Bregman divergence of softplus between u and v.
                softplus(u) - softplus(v) - sigmoid(v) * (u - v)
            }
        }
    }

    /// Mean Taylor remainder over `indices` (not clamped).
    pub fn batch_taylor(&self, x_prev: &Array1<f64>, x_curr: &Array1<f64>, indices: &[usize]) -> f64 {
        let n = indices.len() as f64;
        match &self.components {
            Components::Quadratic {
                curvature, scales, ..
            } => {
                let d = x_prev - x_curr;
                let q = 0.5 * d.dot(&curvature.dot(&d));
                let s_sum: f64 = indices.iter().map(|&i| scales[i]).sum();
                q * s_sum / n
            }
            _ => indices.iter().map(|&i| self.sample_taylor(x_prev, x_curr, i)).sum::<f64>() / n,
        }
    }

    /// Full value and gradient `(f(x), grad f(x))`.
    pub fn full_value_grad(&self, x: &Array1<f64>) -> (f64, Array1<f64>) {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch_value_grad(x, &all)
    }

    pub fn value(&self, x: &Array1<f64>) -> f64 {
        self.full_value_grad(x).0
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub(crate) fn symmetric_extreme_eigenvalues(m: &Array2<f64>) -> (f64, f64) {
    let d = m.nrows();
    let dm = DMatrix::from_fn(d, d, |i, j| m[(i, j)]);
    let eig = SymmetricEigen::new(dm);
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn least_squares_component() {
        let f = SmoothFiniteSum::new(Components::LeastSquares {
            rows: array![[1.0, 0.0]],
            targets: array![1.0],
        })
        .unwrap();
        let (v, g) = f.value_grad(&array![0.0, 0.0], 0).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(g, array![-1.0, 0.0]);
        // on the residual's zero set the gradient vanishes
        let (_, g) = f.value_grad(&array![1.0, 7.0], 0).unwrap();
        assert_eq!(g, array![0.0, 0.0]);
    }

    #[test]
    fn logistic_component_at_origin() {
        let f = SmoothFiniteSum::new(Components::Logistic {
            features: array![[1.0, 1.0]],
            labels: array![1.0],
        })
        .unwrap();
        let (v, g) = f.value_grad(&array![0.0, 0.0], 0).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, array![-0.5, -0.5]);
    }

    #[test]
    fn index_out_of_range_is_a_contract_error() {
        let f = SmoothFiniteSum::new(Components::LeastSquares {
            rows: array![[1.0, 0.0]],
            targets: array![1.0],
        })
        .unwrap();
        assert!(matches!(
            f.value_grad(&array![0.0, 0.0], 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn quadratic_smoothness_uses_top_eigenvalue() {
        let f = SmoothFiniteSum::new(Components::Quadratic {
            curvature: array![[2.0, 0.0], [0.0, 5.0]],
            scales: array![1.0, 3.0],
            linear: Array2::zeros((2, 2)),
        })
        .unwrap();
        assert!((f.max_smoothness() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn non_psd_curvature_rejected() {
        let r = SmoothFiniteSum::new(Components::Quadratic {
            curvature: array![[1.0, 0.0], [0.0, -1.0]],
            scales: array![1.0],
            linear: Array2::zeros((1, 2)),
        });
        assert!(r.is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
    }
}
