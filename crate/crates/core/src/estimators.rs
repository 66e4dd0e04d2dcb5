//! Batch quantities that drive the adaptive stepsize and batch sizes.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::problem::CompositeProblem;
use crate::sampling::{BatchDraw, StreamKind};

/// Below this many squared gradient-scale units, `|dG|^2` counts as zero.
pub const UNDERFLOW_FLOOR: f64 = 1e-24;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchGradStats {
    pub mean_grad: Array1<f64>,
    pub mean_value: f64,
    pub size: usize,
}

fn check_batch(problem: &CompositeProblem, batch: &BatchDraw, kinds: &[StreamKind]) -> Result<()> {
    if !kinds.contains(&batch.kind) {
        return contract(format!("{} batch used where {:?} was expected", batch.kind, kinds));
    }
    if batch.indices.is_empty() {
        return contract("empty batch");
    }
    let m = problem.num_components();
    if let Some(i) = batch.indices.iter().find(|&&i| i >= m) {
        return contract(format!("component index {i} out of range [0, {m})"));
    }
    Ok(())
}

fn check_point(problem: &CompositeProblem, x: &Array1<f64>) -> Result<()> {
    if x.len() != problem.dim() {
        return contract(format!("point has dimension {}, expected {}", x.len(), problem.dim()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return contract("point has non-finite coordinates");
    }
    Ok(())
}

/// Mean gradient and value over the batch, reduced in index order.
pub fn batch_grad(problem: &CompositeProblem, x: &Array1<f64>, batch: &BatchDraw) -> Result<BatchGradStats> {
    check_batch(problem, batch, &StreamKind::ALL)?;
    check_point(problem, x)?;
    let (mean_value, mean_grad) = problem.f.batch_value_grad(x, &batch.indices);
    Ok(BatchGradStats {
        mean_grad,
        mean_value,
        size: batch.size(),
    })
}

/// `(1/n) sum_i [G(x_curr, i) - G(x_prev, i)]` with the same sample at both points.
pub fn grad_diff(
    problem: &CompositeProblem,
    x_prev: &Array1<f64>,
    x_curr: &Array1<f64>,
    batch: &BatchDraw,
) -> Result<Array1<f64>> {
    check_batch(problem, batch, &[StreamKind::StepGradDiff])?;
    check_point(problem, x_prev)?;
    check_point(problem, x_curr)?;
    Ok(problem.f.batch_grad_diff(x_prev, x_curr, &batch.indices))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaylorRemainder {
    /// Value as computed; may be slightly negative from rounding.
    pub raw: f64,
    /// `max(raw, 0)`.
    pub clamped: f64,
}

/// Empirical first-order Taylor remainder
/// `(1/n) sum_i [F(x_prev, i) - F(x_curr, i) - <G(x_curr, i), x_prev - x_curr>]`.
pub fn taylor_remainder(
    problem: &CompositeProblem,
    x_prev: &Array1<f64>,
    x_curr: &Array1<f64>,
    batch: &BatchDraw,
) -> Result<TaylorRemainder> {
    check_batch(problem, batch, &[StreamKind::StepTaylor])?;
    check_point(problem, x_prev)?;
    check_point(problem, x_curr)?;
    let raw = problem.f.batch_taylor(x_prev, x_curr, &batch.indices);
    Ok(TaylorRemainder {
        raw,
        clamped: raw.max(0.0),
    })
}

/// Outcome of `|dG|^2 / (2 T)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LocalSmoothness {
    /// A well-defined ratio (0 when `dG = 0`).
    Value(f64),
    /// `T = 0` and `|dG|` at the underflow floor: `0/0 = 0`.
    ZeroByConvention,
    /// `T = 0` while `|dG|` is not negligible: convexity is violated numerically.
    Degenerate,
}

impl LocalSmoothness {
    /// The estimate, or `previous` on the degenerate path.
    pub fn or_previous(self, previous: f64) -> f64 {
        match self {
            LocalSmoothness::Value(v) => v,
            LocalSmoothness::ZeroByConvention => 0.0,
            LocalSmoothness::Degenerate => previous,
        }
    }
}

/// `|delta_g|^2 / (2 t)` with the `0/0 = 0` convention. `grad_scale` sets the
/// magnitude below which `|delta_g|^2` is treated as underflow.
pub fn local_smoothness(delta_g: &Array1<f64>, t: f64, grad_scale: f64) -> LocalSmoothness {
    let num = delta_g.dot(delta_g);
    let t = t.max(0.0);
    if t > 0.0 {
        let v = num / (2.0 * t);
        if v.is_finite() {
            return LocalSmoothness::Value(v);
        }
    }
    if num == 0.0 || num <= UNDERFLOW_FLOOR * grad_scale * grad_scale {
        LocalSmoothness::ZeroByConvention
    } else {
        LocalSmoothness::Degenerate
    }
}

/// Sample local smoothness `2 T_B / |x_curr - x_prev|^2` on a batch of
/// indices (verification only); `0` for coincident points.
pub fn sample_smoothness(
    problem: &CompositeProblem,
    x_prev: &Array1<f64>,
    x_curr: &Array1<f64>,
    indices: &[usize],
) -> f64 {
    let d = x_curr - x_prev;
    let dd = d.dot(&d);
    if dd == 0.0 || indices.is_empty() {
        return 0.0;
    }
    2.0 * problem.f.batch_taylor(x_prev, x_curr, indices) / dd
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimates {
    pub sigma_hat_sq: f64,
    pub v_hat_sq: f64,
    pub delta_hat_sq: f64,
    pub pair_count: usize,
    pub inflation: f64,
}

fn pairs(batch: &BatchDraw) -> Result<usize> {
    if batch.size() % 2 == 1 {
        return contract(format!("pairwise estimator needs an even batch, got {}", batch.size()));
    }
    Ok(batch.size() / 2)
}

fn check_inflation(inflation: f64) -> Result<()> {
    if inflation.is_finite() && inflation >= 1.0 {
        Ok(())
    } else {
        contract(format!("inflation must be >= 1, got {inflation}"))
    }
}

/// `inflation * (1/2r) sum_i |G(x, xi_{2i-1}) - G(x, xi_{2i})|^2`.
pub fn pairwise_grad_variance(
    problem: &CompositeProblem,
    x: &Array1<f64>,
    batch: &BatchDraw,
    inflation: f64,
) -> Result<f64> {
    check_batch(problem, batch, &[StreamKind::VarMain, StreamKind::VarTaylor])?;
    check_point(problem, x)?;
    check_inflation(inflation)?;
    let r = pairs(batch)?;
    let mut acc = 0.0;
    for p in batch.indices.chunks_exact(2) {
        let (_, a) = problem.sample_value_grad(x, p[0])?;
        let (_, b) = problem.sample_value_grad(x, p[1])?;
        let d = a - b;
        acc += d.dot(&d);
    }
    Ok(inflation * acc / (2.0 * r as f64))
}

/// `inflation * (1/2r) sum_i (l(xi_{2i-1}) - l(xi_{2i}))^2` with the
/// single-sample local smoothness `l` at `(x_prev, x_curr)`.
pub fn pairwise_smoothness_variance(
    problem: &CompositeProblem,
    x_prev: &Array1<f64>,
    x_curr: &Array1<f64>,
    batch: &BatchDraw,
    inflation: f64,
) -> Result<f64> {
    check_batch(problem, batch, &[StreamKind::VarGradDiff])?;
    check_point(problem, x_prev)?;
    check_point(problem, x_curr)?;
    check_inflation(inflation)?;
    let r = pairs(batch)?;
    let acc: f64 = batch
        .indices
        .chunks_exact(2)
        .map(|p| {
            let d = problem.sample_smoothness(x_prev, x_curr, p[0]) - problem.sample_smoothness(x_prev, x_curr, p[1]);
            d * d
        })
        .sum();
    Ok(inflation * acc / (2.0 * r as f64))
}

/// All three pairwise estimates: `delta_hat^2` from the `VarMain` batch at
/// `x`, `v_hat^2` from the `VarGradDiff` batch at `(x_prev, x)`, and
/// `sigma_hat^2` from the `VarTaylor` batch at `x`.
pub fn pairwise_variances(
    problem: &CompositeProblem,
    x: &Array1<f64>,
    x_prev: Option<&Array1<f64>>,
    var_main: &BatchDraw,
    var_grad_diff: &BatchDraw,
    var_taylor: &BatchDraw,
    inflation: f64,
) -> Result<VarianceEstimates> {
    if var_main.kind != StreamKind::VarMain || var_taylor.kind != StreamKind::VarTaylor {
        return contract("variance batches passed in the wrong slots");
    }
    let Some(x_prev) = x_prev else {
        return contract("smoothness variance needs the previous point");
    };
    let r = pairs(var_main)?;
    if pairs(var_grad_diff)? != r || pairs(var_taylor)? != r {
        return contract("variance batches must share one pair count");
    }
    Ok(VarianceEstimates {
        delta_hat_sq: pairwise_grad_variance(problem, x, var_main, inflation)?,
        v_hat_sq: pairwise_smoothness_variance(problem, x_prev, x, var_grad_diff, inflation)?,
        sigma_hat_sq: pairwise_grad_variance(problem, x, var_taylor, inflation)?,
        pair_count: r,
        inflation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Components, FeasibleSet, ProxTerm, SmoothFiniteSum};
    use ndarray::{array, Array2};

    fn quad(curvatures: &[f64]) -> CompositeProblem {
        let m = curvatures.len();
        let f = SmoothFiniteSum::new(Components::Quadratic {
            curvature: array![[1.0]],
            scales: Array1::from(curvatures.to_vec()),
            linear: Array2::zeros((m, 1)),
        })
        .unwrap();
        CompositeProblem::new(f, ProxTerm::Zero, FeasibleSet::FullSpace, array![0.0], None).unwrap()
    }

    fn batch(kind: StreamKind, idx: Vec<usize>) -> BatchDraw {
        BatchDraw::forced(kind, 1, idx)
    }

    #[test]
    fn single_sample_and_full_batch() {
        let p = quad(&[1.0, 3.0]);
        let s = batch_grad(&p, &array![2.0], &batch(StreamKind::MainUpdate, vec![1])).unwrap();
        assert_eq!(s.mean_grad, array![6.0]);
        let s = batch_grad(&p, &array![2.0], &batch(StreamKind::MainUpdate, vec![0, 1])).unwrap();
        assert_eq!(s.mean_grad, p.f.full_value_grad(&array![2.0]).1);
    }

    #[test]
    fn grad_diff_examples() {
        let p = quad(&[1.0, 3.0]);
        let b = batch(StreamKind::StepGradDiff, vec![0, 1]);
        assert_eq!(grad_diff(&p, &array![0.0], &array![1.0], &b).unwrap(), array![2.0]);
        assert_eq!(grad_diff(&p, &array![0.7], &array![0.7], &b).unwrap(), array![0.0]);
        let p = quad(&[5.0]);
        let b = batch(StreamKind::StepGradDiff, vec![0, 0, 0]);
        assert_eq!(grad_diff(&p, &array![0.0], &array![1.0], &b).unwrap(), array![5.0]);
        let wrong = batch(StreamKind::StepTaylor, vec![0]);
        assert!(grad_diff(&p, &array![0.0], &array![1.0], &wrong).is_err());
    }

    #[test]
    fn taylor_and_smoothness_examples() {
        let p = quad(&[2.0]);
        let b = batch(StreamKind::StepTaylor, vec![0]);
        let t = taylor_remainder(&p, &array![1.0], &array![0.0], &b).unwrap();
        assert_eq!(t.clamped, 1.0);
        assert_eq!(taylor_remainder(&p, &array![1.0], &array![1.0], &b).unwrap().clamped, 0.0);
        let dg = grad_diff(&p, &array![0.0], &array![1.0], &batch(StreamKind::StepGradDiff, vec![0])).unwrap();
        let t = taylor_remainder(&p, &array![0.0], &array![1.0], &b).unwrap();
        assert_eq!(local_smoothness(&dg, t.clamped, 1.0), LocalSmoothness::Value(2.0));
        assert_eq!(local_smoothness(&array![0.0], 0.0, 1.0), LocalSmoothness::ZeroByConvention);
        assert_eq!(local_smoothness(&array![1e-13], 0.0, 1.0), LocalSmoothness::ZeroByConvention);
        assert_eq!(local_smoothness(&array![1e-3], 0.0, 1.0), LocalSmoothness::Degenerate);
        assert_eq!(LocalSmoothness::Degenerate.or_previous(4.0), 4.0);
    }

    #[test]
    fn pairwise_arithmetic_example() {
        // 1-D least squares with gradients 1, 3, 0, 2 at x = 0.
        let f = SmoothFiniteSum::new(Components::LeastSquares {
            rows: array![[1.0], [1.0], [1.0], [1.0]],
            targets: array![-1.0, -3.0, 0.0, -2.0],
        })
        .unwrap();
        let p = CompositeProblem::new(f, ProxTerm::Zero, FeasibleSet::FullSpace, array![0.0], None).unwrap();
        let b = batch(StreamKind::VarTaylor, vec![0, 1, 2, 3]);
        assert_eq!(pairwise_grad_variance(&p, &array![0.0], &b, 1.0).unwrap(), 2.0);
        assert_eq!(pairwise_grad_variance(&p, &array![0.0], &b, 1.5).unwrap(), 3.0);
        let odd = batch(StreamKind::VarTaylor, vec![0, 1, 2]);
        assert!(pairwise_grad_variance(&p, &array![0.0], &odd, 1.0).is_err());
    }

    #[test]
    fn zero_variance_problem_gives_zero_estimates() {
        let p = quad(&[3.0]);
        let e = pairwise_variances(
            &p,
            &array![1.0],
            Some(&array![0.0]),
            &batch(StreamKind::VarMain, vec![0, 0]),
            &batch(StreamKind::VarGradDiff, vec![0, 0]),
            &batch(StreamKind::VarTaylor, vec![0, 0]),
            1.5,
        )
        .unwrap();
        assert_eq!((e.sigma_hat_sq, e.v_hat_sq, e.delta_hat_sq), (0.0, 0.0, 0.0));
    }
}
