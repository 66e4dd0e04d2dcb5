//! Sampling-based checks against quantities computed directly from the
//! component data.

use ndarray::{Array1, Array2};
use stoch_acfgm::estimators::{pairwise_grad_variance, pairwise_smoothness_variance};
use stoch_acfgm::problem::generators::{least_squares, LeastSquaresSpec};
use stoch_acfgm::problem::Components;
use stoch_acfgm::sampling::draw_batch;
use stoch_acfgm::{CompositeProblem, StreamKind};

fn instance() -> (CompositeProblem, Array2<f64>, Array1<f64>) {
    let p = least_squares(&LeastSquaresSpec::default(), 21).unwrap();
    let Components::LeastSquares { rows, targets } = p.f.components().clone() else {
        unreachable!()
    };
    (p, rows, targets)
}

fn point(dim: usize, shift: f64) -> Array1<f64> {
    Array1::from_iter((0..dim).map(|j| ((j as f64) * 0.7 + shift).sin()))
}

/// Gradients `a_i (a_i^T x - b_i)` of every component.
fn hand_gradients(rows: &Array2<f64>, targets: &Array1<f64>, x: &Array1<f64>) -> Vec<Array1<f64>> {
    rows.rows()
        .into_iter()
        .zip(targets)
        .map(|(a, b)| a.to_owned() * (a.dot(x) - b))
        .collect()
}

fn population_variance(grads: &[Array1<f64>]) -> f64 {
    let m = grads.len() as f64;
    let mean = grads.iter().fold(Array1::<f64>::zeros(grads[0].len()), |acc, g| acc + g) / m;
    grads.iter().map(|g| (g - &mean).mapv(|v| v * v).sum()).sum::<f64>() / m
}

#[test]
fn exact_point_variance_matches_hand_computation() {
    let (p, rows, targets) = instance();
    let x = point(p.dim(), 0.3);
    let oracle = population_variance(&hand_gradients(&rows, &targets, &x));
    let exact = p.exact_point_variance(&x).unwrap();
    assert!((exact - oracle).abs() <= 1e-12 * oracle, "{exact} vs {oracle}");
}

#[test]
fn sampled_gradient_variance_converges_to_exact() {
    let (p, rows, targets) = instance();
    let x = point(p.dim(), 1.1);
    let grads = hand_gradients(&rows, &targets, &x);
    let exact = p.exact_point_variance(&x).unwrap();
    let draws = draw_batch(77, StreamKind::MainUpdate, 1, 1_000_000, p.num_components()).unwrap();
    let n = draws.size() as f64;
    let mut sum = Array1::<f64>::zeros(p.dim());
    let mut sum_sq = 0.0;
    for &i in &draws.indices {
        sum += &grads[i];
        sum_sq += grads[i].dot(&grads[i]);
    }
    let mean = sum / n;
    let sampled = (sum_sq - n * mean.dot(&mean)) / (n - 1.0);
    assert!((sampled - exact).abs() <= 0.01 * exact, "{sampled} vs {exact}");
}

#[test]
fn pairwise_gradient_variance_is_unbiased() {
    let (p, rows, targets) = instance();
    let x = point(p.dim(), -0.4);
    let oracle = population_variance(&hand_gradients(&rows, &targets, &x));
    let batch = draw_batch(5, StreamKind::VarMain, 3, 200_000, p.num_components()).unwrap();
    let est = pairwise_grad_variance(&p, &x, &batch, 1.0).unwrap();
    assert!((est - oracle).abs() <= 0.02 * oracle, "{est} vs {oracle}");
    let inflated = pairwise_grad_variance(&p, &x, &batch, 1.5).unwrap();
    assert!((inflated - 1.5 * est).abs() <= 1e-12 * inflated);
}

#[test]
fn pairwise_smoothness_variance_is_unbiased() {
    let (p, rows, _) = instance();
    let (xp, xc) = (point(p.dim(), 0.0), point(p.dim(), 2.0));
    let d = &xc - &xp;
    // l_i = 2 T_i / |d|^2 = (a_i^T d)^2 / |d|^2 for least-squares components
    let ell: Vec<f64> = rows.rows().into_iter().map(|a| a.dot(&d).powi(2) / d.dot(&d)).collect();
    let mean = ell.iter().sum::<f64>() / ell.len() as f64;
    let oracle = ell.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / ell.len() as f64;
    let exact = p.exact_smoothness_variance(&xp, &xc).unwrap();
    assert!((exact - oracle).abs() <= 1e-10 * oracle, "{exact} vs {oracle}");
    let batch = draw_batch(6, StreamKind::VarGradDiff, 3, 200_000, p.num_components()).unwrap();
    let est = pairwise_smoothness_variance(&p, &xp, &xc, &batch, 1.0).unwrap();
    assert!((est - oracle).abs() <= 0.02 * oracle, "{est} vs {oracle}");
}

#[test]
fn indices_are_uniform() {
    let m = 50;
    let n = 100_000;
    for kind in StreamKind::ALL {
        let b = draw_batch(2024, kind, 7, n, m).unwrap();
        let mut counts = vec![0usize; m];
        for &i in &b.indices {
            counts[i] += 1;
        }
        let expected = n as f64 / m as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 0.999 quantile of chi-square with 49 degrees of freedom
        assert!(chi2 < 85.35, "{kind}: chi2 = {chi2}");
    }
}

fn correlation(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<usize>() as f64 / n;
    let mb = b.iter().sum::<usize>() as f64 / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa * sbb).sqrt()
}

#[test]
fn streams_are_uncorrelated() {
    let (m, n) = (1000, 100_000);
    let draws: Vec<_> = StreamKind::ALL
        .iter()
        .map(|&k| draw_batch(99, k, 4, n, m).unwrap().indices)
        .collect();
    for i in 0..draws.len() {
        for j in i + 1..draws.len() {
            let r = correlation(&draws[i], &draws[j]);
            assert!(r.abs() < 0.01, "streams {i} and {j}: {r}");
        }
    }
    let next_iter = draw_batch(99, StreamKind::MainUpdate, 5, n, m).unwrap().indices;
    assert!(correlation(&draws[0], &next_iter).abs() < 0.01);
    let next_seed = draw_batch(100, StreamKind::MainUpdate, 4, n, m).unwrap().indices;
    assert!(correlation(&draws[0], &next_seed).abs() < 0.01);
}
