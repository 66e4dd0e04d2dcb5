//! Proximal steps for `h + indicator(X)`.
//!
//! Every subproblem the optimizer solves has the form
//! `argmin_{z in X} <g, z> + h(z) + 1/(2 eta) |y - z|^2 + gamma/(2 eta) |y0 - z|^2`.
//! The two quadratics merge into `(1 + gamma)/(2 eta) |z - c|^2` with
//! `c = (y + gamma y0 - eta g) / (1 + gamma)`, so the step reduces to one prox of
//! `h + indicator(X)` with stepsize `eta / (1 + gamma)`.

use ndarray::Array1;

use super::sets::{soft_threshold, FeasibleSet, ProxTerm};
use super::CompositeProblem;
use crate::error::{contract, Result};

const DYKSTRA_MAX_ITERS: usize = 100_000;

fn check_finite(name: &str, v: &Array1<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        contract(format!("{name} has non-finite coordinates"))
    }
}

/// `argmin_{z in X} t h(z) + 0.5 |z - center|^2`.
pub fn prox_composite(h: &ProxTerm, set: &FeasibleSet, center: &Array1<f64>, t: f64) -> Array1<f64> {
    match (h, set) {
        (ProxTerm::Zero, x) => x.project(center),
        (ProxTerm::L1 { weight }, FeasibleSet::FullSpace) => soft_threshold(center, t * weight),
        // Separable: the 1-D prox of w|z| on [l, u] is the clipped soft threshold.
        (ProxTerm::L1 { weight }, b @ FeasibleSet::Box { .. }) => b.project(&soft_threshold(center, t * weight)),
        (ProxTerm::L1 { weight }, FeasibleSet::Ball { center: a, radius }) => {
            l1_ball_prox(center, t * weight, &Array1::from(a.clone()), *radius)
        }
        (ProxTerm::SetIndicator { set: s }, x) => project_intersection(s, x, center),
    }
}

/// Prox of `lambda |.|_1` restricted to a ball, by bisection on the ball
/// constraint's multiplier. For a fixed multiplier `mu` the minimizer is the
/// soft threshold of `(c + mu a)/(1 + mu)` at `lambda/(1 + mu)`, and its distance
/// to the ball center decreases in `mu`.
fn l1_ball_prox(c: &Array1<f64>, lambda: f64, a: &Array1<f64>, radius: f64) -> Array1<f64> {
    let at = |mu: f64| soft_threshold(&((c + &(a * mu)) / (1.0 + mu)), lambda / (1.0 + mu));
    let dist = |z: &Array1<f64>| {
        let d = z - a;
        d.dot(&d).sqrt()
    };
    let z0 = at(0.0);
    if dist(&z0) <= radius {
        return z0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while dist(&at(hi)) > radius {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dist(&at(mid)) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = at(hi);
    // hi is on the feasible side; snap residual rounding onto the sphere.
    FeasibleSet::Ball {
        center: a.to_vec(),
        radius,
    }
    .project(&z)
}

/// Euclidean projection onto `A ∩ B`.
fn project_intersection(a: &FeasibleSet, b: &FeasibleSet, x: &Array1<f64>) -> Array1<f64> {
    match (a, b) {
        (FeasibleSet::FullSpace, s) | (s, FeasibleSet::FullSpace) => s.project(x),
        (
            FeasibleSet::Box { lower: l1, upper: u1 },
            FeasibleSet::Box { lower: l2, upper: u2 },
        ) => {
            let lower = l1.iter().zip(l2).map(|(a, b)| a.max(*b)).collect();
            let upper = u1.iter().zip(u2).map(|(a, b)| a.min(*b)).collect();
            FeasibleSet::Box { lower, upper }.project(x)
        }
        (FeasibleSet::Box { lower, upper }, FeasibleSet::Ball { center, radius })
        | (FeasibleSet::Ball { center, radius }, FeasibleSet::Box { lower, upper }) => {
            box_ball_projection(lower, upper, &Array1::from(center.clone()), *radius, x)
        }
        _ if a == b => a.project(x),
        _ => dykstra(a, b, x),
    }
}

/// Projection onto `{l <= z <= u} ∩ {|z - a| <= r}`. For a ball multiplier
/// `mu` the box-constrained minimizer is the clip of `(x + mu a)/(1 + mu)`, and
/// its distance to `a` is nonincreasing in `mu`; bisect for the active value.
/// An empty intersection yields the limit point, the box point nearest `a`.
fn box_ball_projection(lower: &[f64], upper: &[f64], a: &Array1<f64>, radius: f64, x: &Array1<f64>) -> Array1<f64> {
    let bx = FeasibleSet::Box {
        lower: lower.to_vec(),
        upper: upper.to_vec(),
    };
    let at = |mu: f64| bx.project(&((x + &(a * mu)) / (1.0 + mu)));
    let dist = |z: &Array1<f64>| {
        let d = z - a;
        d.dot(&d).sqrt()
    };
    let z0 = at(0.0);
    if dist(&z0) <= radius {
        return z0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while dist(&at(hi)) > radius {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return bx.project(a);
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dist(&at(mid)) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

/// Dykstra's alternating projections; converges to the projection onto a
/// nonempty intersection of two closed convex sets.
fn dykstra(a: &FeasibleSet, b: &FeasibleSet, x: &Array1<f64>) -> Array1<f64> {
    let mut cur = x.clone();
    let mut p = Array1::zeros(x.len());
    let mut q = Array1::zeros(x.len());
    let scale = 1.0 + x.dot(x).sqrt();
    for _ in 0..DYKSTRA_MAX_ITERS {
        let ya = a.project(&(&cur + &p));
        p = &cur + &p - &ya;
        let next = b.project(&(&ya + &q));
        q = &ya + &q - &next;
        let step = &next - &cur;
        cur = next;
        if step.dot(&step).sqrt() <= 1e-15 * scale && a.distance(&cur) <= 1e-14 * scale {
            break;
        }
    }
    cur
}

impl CompositeProblem {
    /// Anchored prox step: the unique minimizer over `X` of
    /// `<g, z> + h(z) + |y - z|^2/(2 eta) + gamma |y0 - z|^2/(2 eta)`.
    pub fn prox_step(
        &self,
        g: &Array1<f64>,
        y: &Array1<f64>,
        y0: &Array1<f64>,
        eta: f64,
        gamma: f64,
    ) -> Result<Array1<f64>> {
        if !(eta.is_finite() && eta > 0.0) {
            return contract(format!("prox stepsize must be positive, got {eta}"));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return contract(format!("anchor weight must be nonnegative, got {gamma}"));
        }
        check_finite("gradient", g)?;
        check_finite("center", y)?;
        check_finite("anchor", y0)?;
        let center = if gamma == 0.0 {
            y - &(g * eta)
        } else {
            (y + &(y0 * gamma) - &(g * eta)) / (1.0 + gamma)
        };
        Ok(prox_composite(&self.h, &self.set, &center, eta / (1.0 + gamma)))
    }

    /// Gradient mapping `P(u, y, c)` and reduced gradient `(u - P)/c`.
    pub fn gradient_mapping(
        &self,
        u: &Array1<f64>,
        y: &Array1<f64>,
        c: f64,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        if !(c.is_finite() && c > 0.0) {
            return contract(format!("gradient mapping stepsize must be positive, got {c}"));
        }
        check_finite("point", u)?;
        check_finite("direction", y)?;
        let p = prox_composite(&self.h, &self.set, &(u - &(y * c)), c);
        let reduced = (u - &p) / c;
        Ok((p, reduced))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Components, SmoothFiniteSum};
    use ndarray::{array, Array2};

    fn problem(dim: usize, h: ProxTerm, set: FeasibleSet) -> CompositeProblem {
        let f = SmoothFiniteSum::new(Components::LeastSquares {
            rows: Array2::eye(dim),
            targets: Array1::zeros(dim),
        })
        .unwrap();
        CompositeProblem::new(f, h, set, Array1::zeros(dim), None).unwrap()
    }

    /// Golden-section minimizer of `w |z| + 0.5 (z - c)^2` on `[a, b]`. Points
    /// are compared through the factored difference of objective values, so
    /// the bracket shrinks well below the square root of machine epsilon.
    fn golden(mut a: f64, mut b: f64, w: f64, center: f64) -> f64 {
        let less = |p: f64, q: f64| w * (p.abs() - q.abs()) + 0.5 * (p - q) * (p + q - 2.0 * center) < 0.0;
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        while (b - a).abs() > 1e-12 {
            if less(c, d) {
                b = d;
            } else {
                a = c;
            }
            c = b - r * (b - a);
            d = a + r * (b - a);
        }
        0.5 * (a + b)
    }

    #[test]
    fn plain_gradient_step() {
        let p = problem(2, ProxTerm::Zero, FeasibleSet::FullSpace);
        let z = p
            .prox_step(&array![2.0, 2.0], &array![1.0, 0.0], &array![0.0, 0.0], 0.5, 0.0)
            .unwrap();
        assert_eq!(z, array![0.0, -1.0]);
    }

    #[test]
    fn anchored_step_matches_first_order_condition() {
        let p = problem(2, ProxTerm::Zero, FeasibleSet::FullSpace);
        let z = p
            .prox_step(&array![2.0, 2.0], &array![1.0, 0.0], &array![0.0, 0.0], 0.5, 1.0)
            .unwrap();
        assert_eq!(z, array![0.0, -0.5]);
    }

    #[test]
    fn l1_step_matches_golden_section() {
        let p = problem(1, ProxTerm::L1 { weight: 1.0 }, FeasibleSet::FullSpace);
        let z = p
            .prox_step(&array![0.0], &array![3.0], &array![0.0], 1.0, 0.0)
            .unwrap();
        let oracle = golden(-10.0, 10.0, 1.0, 3.0);
        assert!((oracle - 2.0).abs() < 1e-9);
        assert!((z[0] - oracle).abs() < 1e-9);
        assert_eq!(z[0], 2.0);
    }

    #[test]
    fn gradient_mapping_examples() {
        let p = problem(2, ProxTerm::Zero, FeasibleSet::FullSpace);
        let (pt, r) = p.gradient_mapping(&array![1.0, 1.0], &array![2.0, 0.0], 0.5).unwrap();
        assert_eq!(pt, array![0.0, 1.0]);
        assert_eq!(r, array![2.0, 0.0]);
        let (_, r) = p.gradient_mapping(&array![1.0, 1.0], &array![0.0, 0.0], 0.5).unwrap();
        assert_eq!(r, array![0.0, 0.0]);

        let p = problem(1, ProxTerm::L1 { weight: 1.0 }, FeasibleSet::FullSpace);
        let (pt, r) = p.gradient_mapping(&array![2.0], &array![0.0], 1.0).unwrap();
        let oracle = golden(-10.0, 10.0, 1.0, 2.0);
        assert!((pt[0] - oracle).abs() < 1e-9);
        assert_eq!(pt[0], 1.0);
        assert_eq!(r[0], 1.0);
    }

    #[test]
    fn bad_stepsizes_are_rejected() {
        let p = problem(1, ProxTerm::Zero, FeasibleSet::FullSpace);
        let v = array![0.0];
        assert!(p.prox_step(&v, &v, &v, 0.0, 0.0).is_err());
        assert!(p.prox_step(&v, &v, &v, 1.0, -1.0).is_err());
        assert!(p.prox_step(&array![f64::NAN], &v, &v, 1.0, 0.0).is_err());
        assert!(p.gradient_mapping(&v, &v, 0.0).is_err());
    }

    #[test]
    fn l1_ball_prox_lands_on_sphere_when_active() {
        let z = l1_ball_prox(&array![5.0, 1.0], 0.5, &array![0.0, 0.0], 1.0);
        assert!((z.dot(&z).sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_ball_intersection_by_multiplier_bisection() {
        let ball = FeasibleSet::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let bx = FeasibleSet::Box {
            lower: vec![0.5, -10.0],
            upper: vec![10.0, 10.0],
        };
        let z = project_intersection(&ball, &bx, &array![-3.0, 3.0]);
        // closest point of the arc {x >= 0.5, |x| <= 1} to (-3, 3)
        let expect = array![0.5, (1.0f64 - 0.25).sqrt()];
        assert!((&z - &expect).iter().all(|v| v.abs() < 1e-9), "{z}");
    }

    #[test]
    fn two_ball_intersection_via_dykstra() {
        let a = FeasibleSet::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let b = FeasibleSet::Ball {
            center: vec![1.5, 0.0],
            radius: 1.0,
        };
        // the upper corner of the lens
        let z = project_intersection(&a, &b, &array![0.75, 3.0]);
        let expect = array![0.75, (1.0f64 - 0.5625).sqrt()];
        assert!((&z - &expect).iter().all(|v| v.abs() < 1e-6), "{z}");
    }
}
