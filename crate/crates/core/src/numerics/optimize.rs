//! Derivative-free local optimization: Nelder–Mead, a sphere-constrained
//! variant over a local angle chart, and quadratic-penalty continuation.

use crate::error::{Error, Result};
use crate::linalg::{Point3, Vec3};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions<T> {
    /// Simplex size (max coordinate distance from the best vertex) at which
    /// the search stops.
    pub tol: T,
    pub max_iter: usize,
    /// Edge length of the initial simplex, in the search parameters' units.
    pub initial_step: T,
    /// Fresh-simplex restarts from the converged point; guards against
    /// collapsed simplices.
    pub restarts: usize,
}

impl<T: Real> Default for OptimizeOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-8).max(T::epsilon().sqrt()), max_iter: 20_000, initial_step: T::lit(0.1), restarts: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeResult<T, X> {
    pub point: X,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

impl<T, X> OptimizeResult<T, X> {
    /// The point if the search converged, `NonConvergence` otherwise.
    pub fn into_result(self) -> Result<X> {
        if self.converged {
            Ok(self.point)
        } else {
            Err(Error::NonConvergence { iterations: self.iterations })
        }
    }
}

fn eval_safe<T: Real, const D: usize>(f: &impl Fn(&[T; D]) -> T, x: &[T; D]) -> T {
    let v = f(x);
    if v.is_nan() {
        T::infinity()
    } else {
        v
    }
}

fn nm_run<T: Real, const D: usize>(
    f: &impl Fn(&[T; D]) -> T,
    x0: [T; D],
    step: [T; D],
    tol: T,
    max_iter: usize,
) -> (OptimizeResult<T, [T; D]>, usize) {
    let (alpha, gamma, rho, sigma) = (T::one(), T::two(), T::half(), T::half());
    let mut simplex: Vec<([T; D], T)> = Vec::with_capacity(D + 1);
    simplex.push((x0, eval_safe(f, &x0)));
    for i in 0..D {
        let mut x = x0;
        x[i] = x[i] + step[i];
        simplex.push((x, eval_safe(f, &x)));
    }
    let mut iters = 0;
    let mut converged = false;
    let inv_d = T::one() / T::lit(D as f64);
    while iters < max_iter {
        // stable sort keeps ties in insertion order
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].0;
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(best.iter()).map(|(a, b)| (*a - *b).abs()))
            .fold(T::zero(), T::max);
        if size <= tol {
            converged = true;
            break;
        }
        iters += 1;
        let mut centroid = [T::zero(); D];
        for (x, _) in &simplex[..D] {
            for i in 0..D {
                centroid[i] = centroid[i] + x[i] * inv_d;
            }
        }
        let worst = simplex[D];
        let toward = |t: T| -> [T; D] { std::array::from_fn(|i| centroid[i] + t * (worst.0[i] - centroid[i])) };
        let xr = toward(-alpha);
        let fr = eval_safe(f, &xr);
        if fr < simplex[0].1 {
            let xe = toward(-alpha * gamma);
            let fe = eval_safe(f, &xe);
            simplex[D] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[D - 1].1 {
            simplex[D] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = toward(-alpha * rho);
            (xc, eval_safe(f, &xc))
        } else {
            let xc = toward(rho);
            (xc, eval_safe(f, &xc))
        };
        if fc < worst.1.min(fr) {
            simplex[D] = (xc, fc);
            continue;
        }
        let b = simplex[0].0;
        for v in simplex.iter_mut().skip(1) {
            let x: [T; D] = std::array::from_fn(|i| b[i] + sigma * (v.0[i] - b[i]));
            *v = (x, eval_safe(f, &x));
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    (OptimizeResult { point: simplex[0].0, value: simplex[0].1, iterations: iters, converged }, iters)
}

/// Nelder–Mead minimization with restarts; deterministic.
pub fn nelder_mead<T: Real, const D: usize>(
    f: impl Fn(&[T; D]) -> T,
    x0: [T; D],
    opts: &OptimizeOptions<T>,
) -> OptimizeResult<T, [T; D]> {
    let mut step = [opts.initial_step; D];
    let (mut res, mut total) = nm_run(&f, x0, step, opts.tol, opts.max_iter);
    for _ in 0..opts.restarts {
        if !res.converged {
            break;
        }
        step = step.map(|s| (s * T::lit(0.1)).max(opts.tol * T::lit(10.0)));
        let (again, it) = nm_run(&f, res.point, step, opts.tol, opts.max_iter.saturating_sub(total));
        total += it;
        if again.value < res.value {
            res = again;
        } else {
            break;
        }
    }
    res.iterations = total;
    res
}

/// Orthonormal chart of the sphere of radius `radius` about the origin,
/// centred on the direction of `start`.
#[derive(Debug, Clone, Copy)]
pub struct SphereChart<T> {
    e0: Vec3<T>,
    e1: Vec3<T>,
    e2: Vec3<T>,
    radius: T,
}

impl<T: Real> SphereChart<T> {
    pub fn new(start: Point3<T>, radius: T) -> Self {
        let e0 = if start.norm() > T::zero() { start.normalized() } else { Vec3::unit(0) };
        let e1 = e0.any_orthonormal();
        let e2 = e0.cross(e1);
        Self { e0, e1, e2, radius }
    }

    /// Point at chart angles `(α, β)`; `(0, 0)` is the chart centre.
    pub fn point(&self, a: [T; 2]) -> Point3<T> {
        let (sa, ca) = a[0].sin_cos();
        let (sb, cb) = a[1].sin_cos();
        let dir = self.e0 * (ca * cb) + self.e1 * (sa * cb) + self.e2 * sb;
        dir.normalized() * self.radius
    }
}

/// Local minimizer of `objective` on the sphere `|p| = radius`.
pub fn minimize_on_sphere<T: Real>(
    objective: impl Fn(Point3<T>) -> T,
    radius: T,
    start: Point3<T>,
    opts: &OptimizeOptions<T>,
) -> OptimizeResult<T, Point3<T>> {
    let chart = SphereChart::new(start, radius);
    let res = nelder_mead(|a: &[T; 2]| objective(chart.point(*a)), [T::zero(); 2], opts);
    let mut point = chart.point(res.point);
    let mut value = objective(point);
    if res.converged {
        for _ in 0..2 {
            let local = SphereChart::new(point, radius);
            match newton_polish(&|a: &[T; 2]| objective(local.point(*a)), value) {
                Some((a, v)) => {
                    point = local.point(a);
                    value = v;
                }
                None => break,
            }
        }
    }
    OptimizeResult { point, value, iterations: res.iterations, converged: res.converged }
}

/// One Newton step from the origin of a 2-D chart using a central-difference
/// gradient and Hessian. Simplex searches stall at about √ε relative
/// accuracy on smooth minima; this recovers most of the rest. Returns `None`
/// when the local model is not convex or the step does not help.
fn newton_polish<T: Real>(f: &impl Fn(&[T; 2]) -> T, f0: T) -> Option<([T; 2], T)> {
    let h = T::lit(1e-5).max(T::epsilon().sqrt() * T::lit(10.0));
    let z = T::zero();
    let at = |a: T, b: T| f(&[a, b]);
    let (fp0, fm0, f0p, f0m) = (at(h, z), at(-h, z), at(z, h), at(z, -h));
    let (fpp, fpm, fmp, fmm) = (at(h, h), at(h, -h), at(-h, h), at(-h, -h));
    let two_h = T::two() * h;
    let h2 = h * h;
    let g = [(fp0 - fm0) / two_h, (f0p - f0m) / two_h];
    let h00 = (fp0 - T::two() * f0 + fm0) / h2;
    let h11 = (f0p - T::two() * f0 + f0m) / h2;
    let h01 = (fpp - fpm - fmp + fmm) / (T::lit(4.0) * h2);
    let det = h00 * h11 - h01 * h01;
    if !(h00 > z && det > z) {
        return None;
    }
    let step = [-(h11 * g[0] - h01 * g[1]) / det, -(h00 * g[1] - h01 * g[0]) / det];
    let len = (step[0] * step[0] + step[1] * step[1]).sqrt();
    if !len.is_finite() || len > T::lit(10.0) * h || len == z {
        return None;
    }
    let fv = f(&step);
    (fv <= f0 + T::lit(16.0) * T::epsilon() * f0.abs()).then_some((step, fv))
}

/// Default penalty weights: 1, 10, …, 10⁸.
pub fn default_penalty_schedule<T: Real>() -> Vec<T> {
    (0..=8).map(|k| T::lit(10f64.powi(k))).collect()
}

/// Maximizes `objective` subject to `constraint(p) = 0` by minimizing
/// `-objective + μ constraint²` for each `μ` in `weights`, warm-starting each
/// stage from the previous one.
pub fn maximize_with_penalty<T: Real>(
    objective: impl Fn(Point3<T>) -> T,
    constraint: impl Fn(Point3<T>) -> T,
    start: Point3<T>,
    opts: &OptimizeOptions<T>,
    weights: &[T],
) -> OptimizeResult<T, Point3<T>> {
    let mut x = start.to_array();
    let mut iterations = 0;
    let mut converged = true;
    let mut stage_opts = *opts;
    for &mu in weights {
        let res = nelder_mead(
            |p: &[T; 3]| {
                let q = Vec3::from(*p);
                let c = constraint(q);
                -objective(q) + mu * c * c
            },
            x,
            &stage_opts,
        );
        x = res.point;
        iterations += res.iterations;
        converged = res.converged;
        // later stages only polish
        stage_opts.initial_step = (stage_opts.initial_step * T::half()).max(opts.tol * T::lit(100.0));
    }
    let point = Vec3::from(x);
    OptimizeResult { point, value: objective(point), iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> OptimizeOptions<f64> {
        OptimizeOptions::default()
    }

    #[test]
    fn rosenbrock() {
        let r = nelder_mead(|x: &[f64; 2]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2), [-1.2, 1.0], &opts());
        assert!(r.converged);
        assert!((r.point[0] - 1.0).abs() < 1e-6 && (r.point[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sphere_minimize_height() {
        let r = minimize_on_sphere(|p| p.z, 1.0, Vec3::new(0.1, 0.05, 1.0), &opts());
        assert!(r.converged);
        assert!((r.point - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-6, "{:?}", r.point);
    }

    #[test]
    fn sphere_minimize_distance() {
        let target = Vec3::new(1.0, 0.0, 0.0);
        let r = minimize_on_sphere(|p| (p - target).norm_squared(), 1.0, Vec3::new(0.3, 0.8, -0.2), &opts());
        assert!((r.point - target).norm() < 1e-6);
    }

    #[test]
    fn sphere_minimum_beyond_simplex_resolution() {
        // a large constant offset hides the minimum from value comparisons
        // below √ε; the Newton polish still locates it
        let target = Vec3::new(2.0, -1.0, 2.0).normalized();
        let r = minimize_on_sphere(|p| 50.0 + (p - target).norm_squared(), 1.0, Vec3::new(1.0, 0.0, 0.0), &opts());
        assert!((r.point - target).norm() < 1e-9, "{:?}", r.point);
    }

    #[test]
    fn sphere_result_exactly_on_sphere() {
        for &rad in &[1e-3, 1.0, 10.0, 500f64.sqrt(), 1e4] {
            let r = minimize_on_sphere(|p| p.x + 2.0 * p.y, rad, Vec3::new(1.0, 1.0, 1.0), &opts());
            assert!((r.point.norm() - rad).abs() <= 1e-12 * rad);
        }
    }

    #[test]
    fn penalty_max_x_on_unit_sphere() {
        let r = maximize_with_penalty(
            |p| p.x,
            |p| p.norm_squared() - 1.0,
            Vec3::new(0.9, 0.1, 0.0),
            &opts(),
            &default_penalty_schedule(),
        );
        assert!((r.point - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-4, "{:?}", r.point);
    }

    #[test]
    fn penalty_degenerate_objective_hits_constraint() {
        let r = maximize_with_penalty(
            |p| p.norm_squared(),
            |p| p.norm_squared() - 4.0,
            Vec3::new(1.0, 0.5, 0.2),
            &opts(),
            &default_penalty_schedule(),
        );
        assert!((r.point.norm() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let o = OptimizeOptions { max_iter: 3, restarts: 0, ..opts() };
        let r = nelder_mead(|x: &[f64; 2]| x[0] * x[0] + x[1] * x[1], [5.0, 5.0], &o);
        assert!(!r.converged);
        assert!(matches!(r.into_result(), Err(Error::NonConvergence { .. })));
    }
}
