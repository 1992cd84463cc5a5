//! Construction of (ρ, θ) coordinate charts: principal axis search, initial
//! geodesic directions, antipodal continuation and the chart itself, plus the
//! closed-form Gaussian coordinate map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::PotentialField;
use crate::flows::{
    gaussian_flow_compose, normalized_integral_curve, riemannian_arclength, CurveSolution, FieldTag,
};
use crate::geodesics::{geodesic_shoot, GeodesicOptions, GeodesicSolution};
use crate::linalg::{Mat3, Point3, Vec3};
use crate::metric::{dissimilarity_metric, metric_eigensystem, Frame};
use crate::numerics::optimize::default_penalty_schedule;
use crate::numerics::{maximize_with_penalty, minimize_on_sphere, OptimizeOptions, ToleranceConfig};
use crate::scalar::Real;

/// How the Riemannian distance objective is measured from a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DistanceMode<T> {
    /// Along the unit-speed gradient curve until it reaches the critical set.
    ToCriticalSet,
    /// Along the first `T` units of Euclidean length of that curve.
    FixedLength(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordsOptions<T> {
    pub tol: ToleranceConfig<T>,
    pub quad_tol: T,
    pub optimize: OptimizeOptions<T>,
    pub penalty_weights: Vec<T>,
}

impl<T: Real> Default for CoordsOptions<T> {
    fn default() -> Self {
        Self {
            tol: ToleranceConfig::default(),
            quad_tol: T::lit(1e-9).max(T::epsilon() * T::lit(256.0)),
            optimize: OptimizeOptions::default(),
            penalty_weights: default_penalty_schedule(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalAxisResult<T> {
    pub point: Point3<T>,
    pub riemannian_distance: T,
    pub converged: bool,
    pub iterations: usize,
}

/// Riemannian distance from `p` under `mode`.
pub fn manifold_distance<T: Real>(
    u: &impl PotentialField<T>,
    p: Point3<T>,
    mode: DistanceMode<T>,
    opts: &CoordsOptions<T>,
) -> Result<T> {
    let curve = match mode {
        DistanceMode::ToCriticalSet => normalized_integral_curve(u, p, &opts.tol, None)?,
        DistanceMode::FixedLength(len) => {
            crate::flows::integral_curve(u, p, FieldTag::NormalizedGradU, Frame::X, len, &opts.tol)?
        }
    };
    riemannian_arclength(u, &curve, Frame::X, opts.quad_tol)
}

/// Point of least Riemannian distance on the sphere `|p| = radius`, searched
/// locally from `start`.
pub fn find_principal_axis<T: Real>(
    u: &impl PotentialField<T>,
    radius: T,
    start: Point3<T>,
    mode: DistanceMode<T>,
    opts: &CoordsOptions<T>,
) -> Result<PrincipalAxisResult<T>> {
    if !(radius > T::zero()) {
        return Err(Error::InvalidConfig(format!("search radius must be positive, got {radius}")));
    }
    let objective = |p: Point3<T>| manifold_distance(u, p, mode, opts).unwrap_or_else(|_| T::infinity());
    let res = minimize_on_sphere(objective, radius, start, &opts.optimize);
    Ok(PrincipalAxisResult {
        point: res.point,
        riemannian_distance: res.value,
        converged: res.converged && res.value.is_finite(),
        iterations: res.iterations,
    })
}

/// Initial `(v, w)` for θ geodesics at `p`: the smallest-eigenvalue
/// eigenvector of the metric, scaled to `w = 1`, with the sign of `w` flipped
/// where `V·W < 0`. Returns the direction and its negation. Where the
/// transverse metric is isotropic the direction is `(1, 0)`.
pub fn initial_directions<T: Real>(u: &impl PotentialField<T>, frame: Frame, p: Point3<T>) -> Result<([T; 2], [T; 2])> {
    let g = u.gradient(p);
    let m = dissimilarity_metric(g, frame)?;
    let dir = match metric_eigensystem(&m, g) {
        Err(Error::DegenerateTransverse) => [T::one(), T::zero()],
        Err(e) => return Err(e),
        Ok(es) => {
            let (xv, xw) = (es.vectors[0].y, es.vectors[0].z);
            let scale = xv.abs().max(xw.abs());
            if xw.abs() <= T::lit(1e-12) * scale {
                [T::one(), T::zero()]
            } else {
                let (_, j, k) = frame.indices();
                let flip = g[j] * g[k] < T::zero();
                [xv / xw, if flip { -T::one() } else { T::one() }]
            }
        }
    };
    Ok((dir, [-dir[0], -dir[1]]))
}

/// Reflection of `principal` through `critical`, a starting guess for the
/// antipodal search.
pub fn antipodal_hint<T: Real>(principal: Point3<T>, critical: Point3<T>) -> Point3<T> {
    critical * T::two() - principal
}

/// Farthest point from the origin at Riemannian distance `d0`, searched from
/// `start_hint`.
pub fn find_antipodal<T: Real>(
    u: &impl PotentialField<T>,
    d0: T,
    start_hint: Point3<T>,
    opts: &CoordsOptions<T>,
) -> Result<PrincipalAxisResult<T>> {
    if !(d0 > T::zero()) {
        return Err(Error::InvalidConfig(format!("manifold distance must be positive, got {d0}")));
    }
    let distance = |p: Point3<T>| manifold_distance(u, p, DistanceMode::ToCriticalSet, opts).unwrap_or_else(|_| T::infinity());
    let mut optimize = opts.optimize;
    optimize.initial_step = optimize.initial_step * T::lit(10.0).max(start_hint.norm() * T::lit(0.05));
    let res = maximize_with_penalty(|p| p.norm_squared(), |p| distance(p) - d0, start_hint, &optimize, &opts.penalty_weights);
    let d = distance(res.point);
    Ok(PrincipalAxisResult {
        point: res.point,
        riemannian_distance: d,
        converged: res.converged && d.is_finite(),
        iterations: res.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    EuclideanEven,
    RiemannianEven,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartOptions<T> {
    pub coords: CoordsOptions<T>,
    pub frame: Frame,
    pub n_theta: usize,
    pub n_rho: usize,
    pub spacing: Spacing,
    /// Riemannian length cap for each θ geodesic; `None` uses `2π` times the
    /// seed's distance from the end of the ρ curve.
    pub theta_length: Option<T>,
    pub geodesic_time: T,
}

impl<T: Real> Default for ChartOptions<T> {
    fn default() -> Self {
        Self {
            coords: CoordsOptions::default(),
            frame: Frame::X,
            n_theta: 8,
            n_rho: 8,
            spacing: Spacing::EuclideanEven,
            theta_length: None,
            geodesic_time: T::lit(1e6),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThetaCurve<T> {
    /// Index of the seed along the ρ curve, 0 at the anchor.
    pub seed_index: usize,
    /// Euclidean arc length of the seed along the ρ curve.
    pub seed_position: T,
    pub seed: Point3<T>,
    /// +1 for the returned direction, -1 for its negation.
    pub orientation: i8,
    pub v0: T,
    pub w0: T,
    pub geodesic: Result<GeodesicSolution<T>>,
}

#[derive(Debug, Clone)]
pub struct RhoCurve<T> {
    pub seed_index: usize,
    pub orientation: i8,
    /// Riemannian arc length of the seed along the outermost θ geodesic.
    pub seed_position: T,
    pub seed: Point3<T>,
    pub curve: Result<CurveSolution<T>>,
}

#[derive(Debug, Clone)]
pub struct CoordinateChart<T> {
    pub anchor: Point3<T>,
    pub frame: Frame,
    pub spacing: Spacing,
    pub rho_curve: CurveSolution<T>,
    pub theta_curves: Vec<ThetaCurve<T>>,
    pub rho_curves: Vec<RhoCurve<T>>,
}

/// Arc-length positions along the ρ curve at which θ curves are seeded.
fn rho_seed_positions<T: Real>(
    u: &impl PotentialField<T>,
    rho: &CurveSolution<T>,
    n: usize,
    spacing: Spacing,
    quad_tol: T,
) -> Result<Vec<T>> {
    let len = rho.t_end();
    let frac = |k: usize| T::lit(k as f64) / T::lit(n as f64);
    match spacing {
        Spacing::EuclideanEven => Ok((0..n).map(|k| len * frac(k)).collect()),
        Spacing::RiemannianEven => {
            // cumulative Riemannian length at the knots, then bisection inside
            let mut cum = vec![T::zero()];
            let integrand = |t: T| u.gradient(rho.point(t)).norm();
            for (a, b) in rho.ode.intervals() {
                let seg = crate::numerics::quadrature(integrand, a, b, quad_tol)?;
                cum.push(*cum.last().expect("non-empty") + seg);
            }
            let total = *cum.last().expect("non-empty");
            let times = &rho.ode.times;
            let mut out = Vec::with_capacity(n);
            for k in 0..n {
                let target = total * frac(k);
                let i = cum.partition_point(|c| *c < target).clamp(1, cum.len() - 1);
                let (mut lo, mut hi) = (times[i - 1], times[i]);
                let base = cum[i - 1];
                for _ in 0..100 {
                    let mid = lo + (hi - lo) * T::half();
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let part = crate::numerics::quadrature(integrand, times[i - 1], mid, quad_tol)?;
                    if base + part < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(if k == 0 { T::zero() } else { hi });
            }
            Ok(out)
        }
    }
}

/// Builds the ρ curve from `anchor`, θ geodesics seeded along it in both
/// orientations, and ρ curves seeded along the outermost θ geodesics.
/// Failures of individual curves are recorded, not propagated.
pub fn build_rho_theta_surface<T: Real>(
    u: &impl PotentialField<T>,
    anchor: Point3<T>,
    opts: &ChartOptions<T>,
) -> Result<CoordinateChart<T>> {
    if opts.n_theta == 0 {
        return Err(Error::InvalidConfig("n_theta must be at least 1".into()));
    }
    let co = &opts.coords;
    let rho_curve = normalized_integral_curve(u, anchor, &co.tol, None)?;
    let critical = rho_curve.end_point();
    let positions = rho_seed_positions(u, &rho_curve, opts.n_theta, opts.spacing, co.quad_tol)?;

    let jobs: Vec<(usize, T, i8)> =
        positions.iter().enumerate().flat_map(|(i, &s)| [(i, s, 1i8), (i, s, -1i8)]).collect();
    let theta_curves: Vec<ThetaCurve<T>> = jobs
        .par_iter()
        .map(|&(seed_index, seed_position, orientation)| {
            let seed = rho_curve.point(seed_position);
            let (dir, neg) = match initial_directions(u, opts.frame, seed) {
                Ok(d) => d,
                Err(e) => {
                    return ThetaCurve {
                        seed_index,
                        seed_position,
                        seed,
                        orientation,
                        v0: T::nan(),
                        w0: T::nan(),
                        geodesic: Err(e),
                    }
                }
            };
            let [v0, w0] = if orientation > 0 { dir } else { neg };
            let cap = opts.theta_length.unwrap_or_else(|| T::two() * T::PI() * (seed - critical).norm());
            let gopts = GeodesicOptions { tol: co.tol, max_arclength: Some(cap), ..GeodesicOptions::default() };
            let geodesic = geodesic_shoot(u, opts.frame, seed, v0, w0, opts.geodesic_time, &gopts);
            ThetaCurve { seed_index, seed_position, seed, orientation, v0, w0, geodesic }
        })
        .collect();

    let mut rho_jobs: Vec<(usize, i8, T, Point3<T>)> = Vec::new();
    for outer in theta_curves.iter().filter(|c| c.seed_index == 0) {
        let Ok(geo) = &outer.geodesic else { continue };
        let total = geo.total_arclength();
        for k in 1..=opts.n_rho {
            let s = total * T::lit(k as f64) / T::lit(opts.n_rho as f64);
            if let Some(t) = geo.time_at_arclength(s) {
                rho_jobs.push((k, outer.orientation, s, geo.gamma(t)));
            }
        }
    }
    let rho_curves = rho_jobs
        .par_iter()
        .map(|&(seed_index, orientation, seed_position, seed)| RhoCurve {
            seed_index,
            orientation,
            seed_position,
            seed,
            curve: normalized_integral_curve(u, seed, &co.tol, None),
        })
        .collect();

    Ok(CoordinateChart { anchor, frame: opts.frame, spacing: opts.spacing, rho_curve, theta_curves, rho_curves })
}

/// Jacobian of `(ρ, θ, φ) ↦ (x, y, z)` for the axis-aligned Gaussian at the
/// image point `p`.
pub fn gaussian_jacobian<T: Real>(p: Point3<T>, rho: T, a: T, b: T, c: T) -> Mat3<T> {
    let z = T::zero();
    Mat3::from_cols(p / rho, Vec3::new(b * p.y, -a * p.x, z), Vec3::new(c * p.z, z, -a * p.x))
}

/// Closed-form point with coordinates `(ρ, s, t)` for the axis-aligned
/// Gaussian.
pub fn gaussian_coords_to_point<T: Real>(rho: T, s: T, t: T, a: T, b: T, c: T) -> Point3<T> {
    gaussian_flow_compose(rho, s, t, a, b, c)
}
