//! Geodesics on the level surfaces of U: the energy `½ (v,w) G_Θ (v,w)ᵀ`
//! minimized subject to `γ' = vV + wW`, in first-order form.
//!
//! State `(γ, λ)` with `λ` the constraint multiplier. Stationarity in `(v, w)`
//! gives `G_Θ (v, w)ᵀ = (λ·V, λ·W)ᵀ`; stationarity in `γ` gives
//! `λ'_k = (γ' - λ) · (v ∂_k V + w ∂_k W)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::PotentialField;
use crate::linalg::{Point3, Vec3};
use crate::metric::{frame_vector_derivatives, frame_vectors, Frame, TangentBasis};
use crate::numerics::{integrate_ode, linsolve2, OdeSolution, StopReason, ToleranceConfig};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicState<T> {
    pub gamma: Point3<T>,
    pub lambda: Vec3<T>,
    pub v: T,
    pub w: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SingularityReason {
    AxisComponentSmall,
    TangentCoefficientsLarge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularityThresholds<T> {
    /// Smallest admissible `|g_axis| / |∇U|`.
    pub axis_rel: T,
    /// Largest admissible `√(v² + w²)`.
    pub max_coeff: T,
}

impl<T: Real> Default for SingularityThresholds<T> {
    fn default() -> Self {
        Self { axis_rel: T::lit(1e-3), max_coeff: T::lit(1e6) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicOptions<T> {
    pub tol: ToleranceConfig<T>,
    pub thresholds: SingularityThresholds<T>,
    /// Stop once this Riemannian arc length is reached.
    pub max_arclength: Option<T>,
}

impl<T: Real> Default for GeodesicOptions<T> {
    fn default() -> Self {
        Self { tol: ToleranceConfig::default(), thresholds: SingularityThresholds::default(), max_arclength: None }
    }
}

/// Tangent coefficients `(v, w)` solving `G_Θ (v, w)ᵀ = Bᵀλ`.
pub fn tangent_coefficients<T: Real>(basis: &TangentBasis<T>, lambda: Vec3<T>) -> Result<(T, T)> {
    let [v, w] = linsolve2(&basis.gram(), [lambda.dot(basis.v), lambda.dot(basis.w)])?;
    Ok((v, w))
}

/// Full state (with `v`, `w`) at a point of phase space.
pub fn geodesic_state<T: Real>(
    u: &impl PotentialField<T>,
    frame: Frame,
    gamma: Point3<T>,
    lambda: Vec3<T>,
) -> Result<GeodesicState<T>> {
    let g = u.gradient(gamma);
    if g.norm_squared() == T::zero() {
        return Err(Error::ZeroGradient);
    }
    let (v, w) = tangent_coefficients(&frame_vectors(g, frame), lambda)?;
    Ok(GeodesicState { gamma, lambda, v, w })
}

/// Time derivative `(γ', λ')` at `state`; `v` and `w` are re-solved from `λ`.
pub fn el_rhs<T: Real>(
    u: &impl PotentialField<T>,
    frame: Frame,
    state: &GeodesicState<T>,
) -> Result<(Vec3<T>, Vec3<T>)> {
    let g = u.gradient(state.gamma);
    if g.norm_squared() == T::zero() {
        return Err(Error::ZeroGradient);
    }
    let basis = frame_vectors(g, frame);
    let (v, w) = tangent_coefficients(&basis, state.lambda)?;
    let dgamma = basis.combine(v, w);
    let d = frame_vector_derivatives(&u.hessian(state.gamma), frame);
    let diff = dgamma - state.lambda;
    let dlambda = Vec3::new(
        diff.dot(d[0].combine(v, w)),
        diff.dot(d[1].combine(v, w)),
        diff.dot(d[2].combine(v, w)),
    );
    Ok((dgamma, dlambda))
}

/// First condition that makes the frame unusable at `state`, if any.
pub fn detect_singularity<T: Real>(
    u: &impl PotentialField<T>,
    frame: Frame,
    state: &GeodesicState<T>,
    thresholds: &SingularityThresholds<T>,
) -> Option<SingularityReason> {
    let g = u.gradient(state.gamma);
    let gn = g.norm();
    if !(gn > T::zero()) || g[frame.axis()].abs() < thresholds.axis_rel * gn {
        return Some(SingularityReason::AxisComponentSmall);
    }
    let m = thresholds.max_coeff;
    if !(state.v * state.v + state.w * state.w <= m * m) {
        return Some(SingularityReason::TangentCoefficientsLarge);
    }
    None
}

/// One shot geodesic; state layout `[γ, λ, s]` with `s` the Riemannian arc
/// length.
#[derive(Debug, Clone)]
pub struct GeodesicSolution<T> {
    pub ode: OdeSolution<T, 7>,
    pub frame: Frame,
    pub x0: Point3<T>,
    pub v0: T,
    pub w0: T,
    pub singular: Option<SingularityReason>,
    pub singular_location: Option<Point3<T>>,
}

fn unpack<T: Real>(y: &[T; 7]) -> (Point3<T>, Vec3<T>, T) {
    (Vec3::new(y[0], y[1], y[2]), Vec3::new(y[3], y[4], y[5]), y[6])
}

impl<T: Real> GeodesicSolution<T> {
    pub fn gamma(&self, t: T) -> Point3<T> {
        unpack(&self.ode.interpolate(t)).0
    }

    /// Riemannian arc length reached at `t`.
    pub fn arclength(&self, t: T) -> T {
        unpack(&self.ode.interpolate(t)).2
    }

    pub fn total_arclength(&self) -> T {
        self.ode.final_state()[6]
    }

    pub fn t_end(&self) -> T {
        self.ode.t_end()
    }

    pub fn end_point(&self) -> Point3<T> {
        unpack(&self.ode.final_state()).0
    }

    pub fn stop_reason(&self) -> StopReason {
        self.ode.stop_reason
    }

    /// Full state at `t`, re-solving `(v, w)`.
    pub fn state(&self, u: &impl PotentialField<T>, t: T) -> Result<GeodesicState<T>> {
        let (gamma, lambda, _) = unpack(&self.ode.interpolate(t));
        geodesic_state(u, self.frame, gamma, lambda)
    }

    /// `½ (v, w) G_Θ (v, w)ᵀ = ½ |γ'|²` at `t`.
    pub fn energy(&self, u: &impl PotentialField<T>, t: T) -> Result<T> {
        let s = self.state(u, t)?;
        let b = frame_vectors(u.gradient(s.gamma), self.frame);
        Ok(T::half() * b.combine(s.v, s.w).norm_squared())
    }

    /// Time at which the arc length first reaches `s` (bisection on the
    /// dense output); `None` beyond the solved range.
    pub fn time_at_arclength(&self, s: T) -> Option<T> {
        if s < T::zero() || s > self.total_arclength() {
            return None;
        }
        let (mut lo, mut hi) = (self.ode.t_start(), self.t_end());
        for _ in 0..200 {
            let mid = lo + (hi - lo) * T::half();
            if mid <= lo || mid >= hi {
                break;
            }
            if self.arclength(mid) < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi)
    }
}

/// Shoots the geodesic from `x0` with initial tangent coefficients
/// `(v0, w0)` up to time `t_end`, an arc-length cap, or a singularity.
pub fn geodesic_shoot<T: Real>(
    u: &impl PotentialField<T>,
    frame: Frame,
    x0: Point3<T>,
    v0: T,
    w0: T,
    t_end: T,
    opts: &GeodesicOptions<T>,
) -> Result<GeodesicSolution<T>> {
    opts.tol.validate()?;
    let g0 = u.gradient(x0);
    if g0.norm_squared() == T::zero() {
        return Err(Error::ZeroGradient);
    }
    if g0[frame.axis()] == T::zero() {
        return Err(Error::FrameSingular);
    }
    let basis = frame_vectors(g0, frame);
    let lambda0 = basis.combine(v0, w0);
    let mut y0 = [T::zero(); 7];
    y0[..3].copy_from_slice(&x0.to_array());
    y0[3..6].copy_from_slice(&lambda0.to_array());

    let phase = |y: &[T; 7]| -> Option<GeodesicState<T>> {
        let (gamma, lambda, _) = unpack(y);
        geodesic_state(u, frame, gamma, lambda).ok()
    };
    let rhs = |_, y: &[T; 7]| -> Option<[T; 7]> {
        let st = phase(y)?;
        let (dg, dl) = el_rhs(u, frame, &st).ok()?;
        Some([dg.x, dg.y, dg.z, dl.x, dl.y, dl.z, dg.norm()])
    };
    let thresholds = opts.thresholds;
    let cap = opts.max_arclength;
    // P keeps the sign it has at x0 until the frame breaks down; testing the
    // signed value catches steps that jump across the thin band |P| < ε|∇U|
    let axis_sign = g0[frame.axis()].signum();
    let stop = |y: &[T; 7]| -> bool {
        if cap.is_some_and(|c| y[6] >= c) {
            return true;
        }
        let g = u.gradient(unpack(y).0);
        if g[frame.axis()] * axis_sign < thresholds.axis_rel * g.norm() {
            return true;
        }
        match phase(y) {
            Some(st) => detect_singularity(u, frame, &st, &thresholds).is_some(),
            None => true,
        }
    };
    let ode = integrate_ode(rhs, y0, (T::zero(), t_end), &opts.tol, Some(stop));

    let last = ode.final_state();
    let (singular, singular_location) = match ode.stop_reason {
        StopReason::SingularityStop => (Some(SingularityReason::AxisComponentSmall), Some(unpack(&last).0)),
        StopReason::EventStop => {
            let g = u.gradient(unpack(&last).0);
            let reason = if g[frame.axis()] * axis_sign < thresholds.axis_rel * g.norm() {
                Some(SingularityReason::AxisComponentSmall)
            } else {
                match phase(&last) {
                    Some(st) => detect_singularity(u, frame, &st, &thresholds),
                    None => Some(SingularityReason::AxisComponentSmall),
                }
            };
            (reason, reason.map(|_| unpack(&last).0))
        }
        _ => (None, None),
    };
    Ok(GeodesicSolution { ode, frame, x0, v0, w0, singular, singular_location })
}
