//! Integral curves of ∇U and of the tangential fields, unit-speed gradient
//! curves, Riemannian arc length and the closed-form Gaussian flows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::PotentialField;
use crate::linalg::{Point3, Vec3};
use crate::metric::{dissimilarity_metric, frame_vectors, Frame};
use crate::numerics::quadrature::quadrature;
use crate::numerics::{integrate_ode, OdeSolution, StopReason, ToleranceConfig};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldTag {
    GradU,
    V,
    W,
    NormalizedGradU,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parametrization {
    FlowTime,
    EuclideanArcLength,
}

/// A sampled curve in R³ with dense interpolation.
#[derive(Debug, Clone)]
pub struct CurveSolution<T> {
    pub ode: OdeSolution<T, 3>,
    pub parametrization: Parametrization,
    pub origin: Point3<T>,
    pub field: FieldTag,
    pub frame: Frame,
}

impl<T: Real> CurveSolution<T> {
    pub fn point(&self, t: T) -> Point3<T> {
        Vec3::from(self.ode.interpolate(t))
    }

    pub fn end_point(&self) -> Point3<T> {
        Vec3::from(self.ode.final_state())
    }

    pub fn t_end(&self) -> T {
        self.ode.t_end()
    }

    pub fn stop_reason(&self) -> StopReason {
        self.ode.stop_reason
    }

    /// Knots as `(t, point)` pairs.
    pub fn knots(&self) -> impl Iterator<Item = (T, Point3<T>)> + '_ {
        self.ode.times.iter().zip(&self.ode.states).map(|(t, s)| (*t, Vec3::from(*s)))
    }
}

/// The vector field named by `tag` at `p`; `None` where it is undefined.
pub fn field_value<T: Real>(u: &impl PotentialField<T>, tag: FieldTag, frame: Frame, p: Point3<T>) -> Option<Vec3<T>> {
    let g = u.gradient(p);
    match tag {
        FieldTag::GradU => Some(g),
        FieldTag::V => Some(frame_vectors(g, frame).v),
        FieldTag::W => Some(frame_vectors(g, frame).w),
        FieldTag::NormalizedGradU => {
            let n = g.norm();
            (n > T::zero()).then(|| g / n)
        }
    }
}

/// Solves `γ' = F(γ)` on `[0, t_end]` for the tagged field.
pub fn integral_curve<T: Real>(
    u: &impl PotentialField<T>,
    x0: Point3<T>,
    field: FieldTag,
    frame: Frame,
    t_end: T,
    tol: &ToleranceConfig<T>,
) -> Result<CurveSolution<T>> {
    tol.validate()?;
    if field != FieldTag::GradU && u.gradient(x0).norm_squared() == T::zero() {
        return Err(Error::ZeroGradient);
    }
    let ode = integrate_ode(
        |_, y: &[T; 3]| field_value(u, field, frame, Vec3::from(*y)).map(Vec3::to_array),
        x0.to_array(),
        (T::zero(), t_end),
        tol,
        None::<fn(&[T; 3]) -> bool>,
    );
    let parametrization =
        if field == FieldTag::NormalizedGradU { Parametrization::EuclideanArcLength } else { Parametrization::FlowTime };
    Ok(CurveSolution { ode, parametrization, origin: x0, field, frame })
}

/// Default gradient-magnitude stop for unit-speed gradient curves.
pub fn default_stop_grad<T: Real>(grad_norm_at_start: T) -> T {
    T::lit(1e-6) * grad_norm_at_start
}

/// Unit-speed curve along ∇U from `x0`, stopped when `|∇U| ≤ stop_grad`
/// (default `10⁻⁶ |∇U(x0)|`).
pub fn normalized_integral_curve<T: Real>(
    u: &impl PotentialField<T>,
    x0: Point3<T>,
    tol: &ToleranceConfig<T>,
    stop_grad: Option<T>,
) -> Result<CurveSolution<T>> {
    tol.validate()?;
    let g0 = u.gradient(x0).norm();
    let stop = stop_grad.unwrap_or_else(|| default_stop_grad(g0));
    if g0 == T::zero() || g0 <= stop {
        return Err(Error::ZeroGradient);
    }
    // a unit-speed curve cannot be longer than the budget of steps allows;
    // the horizon only needs to exceed any reachable length
    let horizon = T::lit(1e9) * (T::one() + x0.norm());
    let ode = integrate_ode(
        |_, y: &[T; 3]| field_value(u, FieldTag::NormalizedGradU, Frame::X, Vec3::from(*y)).map(Vec3::to_array),
        x0.to_array(),
        (T::zero(), horizon),
        tol,
        Some(|y: &[T; 3]| u.gradient(Vec3::from(*y)).norm() <= stop),
    );
    Ok(CurveSolution {
        ode,
        parametrization: Parametrization::EuclideanArcLength,
        origin: x0,
        field: FieldTag::NormalizedGradU,
        frame: Frame::X,
    })
}

/// `∫ √g₀₀(γ) |γ'| dt` along the curve, with `g₀₀` taken from `frame`.
pub fn riemannian_arclength<T: Real>(
    u: &impl PotentialField<T>,
    curve: &CurveSolution<T>,
    frame: Frame,
    tol: T,
) -> Result<T> {
    let integrand = |t: T| -> T {
        let p = curve.point(t);
        let g = u.gradient(p);
        let g00 = match dissimilarity_metric(g, frame) {
            Ok(m) => m.g00(),
            Err(_) => return T::zero(),
        };
        let speed = match curve.parametrization {
            Parametrization::EuclideanArcLength => T::one(),
            Parametrization::FlowTime => {
                field_value(u, curve.field, curve.frame, p).map(|f| f.norm()).unwrap_or_else(T::zero)
            }
        };
        g00.sqrt() * speed
    };
    let mut total = T::zero();
    for (a, b) in curve.ode.intervals() {
        total = total + quadrature(integrand, a, b, tol)?;
    }
    Ok(total)
}

/// Riemannian distance from `p` to the critical set reached by the
/// unit-speed gradient curve.
pub fn distance_to_critical_set<T: Real>(u: &impl PotentialField<T>, p: Point3<T>, tol: &ToleranceConfig<T>) -> Result<T> {
    let curve = normalized_integral_curve(u, p, tol, None)?;
    riemannian_arclength(u, &curve, Frame::X, tol.rel_tol)
}

/// Riemannian length of the first `t_end` units of the unit-speed gradient
/// curve from `p`.
pub fn distance_fixed_length<T: Real>(
    u: &impl PotentialField<T>,
    p: Point3<T>,
    t_end: T,
    tol: &ToleranceConfig<T>,
) -> Result<T> {
    let curve = integral_curve(u, p, FieldTag::NormalizedGradU, Frame::X, t_end, tol)?;
    riemannian_arclength(u, &curve, Frame::X, tol.rel_tol)
}

/// Gradient flow of `-½(ax² + by² + cz²)` from `x0`.
pub fn gaussian_rho_hat<T: Real>(x0: Point3<T>, a: T, b: T, c: T, t: T) -> Point3<T> {
    Vec3::new(x0.x * (-a * t).exp(), x0.y * (-b * t).exp(), x0.z * (-c * t).exp())
}

/// Flow of `V = (by, -ax, 0)` from `x1`.
pub fn gaussian_theta_hat<T: Real>(x1: Point3<T>, a: T, b: T, t: T) -> Point3<T> {
    let (s, c) = ((a * b).sqrt() * t).sin_cos();
    Vec3::new(x1.x * c + x1.y * (b / a).sqrt() * s, x1.y * c - x1.x * (a / b).sqrt() * s, x1.z)
}

/// Flow of `W = (cz, 0, -ax)` from `x2`.
pub fn gaussian_phi_hat<T: Real>(x2: Point3<T>, a: T, c: T, t: T) -> Point3<T> {
    let (s, co) = ((a * c).sqrt() * t).sin_cos();
    Vec3::new(x2.x * co + x2.z * (c / a).sqrt() * s, x2.y, x2.z * co - x2.x * (a / c).sqrt() * s)
}

/// The θ-flow for time `s` applied after the φ-flow for time `t`, starting
/// from `(ρ, 0, 0)`.
pub fn gaussian_flow_compose<T: Real>(rho: T, s: T, t: T, a: T, b: T, c: T) -> Point3<T> {
    let (ss, cs) = ((a * b).sqrt() * s).sin_cos();
    let (st, ct) = ((a * c).sqrt() * t).sin_cos();
    Vec3::new(rho * cs * ct, -rho * (a / b).sqrt() * ss * ct, -rho * (a / c).sqrt() * st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{presets, Potential};
    use proptest::prelude::*;

    fn gauss() -> Potential<f64> {
        Potential::new(presets::gaussian()).unwrap()
    }

    fn tol() -> ToleranceConfig<f64> {
        ToleranceConfig::default()
    }

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    #[test]
    fn gradient_flow_from_axis_point() {
        let c = integral_curve(&gauss(), v(10.0, 0.0, 0.0), FieldTag::GradU, Frame::X, 1.0, &tol()).unwrap();
        assert!((c.end_point() - v(10.0 * (-1f64).exp(), 0.0, 0.0)).norm() < 1e-8);
        assert_eq!(c.point(0.0), v(10.0, 0.0, 0.0));
    }

    #[test]
    fn tangential_flows_match_closed_forms() {
        let u = gauss();
        let x1 = v(3.0, -1.5, 0.7);
        let cv = integral_curve(&u, x1, FieldTag::V, Frame::X, 2.0, &tol()).unwrap();
        let cw = integral_curve(&u, x1, FieldTag::W, Frame::X, 2.0, &tol()).unwrap();
        for i in 0..=20 {
            let t = 0.1 * i as f64;
            assert!((cv.point(t) - gaussian_theta_hat(x1, 1.0, 2.0, t)).norm() < 1e-7);
            assert!((cw.point(t) - gaussian_phi_hat(x1, 1.0, 4.0, t)).norm() < 1e-7);
        }
    }

    #[test]
    fn closed_form_identities() {
        assert_eq!(gaussian_rho_hat(v(10.0, 0.0, 0.0), 1.0, 2.0, 4.0, 0.0), v(10.0, 0.0, 0.0));
        let x = v(1.3, -0.4, 2.0);
        let r = gaussian_theta_hat(x, 1.0, 1.0, std::f64::consts::FRAC_PI_2);
        assert!((r - v(x.y, -x.x, x.z)).norm() < 1e-15);
        for t in [0.0, 0.3, 1.7, 5.0] {
            assert_eq!(gaussian_phi_hat(x, 1.0, 4.0, t).y, x.y);
        }
        assert_eq!(gaussian_flow_compose(7.0, 0.0, 0.0, 1.0, 2.0, 4.0), v(7.0, 0.0, 0.0));
    }

    #[test]
    fn compose_derivatives_are_frame_fields() {
        let (a, b, c) = (1.0, 2.0, 4.0);
        let u = gauss();
        let (rho, t, h) = (6.0, 0.31, 1e-6);
        let p = gaussian_flow_compose(rho, 0.0, t, a, b, c);
        let dt = (gaussian_flow_compose(rho, 0.0, t + h, a, b, c) - gaussian_flow_compose(rho, 0.0, t - h, a, b, c)) / (2.0 * h);
        assert!((dt - frame_vectors(u.gradient(p), Frame::X).w).norm() < 1e-7);
        let s = 0.2;
        let q = gaussian_flow_compose(rho, s, t, a, b, c);
        let ds = (gaussian_flow_compose(rho, s + h, t, a, b, c) - gaussian_flow_compose(rho, s - h, t, a, b, c)) / (2.0 * h);
        assert!((ds - frame_vectors(u.gradient(q), Frame::X).v).norm() < 1e-7);
    }

    #[test]
    fn compose_matches_numeric_flows() {
        let u = gauss();
        let (rho, s, t) = (5.0, 0.4, 0.25);
        let phi = integral_curve(&u, v(rho, 0.0, 0.0), FieldTag::W, Frame::X, t, &tol()).unwrap().end_point();
        let theta = integral_curve(&u, phi, FieldTag::V, Frame::X, s, &tol()).unwrap().end_point();
        assert!((theta - gaussian_flow_compose(rho, s, t, 1.0, 2.0, 4.0)).norm() < 1e-7);
    }

    #[test]
    fn unit_speed_curve_along_axes() {
        let u = gauss();
        let c = normalized_integral_curve(&u, v(10.0, 0.0, 0.0), &tol(), None).unwrap();
        assert_eq!(c.stop_reason(), StopReason::EventStop);
        let end = c.end_point();
        assert!(end.y == 0.0 && end.z == 0.0 && end.x > 0.0 && end.x < 1e-4);
        assert!((c.t_end() - (10.0 - end.x)).abs() < 1e-8);
        let c = normalized_integral_curve(&u, v(0.0, 5.0, 0.0), &tol(), None).unwrap();
        assert!(c.knots().all(|(_, p)| p.x == 0.0 && p.z == 0.0));
        for (_, p) in c.knots() {
            let g = u.gradient(p);
            if g.norm() > 0.0 {
                let speed = field_value(&u, FieldTag::NormalizedGradU, Frame::X, p).unwrap().norm();
                assert!((speed - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn riemannian_length_along_axes() {
        let u = gauss();
        let c = normalized_integral_curve(&u, v(10.0, 0.0, 0.0), &tol(), None).unwrap();
        let d = riemannian_arclength(&u, &c, Frame::X, 1e-10).unwrap();
        assert!((d - 50.0).abs() < 1e-6, "{d}");
        let c = normalized_integral_curve(&u, v(0.0, 10.0, 0.0), &tol(), None).unwrap();
        let d = riemannian_arclength(&u, &c, Frame::Z, 1e-10).unwrap();
        assert!((d - 100.0).abs() < 1e-6, "{d}");
    }

    #[test]
    fn flow_time_length_matches_potential_drop() {
        let u = gauss();
        let x0 = v(3.0, 2.0, -1.0);
        let c = integral_curve(&u, x0, FieldTag::GradU, Frame::X, 2.0, &tol()).unwrap();
        let d = riemannian_arclength(&u, &c, Frame::X, 1e-10).unwrap();
        // ∫ |∇U| |γ'| dt = ∫ |∇U|² dt = U(end) - U(start)
        assert!((d - (u.value(c.end_point()) - u.value(x0))).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_rejected() {
        let u = gauss();
        assert_eq!(
            integral_curve(&u, Vec3::zero(), FieldTag::V, Frame::X, 1.0, &tol()).unwrap_err(),
            Error::ZeroGradient
        );
        assert!(normalized_integral_curve(&u, Vec3::zero(), &tol(), None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gradient_flow_matches_closed_form(x in -10.0f64..10.0, y in -10.0f64..10.0, z in -10.0f64..10.0) {
            let u = gauss();
            let x0 = v(x, y, z);
            let c = integral_curve(&u, x0, FieldTag::GradU, Frame::X, 5.0, &tol()).unwrap();
            for i in 0..=50 {
                let t = 0.1 * i as f64;
                prop_assert!((c.point(t) - gaussian_rho_hat(x0, 1.0, 2.0, 4.0, t)).norm() <= 1e-6);
            }
        }

        #[test]
        fn arclength_frame_independent(x in 1.0f64..10.0, y in -5.0f64..5.0, z in -5.0f64..5.0) {
            let u = Potential::new(presets::rotated_gaussian()).unwrap();
            let c = normalized_integral_curve(&u, v(x, y, z), &tol(), None).unwrap();
            let dx = riemannian_arclength(&u, &c, Frame::X, 1e-10).unwrap();
            let dz = riemannian_arclength(&u, &c, Frame::Z, 1e-10).unwrap();
            prop_assert!((dx - dz).abs() <= 1e-10 * dx.abs().max(1.0));
        }
    }
}
