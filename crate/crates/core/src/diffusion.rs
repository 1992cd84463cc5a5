//! Diffusion coefficients in (ρ, θ, φ): Itô/Stratonovich drift conversion,
//! Hörmander-form expansion, the tangent-plane projection, projected
//! generator coefficients, Laplace–Beltrami coefficients and the drift
//! correction between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{GradientSample, PotentialField};
use crate::linalg::{Mat3, Point3, Vec3};
use crate::metric::{axis_ok, frame_vectors, inverse2, Frame, Mat2};
use crate::scalar::Real;

/// Generator coefficients `½ α^{ij} ∂ᵢ∂ⱼ + βⁱ ∂ᵢ` in `(ρ, θ, φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct DiffusionCoeffs<T> {
    pub alpha: Mat3<T>,
    pub beta: Vec3<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix<T> {
    pub pi: Mat3<T>,
}

/// Column `∂x/∂ρ` of the chart Jacobian; the other two columns are the
/// frame's `V` and `W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RhoColumn<T> {
    /// `∇U/|∇U|`, the unit-speed ρ parametrization.
    UnitGradient,
    /// `x/ρ` for the axis-aligned Gaussian with flow-time ρ, where `ρ` is the
    /// x-intercept of the ellipsoid through the point.
    GaussianFlowTime { a: T, b: T, c: T },
}

/// Default central-difference step at `p`.
pub fn fd_step<T: Real>(p: Point3<T>) -> T {
    T::lit(1e-5) * (T::one() + p.norm())
}

fn mat_fd<T: Real>(f: &impl Fn(Point3<T>) -> Mat3<T>, p: Point3<T>, dir: Vec3<T>, h: T) -> Mat3<T> {
    (f(p + dir * h) - f(p - dir * h)).scale(T::one() / (T::two() * h))
}

/// Central difference with one Richardson step, fourth order in `h`.
fn mat_fd4<T: Real>(f: &impl Fn(Point3<T>) -> Mat3<T>, p: Point3<T>, dir: Vec3<T>, h: T) -> Mat3<T> {
    let coarse = mat_fd(f, p, dir, h);
    let fine = mat_fd(f, p, dir, h * T::half());
    (fine.scale(T::lit(4.0)) - coarse).scale(T::one() / T::lit(3.0))
}

fn vec_fd<T: Real>(f: &impl Fn(Point3<T>) -> Vec3<T>, p: Point3<T>, dir: Vec3<T>, h: T) -> Vec3<T> {
    (f(p + dir * h) - f(p - dir * h)) / (T::two() * h)
}

/// Stratonovich drift equivalent to the Itô SDE `dX = b dt + σ dB`:
/// `b̃ⁱ = bⁱ − ½ Σₖ Σⱼ (∂σⁱₖ/∂xʲ) σʲₖ`.
pub fn ito_to_stratonovich_drift<T: Real>(
    sigma: impl Fn(Point3<T>) -> Mat3<T>,
    b: impl Fn(Point3<T>) -> Vec3<T>,
    p: Point3<T>,
    h: T,
) -> Vec3<T> {
    let s = sigma(p);
    let mut out = b(p);
    for k in 0..3 {
        // Σⱼ σʲₖ ∂ⱼ is the derivative along column k
        let d = mat_fd(&sigma, p, s.col(k), h).col(k);
        out -= d * T::half();
    }
    out
}

/// Expands `½ Σₖ (Aₖ·∂)² + A₀·∂` into `½ a^{ij} ∂ᵢ∂ⱼ + driftⁱ ∂ᵢ`.
pub fn hormander_expand<T: Real>(
    a0: impl Fn(Point3<T>) -> Vec3<T>,
    ak: &[&dyn Fn(Point3<T>) -> Vec3<T>],
    p: Point3<T>,
    h: T,
) -> (Mat3<T>, Vec3<T>) {
    let mut a = Mat3::zero();
    let mut drift = a0(p);
    for f in ak {
        let v = f(p);
        a = a + Mat3::outer(v, v);
        drift += vec_fd(f, p, v, h) * T::half();
    }
    (a, drift)
}

/// `I − ∇U ∇Uᵀ / |∇U|²`.
pub fn projection_operator<T: Real>(grad: GradientSample<T>) -> Result<ProjectionMatrix<T>> {
    let n2 = grad.norm_squared();
    if n2 == T::zero() || !n2.is_finite() {
        return Err(Error::ZeroGradient);
    }
    Ok(ProjectionMatrix { pi: Mat3::identity() - Mat3::outer(grad, grad).scale(T::one() / n2) })
}

fn check_frame<T: Real>(g: GradientSample<T>, frame: Frame) -> Result<()> {
    if g.norm_squared() == T::zero() || !g.is_finite() {
        return Err(Error::ZeroGradient);
    }
    if !axis_ok(g, frame) {
        return Err(Error::FrameSingular);
    }
    Ok(())
}

/// Jacobian of `(ρ, θ, φ) ↦ x` at `p`: columns `(∂x/∂ρ, V, W)`.
pub fn chart_jacobian<T: Real>(grad: GradientSample<T>, rho: RhoColumn<T>, frame: Frame, p: Point3<T>) -> Mat3<T> {
    let basis = frame_vectors(grad, frame);
    let c0 = match rho {
        RhoColumn::UnitGradient => grad / grad.norm(),
        RhoColumn::GaussianFlowTime { a, b, c } => {
            let r = ((a * p.x * p.x + b * p.y * p.y + c * p.z * p.z) / a).sqrt();
            p / r
        }
    };
    Mat3::from_cols(c0, basis.v, basis.w)
}

/// Coefficients of the projected process `dX = π σ ∘ dB` in `(ρ, θ, φ)`:
/// the columns of `M = J⁻¹ π σ` are expanded as Hörmander fields, with `A₀`
/// the transformed projected drift `J⁻¹ π ∇U`. `sigma` is a constant
/// orthogonal matrix, identity when `None`.
pub fn projected_coeffs<T: Real>(
    u: &impl PotentialField<T>,
    rho: RhoColumn<T>,
    frame: Frame,
    p: Point3<T>,
    sigma: Option<&Mat3<T>>,
) -> Result<DiffusionCoeffs<T>> {
    let g = u.gradient(p);
    check_frame(g, frame)?;
    let sigma = sigma.copied().unwrap_or_else(Mat3::identity);
    let jac_inv = |q: Point3<T>| -> Option<(Mat3<T>, Mat3<T>)> {
        let gq = u.gradient(q);
        let j = chart_jacobian(gq, rho, frame, q);
        let pi = projection_operator(gq).ok()?.pi;
        Some((j.inverse()?, pi))
    };
    let m_at = |q: Point3<T>| -> Mat3<T> {
        match jac_inv(q) {
            Some((ji, pi)) => ji * pi * sigma,
            None => Mat3::from_rows([[T::nan(); 3]; 3]),
        }
    };
    let (ji, pi) = jac_inv(p).ok_or(Error::FrameSingular)?;
    let m = ji * pi * sigma;
    let j = chart_jacobian(g, rho, frame, p);
    let h = fd_step(p);

    let mut alpha = m * m.transpose();
    for i in 0..3 {
        for k in 0..i {
            let s = (alpha.m[i][k] + alpha.m[k][i]) * T::half();
            alpha.m[i][k] = s;
            alpha.m[k][i] = s;
        }
    }
    let mut beta = ji * (pi * g);
    for k in 0..3 {
        // Σⱼ Aₖʲ ∂/∂yʲ acts in x as the derivative along J Aₖ
        let dir = j * m.col(k);
        let dm = mat_fd4(&m_at, p, dir, h);
        beta += dm.col(k) * T::half();
    }
    if !beta.is_finite() || !alpha.m.iter().flatten().all(|x| x.is_finite()) {
        return Err(Error::FrameSingular);
    }
    Ok(DiffusionCoeffs { alpha, beta })
}

/// Laplace–Beltrami operator of the Θ-block metric, written as
/// `½ g^{ij} ∂ᵢ∂ⱼ + hⁱ ∂ᵢ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceBeltrami<T> {
    pub g_inverse: Mat2<T>,
    pub h: [T; 2],
}

/// Inverse Θ-block metric and `hⁱ = (1/2√G) Σⱼ ∂ⱼ(√G g^{ij})`, with `∂₁, ∂₂`
/// the derivatives along `V` and `W`.
pub fn laplace_beltrami_coeffs<T: Real>(u: &impl PotentialField<T>, frame: Frame, p: Point3<T>) -> Result<LaplaceBeltrami<T>> {
    let g = u.gradient(p);
    check_frame(g, frame)?;
    // √G g^{ij} as the columns of a 3×3 (third row/col unused)
    let weighted = |q: Point3<T>| -> Mat3<T> {
        let block = frame_vectors(u.gradient(q), frame).gram();
        let det = block[0][0] * block[1][1] - block[0][1] * block[1][0];
        match inverse2(&block) {
            Some(inv) if det > T::zero() => {
                let s = det.sqrt();
                let z = T::zero();
                Mat3::from_rows([[inv[0][0] * s, inv[0][1] * s, z], [inv[1][0] * s, inv[1][1] * s, z], [z, z, z]])
            }
            _ => Mat3::from_rows([[T::nan(); 3]; 3]),
        }
    };
    let basis = frame_vectors(g, frame);
    let block = basis.gram();
    let g_inverse = inverse2(&block).ok_or(Error::FrameSingular)?;
    let sqrt_g = (block[0][0] * block[1][1] - block[0][1] * block[1][0]).sqrt();
    let step = fd_step(p);
    let d1 = mat_fd4(&weighted, p, basis.v, step);
    let d2 = mat_fd4(&weighted, p, basis.w, step);
    let scale = T::one() / (T::two() * sqrt_g);
    let h = [(d1.m[0][0] + d2.m[0][1]) * scale, (d1.m[1][0] + d2.m[1][1]) * scale];
    if !(h[0].is_finite() && h[1].is_finite()) {
        return Err(Error::FrameSingular);
    }
    Ok(LaplaceBeltrami { g_inverse, h })
}

/// `β − h` on the Θ components from the analytic gradient and Hessian: with
/// `(P, Q, R)` the gradient components along the frame's axis and its cyclic
/// successors and `∂` the derivative along the axis,
/// `Δ¹ = −[P(P∂Q − Q∂P) + R(R∂Q − Q∂R)] / (2P²|∇U|²)` and
/// `Δ² = −[P(P∂R − R∂P) + Q(Q∂R − R∂Q)] / (2P²|∇U|²)`.
pub fn drift_correction<T: Real>(u: &impl PotentialField<T>, frame: Frame, p: Point3<T>) -> Result<[T; 2]> {
    let g = u.gradient(p);
    check_frame(g, frame)?;
    let (i, j, k) = frame.indices();
    let hess = u.hessian(p);
    let (pp, q, r) = (g[i], g[j], g[k]);
    let (dp, dq, dr) = (hess.m[i][i], hess.m[j][i], hess.m[k][i]);
    let denom = T::two() * pp * pp * g.norm_squared();
    let d1 = -(pp * (pp * dq - q * dp) + r * (r * dq - q * dr)) / denom;
    let d2 = -(pp * (pp * dr - r * dp) + q * (q * dr - r * dq)) / denom;
    Ok([d1, d2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{presets, Potential, PotentialSpec};
    use crate::linalg::rotation_matrix;
    use proptest::prelude::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    fn gauss() -> Potential<f64> {
        Potential::new(presets::gaussian()).unwrap()
    }

    const ABC: RhoColumn<f64> = RhoColumn::GaussianFlowTime { a: 1.0, b: 2.0, c: 4.0 };

    #[test]
    fn ito_stratonovich_examples() {
        let b = |p: Point3<f64>| v(p.y, -p.x, 1.0);
        let p = v(0.3, -1.2, 2.0);
        let h = fd_step(p);
        assert_eq!(ito_to_stratonovich_drift(|_| Mat3::identity(), b, p, h), b(p));
        let s = rotation_matrix(v(1.0, 2.0, 3.0).normalized(), 0.7);
        assert_eq!(ito_to_stratonovich_drift(|_| s, b, p, h), b(p));
        let d = ito_to_stratonovich_drift(|q: Point3<f64>| Mat3::diag(q.x, 1.0, 1.0), |_| Vec3::zero(), p, h);
        assert!((d - v(-0.15, 0.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn hormander_examples() {
        let p = v(0.8, 0.1, -0.4);
        let h = fd_step(p);
        let e0 = |_: Point3<f64>| Vec3::unit(0);
        let e1 = |_: Point3<f64>| Vec3::unit(1);
        let e2 = |_: Point3<f64>| Vec3::unit(2);
        let b = |q: Point3<f64>| v(q.z, 2.0, -q.x);
        let (a, d) = hormander_expand(b, &[&e0, &e1, &e2], p, h);
        assert_eq!(a, Mat3::identity());
        assert_eq!(d, b(p));
        let f = |q: Point3<f64>| v(q.x, 0.0, 0.0);
        let (a, d) = hormander_expand(|_| Vec3::zero(), &[&f], p, h);
        assert!((a - Mat3::diag(0.64, 0.0, 0.0)).max_abs() < 1e-15);
        assert!((d - v(0.4, 0.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn hormander_inverts_stratonovich_conversion() {
        let sigma = |q: Point3<f64>| {
            Mat3::from_rows([[1.0 + q.y * q.y, 0.3 * q.z, 0.0], [q.x, 2.0, 0.1 * q.x * q.z], [0.0, q.y.sin(), 1.0]])
        };
        let b = |q: Point3<f64>| v(q.x * q.y, -q.z, 0.5);
        let p = v(0.4, -0.7, 1.1);
        let h = fd_step(p);
        let strat = |q: Point3<f64>| ito_to_stratonovich_drift(sigma, b, q, h);
        let c0 = |q: Point3<f64>| sigma(q).col(0);
        let c1 = |q: Point3<f64>| sigma(q).col(1);
        let c2 = |q: Point3<f64>| sigma(q).col(2);
        let (a, d) = hormander_expand(strat, &[&c0, &c1, &c2], p, h);
        assert!((d - b(p)).norm() < 1e-8, "{d:?} vs {:?}", b(p));
        let s = sigma(p);
        assert!((a - s * s.transpose()).max_abs() < 1e-14);
    }

    #[test]
    fn projection_examples() {
        let pm = projection_operator(v(-10.0, 0.0, 0.0)).unwrap().pi;
        assert_eq!(pm, Mat3::diag(0.0, 1.0, 1.0));
        assert_eq!(projection_operator(Vec3::<f64>::zero()), Err(Error::ZeroGradient));
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_kills_gradient(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64) {
            let g = v(x, y, z);
            prop_assume!(g.norm() > 1e-3);
            let pm = projection_operator(g).unwrap().pi;
            prop_assert!((pm * pm - pm).max_abs() < 1e-14);
            prop_assert!((pm * g).norm() < 1e-12 * g.norm());
        }
    }

    fn gaussian_beta_closed(p: Point3<f64>, a: f64, b: f64, c: f64, lead: f64) -> [f64; 2] {
        let g = v(-a * p.x, -b * p.y, -c * p.z);
        let n2 = g.norm_squared();
        let inner = lead + v(a * a * p.x, b * b * p.y, c * c * p.z).dot(g) / n2;
        let pre = 1.0 / (2.0 * a * p.x * n2);
        [pre * b * p.y * inner, pre * c * p.z * inner]
    }

    #[test]
    fn gaussian_projected_examples() {
        let u = gauss();
        let c = projected_coeffs(&u, ABC, Frame::X, v(10.0, 0.0, 0.0), None).unwrap();
        assert!((c.alpha.m[1][1] - 0.01).abs() < 1e-12);
        assert!(c.alpha.m[1][2].abs() < 1e-12);
        assert!(c.beta.y.abs() < 1e-10 && c.beta.z.abs() < 1e-10);

        let p = v(1.0, 1.0, 1.0);
        let c = projected_coeffs(&u, ABC, Frame::X, p, None).unwrap();
        assert!((c.alpha.m[1][2] + 8.0 / 21.0).abs() < 1e-12);
        assert!((c.alpha.m[1][1] - 17.0 / 21.0).abs() < 1e-12);
        let expected = gaussian_beta_closed(p, 1.0, 2.0, 4.0, 6.0);
        assert!((c.beta.y - expected[0]).abs() < 1e-8, "{} vs {}", c.beta.y, expected[0]);
        assert!((c.beta.z - expected[1]).abs() < 1e-8);
        assert!((expected[0] - 53.0 / 441.0).abs() < 1e-15);
        assert!(c.beta.x.abs() < 1e-10);
        for i in 0..3 {
            assert!(c.alpha.m[0][i].abs() < 1e-10 && c.alpha.m[i][0].abs() < 1e-10);
        }
    }

    #[test]
    fn first_row_of_projected_inverse_vanishes() {
        let u = gauss();
        let p = v(2.0, -1.5, 0.7);
        let g = u.gradient(p);
        let m = chart_jacobian(g, ABC, Frame::X, p).inverse().unwrap() * projection_operator(g).unwrap().pi;
        assert!(m.row(0).max_abs() < 1e-10);
    }

    #[test]
    fn laplace_beltrami_gaussian() {
        let u = gauss();
        let lb = laplace_beltrami_coeffs(&u, Frame::X, v(1.0, 1.0, 1.0)).unwrap();
        let expected = gaussian_beta_closed(v(1.0, 1.0, 1.0), 1.0, 2.0, 4.0, 7.0);
        assert!((expected[0] - 74.0 / 441.0).abs() < 1e-15);
        assert!((lb.h[0] - expected[0]).abs() < 1e-8, "{:?} vs {expected:?}", lb.h);
        assert!((lb.h[1] - expected[1]).abs() < 1e-8);
        assert!((lb.g_inverse[0][1] + 8.0 / 21.0).abs() < 1e-12);
        let lb = laplace_beltrami_coeffs(&u, Frame::X, v(10.0, 0.0, 0.0)).unwrap();
        assert!(lb.h[0].abs() < 1e-12 && lb.h[1].abs() < 1e-12);
    }

    #[test]
    fn drift_correction_gaussian() {
        let u = gauss();
        let d = drift_correction(&u, Frame::X, v(1.0, 1.0, 1.0)).unwrap();
        assert!((d[0] + 1.0 / 21.0).abs() < 1e-15);
        assert!((d[1] + 2.0 / 21.0).abs() < 1e-15);
        assert_eq!(drift_correction(&u, Frame::X, v(3.0, 0.0, 0.0)).unwrap(), [0.0, 0.0]);
        assert_eq!(drift_correction(&u, Frame::X, v(0.0, 1.0, 1.0)), Err(Error::FrameSingular));
        assert_eq!(drift_correction(&u, Frame::X, Vec3::zero()), Err(Error::ZeroGradient));
    }

    #[test]
    fn alpha_matches_inverse_metric_and_is_psd_rank_two() {
        let cu = Potential::new(presets::curvilinear_gaussian()).unwrap();
        for p in [v(20.4, 1.3, -9.0), v(-19.2, -1.25, 9.25), v(15.0, 5.0, 3.0)] {
            let c = projected_coeffs(&cu, RhoColumn::UnitGradient, Frame::X, p, None).unwrap();
            let lb = laplace_beltrami_coeffs(&cu, Frame::X, p).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let gij = lb.g_inverse[i][j];
                    assert!((c.alpha.m[i + 1][j + 1] - gij).abs() <= 1e-8 * gij.abs().max(lb.g_inverse[0][0].abs()));
                }
            }
            let eig = crate::linalg::symmetric_eigen(&c.alpha);
            let top = eig.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(eig.values.iter().all(|&l| l >= -1e-12 * top));
            assert!(eig.values.iter().filter(|&&l| l.abs() <= 1e-10 * top).count() >= 1);
        }
    }

    #[test]
    fn drift_correction_two_routes_curvilinear() {
        let cu = Potential::new(presets::curvilinear_gaussian()).unwrap();
        for p in [v(20.4, 1.3, -9.0), v(-19.2, -1.25, 9.25), v(12.0, -4.0, 6.0)] {
            let c = projected_coeffs(&cu, RhoColumn::UnitGradient, Frame::X, p, None).unwrap();
            let lb = laplace_beltrami_coeffs(&cu, Frame::X, p).unwrap();
            let d = drift_correction(&cu, Frame::X, p).unwrap();
            let scale = d[0].abs().max(d[1].abs()).max(1e-12);
            assert!((c.beta.y - lb.h[0] - d[0]).abs() < 1e-6 * scale.max(1.0), "{:?} {:?} {:?}", c.beta, lb.h, d);
            assert!((c.beta.z - lb.h[1] - d[1]).abs() < 1e-6 * scale.max(1.0));
        }
    }

    #[test]
    fn projected_coeffs_ignore_orthogonal_sigma() {
        let u = Potential::new(PotentialSpec::quadratic(1.0, 3.0, 0.5)).unwrap();
        let s = rotation_matrix(v(0.3, -0.5, 0.8).normalized(), 1.1);
        for p in [v(2.0, 1.0, -1.0), v(4.0, -0.5, 2.5)] {
            let a = projected_coeffs(&u, RhoColumn::UnitGradient, Frame::X, p, None).unwrap();
            let b = projected_coeffs(&u, RhoColumn::UnitGradient, Frame::X, p, Some(&s)).unwrap();
            assert!((a.alpha - b.alpha).max_abs() < 1e-8);
            assert!((a.beta - b.beta).norm() < 1e-8);
        }
    }

    #[test]
    fn frames_other_than_x() {
        let u = gauss();
        let p = v(0.5, 3.0, 1.0);
        let d = drift_correction(&u, Frame::Y, p).unwrap();
        let c = projected_coeffs(&u, RhoColumn::UnitGradient, Frame::Y, p, None).unwrap();
        let lb = laplace_beltrami_coeffs(&u, Frame::Y, p).unwrap();
        assert!((c.beta.y - lb.h[0] - d[0]).abs() < 1e-7);
        assert!((c.beta.z - lb.h[1] - d[1]).abs() < 1e-7);
    }
}
