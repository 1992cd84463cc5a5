//! Dissimilarity metric built from ∇U, tangent frames, eigensystem and the
//! integrability check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{GradientSample, PotentialField};
use crate::linalg::{Mat3, Point3, Vec3};
use crate::scalar::Real;

/// 2×2 matrix, row-major.
pub type Mat2<T> = [[T; 2]; 2];

/// Coordinate frame centred on one axis. The frame axis is the coordinate
/// eliminated in favour of ρ, so `1/P` (X), `1/Q` (Y) or `1/R` (Z) appear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frame {
    X,
    Y,
    Z,
}

impl Frame {
    pub const ALL: [Frame; 3] = [Frame::X, Frame::Y, Frame::Z];

    pub fn axis(self) -> usize {
        match self {
            Frame::X => 0,
            Frame::Y => 1,
            Frame::Z => 2,
        }
    }

    /// Indices `(i, j, k)` with `i` the axis and `(j, k)` the cyclic successors.
    pub fn indices(self) -> (usize, usize, usize) {
        let i = self.axis();
        (i, (i + 1) % 3, (i + 2) % 3)
    }

    /// Frame whose axis carries the largest gradient component.
    pub fn auto<T: Real>(grad: GradientSample<T>) -> Frame {
        let mut best = Frame::X;
        for f in [Frame::Y, Frame::Z] {
            if grad[f.axis()].abs() > grad[best.axis()].abs() {
                best = f;
            }
        }
        best
    }

    pub fn name(self) -> &'static str {
        match self {
            Frame::X => "x",
            Frame::Y => "y",
            Frame::Z => "z",
        }
    }
}

impl std::str::FromStr for Frame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Frame::X),
            "y" => Ok(Frame::Y),
            "z" => Ok(Frame::Z),
            other => Err(Error::InvalidConfig(format!("unknown frame '{other}'"))),
        }
    }
}

/// Un-normalized tangent vectors of the level surface through a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentBasis<T> {
    pub v: Vec3<T>,
    pub w: Vec3<T>,
}

impl<T: Real> TangentBasis<T> {
    /// `V v + W w`.
    pub fn combine(&self, v: T, w: T) -> Vec3<T> {
        self.v * v + self.w * w
    }

    /// Gram matrix of `(V, W)`.
    pub fn gram(&self) -> Mat2<T> {
        let vw = self.v.dot(self.w);
        [[self.v.norm_squared(), vw], [vw, self.w.norm_squared()]]
    }
}

/// The frame's `(V, W)` as a linear function of the gradient, with no check
/// for a vanishing gradient. Linear, so it also maps Hessian columns to the
/// partial derivatives of `V` and `W`.
pub fn frame_vectors<T: Real>(grad: Vec3<T>, frame: Frame) -> TangentBasis<T> {
    let (i, j, k) = frame.indices();
    let mut v = Vec3::zero();
    let mut w = Vec3::zero();
    v[i] = -grad[j];
    v[j] = grad[i];
    w[i] = -grad[k];
    w[k] = grad[i];
    TangentBasis { v, w }
}

/// `∂V/∂x_k` and `∂W/∂x_k` for `k = 0, 1, 2`, given the Hessian of U.
pub fn frame_vector_derivatives<T: Real>(hessian: &Mat3<T>, frame: Frame) -> [TangentBasis<T>; 3] {
    [0, 1, 2].map(|k| frame_vectors(hessian.col(k), frame))
}

pub fn tangent_basis<T: Real>(grad: GradientSample<T>, frame: Frame) -> Result<TangentBasis<T>> {
    if grad.norm_squared() == T::zero() || !grad.is_finite() {
        return Err(Error::ZeroGradient);
    }
    Ok(frame_vectors(grad, frame))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricTensor<T> {
    pub g: Mat3<T>,
    pub frame: Frame,
}

impl<T: Real> MetricTensor<T> {
    pub fn g00(&self) -> T {
        self.g.m[0][0]
    }

    /// Lower-right 2×2 block, the metric on the level surface.
    pub fn theta_block(&self) -> Mat2<T> {
        [[self.g.m[1][1], self.g.m[1][2]], [self.g.m[2][1], self.g.m[2][2]]]
    }

    fn from_parts(g00: T, block: Mat2<T>, frame: Frame) -> Self {
        let z = T::zero();
        let off = block[0][1];
        let g = Mat3::from_rows([[g00, z, z], [z, block[0][0], off], [z, off, block[1][1]]]);
        Self { g, frame }
    }
}

/// Inner products of `∇U`, `V` and `W`, in that order.
pub fn dissimilarity_metric<T: Real>(grad: GradientSample<T>, frame: Frame) -> Result<MetricTensor<T>> {
    let basis = tangent_basis(grad, frame)?;
    Ok(MetricTensor::from_parts(grad.norm_squared(), basis.gram(), frame))
}

/// Eigenvalues ascending with eigenvectors in `(ρ, v, w)` coordinates.
/// `vectors[0]` is `(0, -g_k, g_j)` and `vectors[1]` is `(0, g_j, g_k)`, both
/// un-normalized; `vectors[2]` is `(1, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricEigensystem<T> {
    pub values: [T; 3],
    pub vectors: [Vec3<T>; 3],
}

/// Relative size below which the transverse gradient components count as zero.
pub fn degenerate_threshold<T: Real>() -> T {
    T::lit(1e-12)
}

pub fn metric_eigensystem<T: Real>(m: &MetricTensor<T>, grad: GradientSample<T>) -> Result<MetricEigensystem<T>> {
    let norm2 = grad.norm_squared();
    if norm2 == T::zero() {
        return Err(Error::ZeroGradient);
    }
    let (i, j, k) = m.frame.indices();
    let transverse = grad[j] * grad[j] + grad[k] * grad[k];
    if transverse <= degenerate_threshold::<T>() * norm2 {
        return Err(Error::DegenerateTransverse);
    }
    let z = T::zero();
    Ok(MetricEigensystem {
        values: [grad[i] * grad[i], norm2, norm2],
        vectors: [
            Vec3::new(z, -grad[k], grad[j]),
            Vec3::new(z, grad[j], grad[k]),
            Vec3::new(T::one(), z, z),
        ],
    })
}

pub(crate) fn axis_ok<T: Real>(grad: GradientSample<T>, frame: Frame) -> bool {
    grad[frame.axis()].abs() > T::lit(1e-12) * grad.norm()
}

/// Jacobian `J` with `B_from J = B_to` on the tangent plane: maps target
/// Θ-coordinates to source Θ-coordinates.
pub fn frame_jacobian<T: Real>(grad: GradientSample<T>, from: Frame, to: Frame) -> Result<Mat2<T>> {
    if grad.norm_squared() == T::zero() {
        return Err(Error::ZeroGradient);
    }
    if !axis_ok(grad, from) || !axis_ok(grad, to) {
        return Err(Error::FrameSingular);
    }
    let src = frame_vectors(grad, from);
    let dst = frame_vectors(grad, to);
    let g = src.gram();
    let inv = inverse2(&g).ok_or(Error::FrameSingular)?;
    let bt_b = [
        [src.v.dot(dst.v), src.v.dot(dst.w)],
        [src.w.dot(dst.v), src.w.dot(dst.w)],
    ];
    Ok(mul2(&inv, &bt_b))
}

/// Tensor transformation law for the Θ-block; `g00` is carried over.
pub fn frame_transform<T: Real>(m: &MetricTensor<T>, grad: GradientSample<T>, to: Frame) -> Result<MetricTensor<T>> {
    if m.frame == to {
        return Ok(*m);
    }
    let j = frame_jacobian(grad, m.frame, to)?;
    let block = mul2(&transpose2(&j), &mul2(&m.theta_block(), &j));
    let sym = (block[0][1] + block[1][0]) * T::half();
    Ok(MetricTensor::from_parts(m.g00(), [[block[0][0], sym], [sym, block[1][1]]], to))
}

pub(crate) fn mul2<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> Mat2<T> {
    let mut c = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

pub(crate) fn transpose2<T: Real>(a: &Mat2<T>) -> Mat2<T> {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub(crate) fn inverse2<T: Real>(a: &Mat2<T>) -> Option<Mat2<T>> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det == T::zero() || !det.is_finite() {
        return None;
    }
    Some([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

/// Central-difference Jacobian `∂F_i/∂x_j` of a vector field.
pub fn field_jacobian_fd<T: Real>(field: impl Fn(Point3<T>) -> Vec3<T>, p: Point3<T>, h: T) -> Mat3<T> {
    let mut jac = Mat3::zero();
    for j in 0..3 {
        let mut f = p;
        let mut b = p;
        f[j] = f[j] + h;
        b[j] = b[j] - h;
        let col = (field(f) - field(b)) / (T::two() * h);
        for i in 0..3 {
            jac.m[i][j] = col[i];
        }
    }
    jac
}

/// `G · (∇ × G)` with the curl from central differences of `field`.
pub fn frobenius_check<T: Real>(field: impl Fn(Point3<T>) -> Vec3<T>, p: Point3<T>, h: T) -> T {
    let jac = field_jacobian_fd(&field, p, h);
    let curl = Vec3::new(
        jac.m[2][1] - jac.m[1][2],
        jac.m[0][2] - jac.m[2][0],
        jac.m[1][0] - jac.m[0][1],
    );
    field(p).dot(curl)
}

/// [`frobenius_check`] applied to the gradient of a potential.
pub fn frobenius_check_potential<T: Real>(u: &impl PotentialField<T>, p: Point3<T>, h: T) -> T {
    frobenius_check(|q| u.gradient(q), p, h)
}

/// ∂ₓ-coefficient of the bracket `[V/P, W/P]` for the X frame of `field`:
/// with `f = -Q/P` and `g = -R/P`, returns `g_y - f_z + f g_x - g f_x`.
pub fn lie_bracket_residual<T: Real>(field: impl Fn(Point3<T>) -> Vec3<T>, p: Point3<T>, h: T) -> T {
    let f = |q: Point3<T>| {
        let g = field(q);
        Vec3::new(-g.y / g.x, -g.z / g.x, T::zero())
    };
    let jac = field_jacobian_fd(f, p, h);
    let fg = f(p);
    // row 0: ∂f, row 1: ∂g
    jac.m[1][1] - jac.m[0][2] + fg.x * jac.m[1][0] - fg.y * jac.m[0][0]
}
