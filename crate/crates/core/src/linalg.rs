//! Small fixed-size vectors and matrices in R³, plus a closed-form symmetric
//! 3×3 eigensolver.

use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[T; 3]", into = "[T; 3]")]
#[serde(bound(serialize = "T: Clone + Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

/// A point in R³.
pub type Point3<T> = Vec3<T>;

impl<T> From<[T; 3]> for Vec3<T> {
    fn from([x, y, z]: [T; 3]) -> Self {
        Self { x, y, z }
    }
}

impl<T> From<Vec3<T>> for [T; 3] {
    fn from(v: Vec3<T>) -> Self {
        [v.x, v.y, v.z]
    }
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    /// Unit vector along axis `i` (0, 1 or 2).
    pub fn unit(i: usize) -> Self {
        let mut v = Self::zero();
        v[i] = T::one();
        v
    }

    pub fn from_f64(x: f64, y: f64, z: f64) -> Self {
        Self::new(T::lit(x), T::lit(y), T::lit(z))
    }

    #[inline]
    pub fn to_array(self) -> [T; 3] {
        self.into()
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn normalized(self) -> Self {
        self / self.norm()
    }

    pub fn max_abs(self) -> T {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn map(self, f: impl Fn(T) -> T) -> Self {
        Self::new(f(self.x), f(self.y), f(self.z))
    }

    /// Some unit vector orthogonal to `self` (which must be nonzero).
    pub fn any_orthonormal(self) -> Self {
        let a = self.map(|c| c.abs());
        let pick = if a.x <= a.y && a.x <= a.z {
            Self::unit(0)
        } else if a.y <= a.z {
            Self::unit(1)
        } else {
            Self::unit(2)
        };
        self.cross(pick).normalized()
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut T {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub const fn from_rows(m: [[T; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn zero() -> Self {
        Self { m: [[T::zero(); 3]; 3] }
    }

    pub fn identity() -> Self {
        Self::diag(T::one(), T::one(), T::one())
    }

    pub fn diag(a: T, b: T, c: T) -> Self {
        let z = T::zero();
        Self { m: [[a, z, z], [z, b, z], [z, z, c]] }
    }

    pub fn from_cols(c0: Vec3<T>, c1: Vec3<T>, c2: Vec3<T>) -> Self {
        Self { m: [[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]] }
    }

    pub fn outer(a: Vec3<T>, b: Vec3<T>) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.m[i][j] = a[i] * b[j];
            }
        }
        m
    }

    #[inline]
    pub fn row(&self, i: usize) -> Vec3<T> {
        Vec3::from(self.m[i])
    }

    #[inline]
    pub fn col(&self, j: usize) -> Vec3<T> {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                t.m[i][j] = self.m[j][i];
            }
        }
        t
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn det(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse via the adjugate; `None` when the determinant vanishes
    /// relative to the matrix scale.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        let scale = self.max_abs();
        if d == T::zero() || d.abs() <= T::epsilon() * scale * scale * scale {
            return None;
        }
        let c0 = self.col(0);
        let c1 = self.col(1);
        let c2 = self.col(2);
        // rows of the inverse are the cross products of column pairs
        let r0 = c1.cross(c2) / d;
        let r1 = c2.cross(c0) / d;
        let r2 = c0.cross(c1) / d;
        Some(Self { m: [r0.to_array(), r1.to_array(), r2.to_array()] })
    }

    pub fn max_abs(&self) -> T {
        self.m
            .iter()
            .flat_map(|r| r.iter())
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> T {
        self.m
            .iter()
            .flat_map(|r| r.iter())
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    pub fn scale(&self, s: T) -> Self {
        let mut r = *self;
        r.m.iter_mut().flat_map(|r| r.iter_mut()).for_each(|v| *v = *v * s);
        r
    }

    pub fn is_symmetric(&self) -> bool {
        self.m[0][1] == self.m[1][0] && self.m[0][2] == self.m[2][0] && self.m[1][2] == self.m[2][1]
    }

    pub fn quad_form(&self, v: Vec3<T>) -> T {
        v.dot(*self * v)
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = self.m[i][j] + o.m[i][j];
            }
        }
        r
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = self.m[i][j] - o.m[i][j];
            }
        }
        r
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut r = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        r
    }
}

impl<T: Real> Mul<Vec3<T>> for Mat3<T> {
    type Output = Vec3<T>;
    #[inline]
    fn mul(self, v: Vec3<T>) -> Vec3<T> {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }
}

/// Rotation matrix for a right-handed rotation by `angle` about unit `axis`
/// (Rodrigues).
pub fn rotation_matrix<T: Real>(axis: Vec3<T>, angle: T) -> Mat3<T> {
    let k = axis;
    let (s, c) = angle.sin_cos();
    let t = T::one() - c;
    Mat3::from_rows([
        [c + k.x * k.x * t, k.x * k.y * t - k.z * s, k.x * k.z * t + k.y * s],
        [k.y * k.x * t + k.z * s, c + k.y * k.y * t, k.y * k.z * t - k.x * s],
        [k.z * k.x * t - k.y * s, k.z * k.y * t + k.x * s, c + k.z * k.z * t],
    ])
}

/// Eigen-decomposition of a real symmetric 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricEigen<T> {
    /// Eigenvalues in ascending order.
    pub values: [T; 3],
    /// Unit eigenvectors matching `values`, mutually orthogonal.
    pub vectors: [Vec3<T>; 3],
}

/// Closed-form symmetric eigensolver.
///
/// The eigenvalues come from the trigonometric solution of the characteristic
/// cubic. The eigenvector of the best separated eigenvalue is taken from the
/// largest cross product of rows of `A - λI`; the remaining pair is solved
/// exactly on the orthogonal complement as a 2×2 problem, so repeated
/// eigenvalues are handled without loss of orthogonality.
pub fn symmetric_eigen<T: Real>(a: &Mat3<T>) -> SymmetricEigen<T> {
    let scale = a.max_abs();
    if scale == T::zero() {
        return SymmetricEigen {
            values: [T::zero(); 3],
            vectors: [Vec3::unit(0), Vec3::unit(1), Vec3::unit(2)],
        };
    }
    let b = a.scale(T::one() / scale);
    let q = b.trace() / T::lit(3.0);
    let off = b.m[0][1] * b.m[0][1] + b.m[0][2] * b.m[0][2] + b.m[1][2] * b.m[1][2];
    let dev = (0..3).fold(T::zero(), |acc, i| acc + (b.m[i][i] - q) * (b.m[i][i] - q));
    let p = ((dev + T::two() * off) / T::lit(6.0)).sqrt();
    if p <= T::epsilon() {
        // multiple of the identity
        return SymmetricEigen {
            values: [a.m[0][0], a.m[1][1], a.m[2][2]].map(|_| q * scale),
            vectors: [Vec3::unit(0), Vec3::unit(1), Vec3::unit(2)],
        };
    }
    let shifted = (b - Mat3::identity().scale(q)).scale(T::one() / p);
    let r = (shifted.det() / T::two()).max(-T::one()).min(T::one());
    let phi = r.acos() / T::lit(3.0);
    let third = T::two() * T::PI() / T::lit(3.0);
    let l_max = q + T::two() * p * phi.cos();
    let l_min = q + T::two() * p * (phi + third).cos();

    // The isolated root is the minimum when r < 0, the maximum otherwise.
    let isolated = if r <= T::zero() { l_min } else { l_max };
    let v_iso = null_vector(&(b - Mat3::identity().scale(isolated)));
    let lam_iso = b.quad_form(v_iso);

    let u = v_iso.any_orthonormal();
    let w = v_iso.cross(u);
    let bu = b * u;
    let bw = b * w;
    let (m00, m01, m11) = (u.dot(bu), u.dot(bw), w.dot(bw));
    let (mut e0, mut e1, mut l0, mut l1);
    if m01 == T::zero() {
        e0 = u;
        e1 = w;
        l0 = m00;
        l1 = m11;
    } else {
        let theta = T::half() * (T::two() * m01).atan2(m00 - m11);
        let (s, c) = theta.sin_cos();
        e0 = u * c + w * s;
        e1 = w * c - u * s;
        l0 = m00 * c * c + T::two() * m01 * c * s + m11 * s * s;
        l1 = m00 * s * s - T::two() * m01 * c * s + m11 * c * c;
    }
    if l1 < l0 {
        std::mem::swap(&mut l0, &mut l1);
        std::mem::swap(&mut e0, &mut e1);
    }
    let mut pairs = [(lam_iso, v_iso), (l0, e0), (l1, e1)];
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
    SymmetricEigen {
        values: pairs.map(|(l, _)| l * scale),
        vectors: pairs.map(|(_, v)| v),
    }
}

/// Unit vector spanning the (numerical) null space of a rank-2 symmetric matrix.
fn null_vector<T: Real>(m: &Mat3<T>) -> Vec3<T> {
    let (r0, r1, r2) = (m.row(0), m.row(1), m.row(2));
    let cands = [r0.cross(r1), r1.cross(r2), r2.cross(r0)];
    let best = cands
        .iter()
        .copied()
        .max_by(|a, b| a.norm_squared().partial_cmp(&b.norm_squared()).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or_else(Vec3::zero);
    if best.norm_squared() > T::zero() {
        best.normalized()
    } else {
        // rank ≤ 1: any vector orthogonal to the dominant row
        let row = [r0, r1, r2]
            .into_iter()
            .max_by(|a, b| a.norm_squared().partial_cmp(&b.norm_squared()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or_else(|| Vec3::unit(0));
        if row.norm_squared() > T::zero() {
            row.any_orthonormal()
        } else {
            Vec3::unit(0)
        }
    }
}
