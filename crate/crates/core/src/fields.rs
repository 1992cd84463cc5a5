//! Analytic potentials U on R³: the axis-aligned quadratic, its rotations,
//! the cubic-warped ("curvilinear") quadratic and log-sum-exp mixtures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{rotation_matrix, Mat3, Point3, Vec3};
use crate::scalar::Real;

/// Components (P, Q, R) of ∇U at a point.
pub type GradientSample<T> = Vec3<T>;

/// Axis–angle rotation, right-handed, axis of unit length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct AxisAngle<T> {
    pub axis: Vec3<T>,
    pub angle: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct MixtureComponent<T> {
    pub potential: PotentialSpec<T>,
    #[serde(default = "zero_vec")]
    pub translation: Vec3<T>,
    #[serde(default)]
    pub rotation: Option<AxisAngle<T>>,
}

fn zero_vec<T: Real>() -> Vec3<T> {
    Vec3::zero()
}

fn default_cubic<T: Real>() -> [T; 3] {
    [T::one(), -T::one(), -T::one()]
}

fn default_scalings<T: Real>() -> [T; 3] {
    [T::lit(1.4), T::lit(1.2), T::one()]
}

fn default_coupling<T: Real>() -> T {
    T::two()
}

fn default_scale<T: Real>() -> T {
    T::lit(1e-6)
}

/// Declarative description of a potential.
///
/// `Curvilinear` is the quadratic `-½ scale (a u² + b v² + c w²)` applied to the
/// cubic map
///
/// ```text
/// u = C(s₀ y) + k x (y² + z²)
/// v = C(s₁ z) + k y (z² + x²)
/// w = C(s₂ x) + k z (x² + y²)
/// ```
///
/// with `C(t) = c₃t³ + c₂t² + c₁t` (coefficients in `cubic`, highest first),
/// scalings `s` and coupling `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub enum PotentialSpec<T> {
    Quadratic {
        a: T,
        b: T,
        c: T,
    },
    Rotated {
        base: Box<PotentialSpec<T>>,
        axis: Vec3<T>,
        angle: T,
    },
    Curvilinear {
        a: T,
        b: T,
        c: T,
        #[serde(default = "default_cubic")]
        cubic: [T; 3],
        #[serde(default = "default_scalings")]
        scalings: [T; 3],
        #[serde(default = "default_coupling")]
        coupling: T,
        #[serde(default = "default_scale")]
        scale: T,
    },
    Mixture {
        components: Vec<MixtureComponent<T>>,
    },
}

impl<T: Real> PotentialSpec<T> {
    pub fn quadratic(a: T, b: T, c: T) -> Self {
        Self::Quadratic { a, b, c }
    }

    pub fn curvilinear(a: T, b: T, c: T) -> Self {
        Self::Curvilinear {
            a,
            b,
            c,
            cubic: default_cubic(),
            scalings: default_scalings(),
            coupling: default_coupling(),
            scale: default_scale(),
        }
    }

    /// Rotation of `base` about `axis` (normalized here) by `angle`, so that
    /// `U(R p) = U_base(p)`.
    pub fn rotated(base: Self, axis: Vec3<T>, angle: T) -> Self {
        Self::Rotated { base: Box::new(base), axis: axis.normalized(), angle }
    }

    /// Returns a copy with every rotation axis rescaled to unit length.
    pub fn with_normalized_axes(&self) -> Self {
        let norm = |v: Vec3<T>| if v.norm() > T::zero() { v.normalized() } else { v };
        match self {
            Self::Rotated { base, axis, angle } => Self::Rotated {
                base: Box::new(base.with_normalized_axes()),
                axis: norm(*axis),
                angle: *angle,
            },
            Self::Mixture { components } => Self::Mixture {
                components: components
                    .iter()
                    .map(|c| MixtureComponent {
                        potential: c.potential.with_normalized_axes(),
                        translation: c.translation,
                        rotation: c.rotation.map(|r| AxisAngle { axis: norm(r.axis), angle: r.angle }),
                    })
                    .collect(),
            },
            other => other.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: T| {
            if v.is_finite() && v > T::zero() {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let unit_axis = |axis: Vec3<T>| {
            let tol = T::epsilon().sqrt();
            if axis.is_finite() && (axis.norm() - T::one()).abs() <= tol {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("rotation axis must have unit norm, got |axis| = {}", axis.norm())))
            }
        };
        match self {
            Self::Quadratic { a, b, c } => {
                positive("a", *a)?;
                positive("b", *b)?;
                positive("c", *c)
            }
            Self::Rotated { base, axis, angle } => {
                unit_axis(*axis)?;
                if !angle.is_finite() {
                    return Err(Error::InvalidSpec("rotation angle must be finite".into()));
                }
                base.validate()
            }
            Self::Curvilinear { a, b, c, cubic, scalings, coupling, scale } => {
                positive("a", *a)?;
                positive("b", *b)?;
                positive("c", *c)?;
                positive("scale", *scale)?;
                if !cubic.iter().chain(scalings.iter()).all(|v| v.is_finite()) || !coupling.is_finite() {
                    return Err(Error::InvalidSpec("curvilinear coefficients must be finite".into()));
                }
                Ok(())
            }
            Self::Mixture { components } => {
                if components.len() < 2 {
                    return Err(Error::InvalidSpec(format!(
                        "mixture needs at least two components, got {}",
                        components.len()
                    )));
                }
                for comp in components {
                    if !comp.translation.is_finite() {
                        return Err(Error::InvalidSpec("mixture translation must be finite".into()));
                    }
                    if let Some(r) = comp.rotation {
                        unit_axis(r.axis)?;
                    }
                    comp.potential.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Whether `invariant_density` of this family has a closed-form normalizer.
    pub fn has_normalized_density(&self) -> bool {
        match self {
            Self::Quadratic { .. } => true,
            Self::Rotated { base, .. } => base.has_normalized_density(),
            _ => false,
        }
    }
}

/// Potentials used by the reference experiments.
pub mod presets {
    use super::*;

    /// `U = -½(x² + 2y² + 4z²)`.
    pub fn gaussian<T: Real>() -> PotentialSpec<T> {
        PotentialSpec::quadratic(T::one(), T::two(), T::lit(4.0))
    }

    /// The Gaussian rotated so that its principal point (10,0,0) lands on
    /// (20/3, -10/3, 20/3): angle -π/3 about (1,1,1).
    pub fn rotated_gaussian<T: Real>() -> PotentialSpec<T> {
        PotentialSpec::rotated(gaussian(), Vec3::new(T::one(), T::one(), T::one()), -T::PI() / T::lit(3.0))
    }

    pub fn curvilinear_gaussian<T: Real>() -> PotentialSpec<T> {
        PotentialSpec::curvilinear(T::one(), T::two(), T::lit(4.0))
    }

    /// Two curvilinear copies centred at (20,20,-10) and (-20,-20,10), the
    /// second one turned by π/2 about the y direction.
    pub fn bimodal_curvilinear<T: Real>() -> PotentialSpec<T> {
        PotentialSpec::Mixture {
            components: vec![
                MixtureComponent {
                    potential: curvilinear_gaussian(),
                    translation: Vec3::from_f64(20.0, 20.0, -10.0),
                    rotation: None,
                },
                MixtureComponent {
                    potential: curvilinear_gaussian(),
                    translation: Vec3::from_f64(-20.0, -20.0, 10.0),
                    rotation: Some(AxisAngle { axis: Vec3::unit(1), angle: T::FRAC_PI_2() }),
                },
            ],
        }
    }
}

/// A smooth scalar potential with analytic first and second derivatives.
pub trait PotentialField<T: Real>: Sync {
    fn value(&self, p: Point3<T>) -> T;
    fn gradient(&self, p: Point3<T>) -> GradientSample<T>;
    fn hessian(&self, p: Point3<T>) -> Mat3<T>;

    fn laplacian(&self, p: Point3<T>) -> T {
        self.hessian(p).trace()
    }
}

#[derive(Debug, Clone)]
enum Node<T> {
    Quadratic { w: [T; 3] },
    Curvilinear { w: [T; 3], cubic: [T; 3], s: [T; 3], k: T, scale: T },
    /// `U(p) = inner(Rᵀ (p - t))`.
    Transformed { inner: Box<Node<T>>, rot: Mat3<T>, rot_t: Mat3<T>, shift: Vec3<T> },
    Mixture(Vec<Node<T>>),
}

/// A validated, ready-to-evaluate potential.
#[derive(Debug, Clone)]
pub struct Potential<T> {
    spec: PotentialSpec<T>,
    root: Node<T>,
}

impl<T: Real> Potential<T> {
    pub fn new(spec: PotentialSpec<T>) -> Result<Self> {
        spec.validate()?;
        let root = compile(&spec);
        Ok(Self { spec, root })
    }

    pub fn spec(&self) -> &PotentialSpec<T> {
        &self.spec
    }

    /// `(U, ∇U)` in one pass.
    pub fn value_gradient(&self, p: Point3<T>) -> (T, Vec3<T>) {
        self.root.first(p)
    }

    /// `V = ½(ΔU + |∇U|²)`.
    pub fn derived_potential(&self, p: Point3<T>) -> T {
        let (_, g, h) = self.root.second(p);
        T::half() * (h.trace() + g.norm_squared())
    }
}

impl<T: Real> PotentialField<T> for Potential<T> {
    fn value(&self, p: Point3<T>) -> T {
        self.root.value(p)
    }

    fn gradient(&self, p: Point3<T>) -> Vec3<T> {
        self.root.first(p).1
    }

    fn hessian(&self, p: Point3<T>) -> Mat3<T> {
        self.root.second(p).2
    }
}

fn compile<T: Real>(spec: &PotentialSpec<T>) -> Node<T> {
    let transformed = |inner: Node<T>, rot: Mat3<T>, shift: Vec3<T>| Node::Transformed {
        inner: Box::new(inner),
        rot,
        rot_t: rot.transpose(),
        shift,
    };
    match spec {
        PotentialSpec::Quadratic { a, b, c } => Node::Quadratic { w: [*a, *b, *c] },
        PotentialSpec::Rotated { base, axis, angle } => {
            transformed(compile(base), rotation_matrix(*axis, *angle), Vec3::zero())
        }
        PotentialSpec::Curvilinear { a, b, c, cubic, scalings, coupling, scale } => Node::Curvilinear {
            w: [*a, *b, *c],
            cubic: *cubic,
            s: *scalings,
            k: *coupling,
            scale: *scale,
        },
        PotentialSpec::Mixture { components } => Node::Mixture(
            components
                .iter()
                .map(|comp| {
                    let rot = comp
                        .rotation
                        .map(|r| rotation_matrix(r.axis, r.angle))
                        .unwrap_or_else(Mat3::identity);
                    transformed(compile(&comp.potential), rot, comp.translation)
                })
                .collect(),
        ),
    }
}

/// Cubic-map values u_i, their gradients and Hessians at `p`.
struct CubicMap<T> {
    u: [T; 3],
    du: [Vec3<T>; 3],
}

fn cubic_eval<T: Real>(cubic: &[T; 3], t: T) -> (T, T, T) {
    let [c3, c2, c1] = *cubic;
    let three = T::lit(3.0);
    let val = ((c3 * t + c2) * t + c1) * t;
    let d1 = (three * c3 * t + T::two() * c2) * t + c1;
    let d2 = T::lit(6.0) * c3 * t + T::two() * c2;
    (val, d1, d2)
}

fn cubic_map<T: Real>(cubic: &[T; 3], s: &[T; 3], k: T, p: Point3<T>) -> CubicMap<T> {
    let mut u = [T::zero(); 3];
    let mut du = [Vec3::zero(); 3];
    for i in 0..3 {
        let (j, l) = ((i + 1) % 3, (i + 2) % 3);
        let (c, dc, _) = cubic_eval(cubic, s[i] * p[j]);
        u[i] = c + k * p[i] * (p[j] * p[j] + p[l] * p[l]);
        du[i][i] = k * (p[j] * p[j] + p[l] * p[l]);
        du[i][j] = s[i] * dc + T::two() * k * p[i] * p[j];
        du[i][l] = T::two() * k * p[i] * p[l];
    }
    CubicMap { u, du }
}

fn cubic_map_hessian<T: Real>(cubic: &[T; 3], s: &[T; 3], k: T, p: Point3<T>, i: usize) -> Mat3<T> {
    let (j, l) = ((i + 1) % 3, (i + 2) % 3);
    let (_, _, ddc) = cubic_eval(cubic, s[i] * p[j]);
    let two_k = T::two() * k;
    let mut h = Mat3::zero();
    h.m[i][j] = two_k * p[j];
    h.m[j][i] = two_k * p[j];
    h.m[i][l] = two_k * p[l];
    h.m[l][i] = two_k * p[l];
    h.m[j][j] = s[i] * s[i] * ddc + two_k * p[i];
    h.m[l][l] = two_k * p[i];
    h
}

impl<T: Real> Node<T> {
    fn value(&self, p: Point3<T>) -> T {
        match self {
            Node::Quadratic { w } => -T::half() * (w[0] * p.x * p.x + w[1] * p.y * p.y + w[2] * p.z * p.z),
            Node::Curvilinear { w, cubic, s, k, scale } => {
                let cm = cubic_map(cubic, s, *k, p);
                let sum = (0..3).fold(T::zero(), |acc, i| acc + w[i] * cm.u[i] * cm.u[i]);
                -T::half() * *scale * sum
            }
            Node::Transformed { inner, rot_t, shift, .. } => inner.value(*rot_t * (p - *shift)),
            Node::Mixture(nodes) => {
                let vals: Vec<T> = nodes.iter().map(|n| n.value(p)).collect();
                log_sum_exp(&vals)
            }
        }
    }

    fn first(&self, p: Point3<T>) -> (T, Vec3<T>) {
        match self {
            Node::Quadratic { w } => {
                let g = Vec3::new(-w[0] * p.x, -w[1] * p.y, -w[2] * p.z);
                (self.value(p), g)
            }
            Node::Curvilinear { w, cubic, s, k, scale } => {
                let cm = cubic_map(cubic, s, *k, p);
                let mut val = T::zero();
                let mut g = Vec3::zero();
                for i in 0..3 {
                    val = val + w[i] * cm.u[i] * cm.u[i];
                    g += cm.du[i] * (w[i] * cm.u[i]);
                }
                (-T::half() * *scale * val, -g * *scale)
            }
            Node::Transformed { inner, rot, rot_t, shift } => {
                let (v, g) = inner.first(*rot_t * (p - *shift));
                (v, *rot * g)
            }
            Node::Mixture(nodes) => {
                let parts: Vec<(T, Vec3<T>)> = nodes.iter().map(|n| n.first(p)).collect();
                let vals: Vec<T> = parts.iter().map(|(v, _)| *v).collect();
                let (lse, weights) = softmax(&vals);
                let g = parts
                    .iter()
                    .zip(&weights)
                    .fold(Vec3::zero(), |acc, ((_, g), &wt)| acc + *g * wt);
                (lse, g)
            }
        }
    }

    fn second(&self, p: Point3<T>) -> (T, Vec3<T>, Mat3<T>) {
        match self {
            Node::Quadratic { w } => {
                let (v, g) = self.first(p);
                (v, g, Mat3::diag(-w[0], -w[1], -w[2]))
            }
            Node::Curvilinear { w, cubic, s, k, scale } => {
                let cm = cubic_map(cubic, s, *k, p);
                let mut val = T::zero();
                let mut g = Vec3::zero();
                let mut h = Mat3::zero();
                for i in 0..3 {
                    val = val + w[i] * cm.u[i] * cm.u[i];
                    g += cm.du[i] * (w[i] * cm.u[i]);
                    let hu = cubic_map_hessian(cubic, s, *k, p, i);
                    h = h + (Mat3::outer(cm.du[i], cm.du[i]) + hu.scale(cm.u[i])).scale(w[i]);
                }
                (-T::half() * *scale * val, -g * *scale, h.scale(-*scale))
            }
            Node::Transformed { inner, rot, rot_t, shift } => {
                let (v, g, h) = inner.second(*rot_t * (p - *shift));
                (v, *rot * g, *rot * h * *rot_t)
            }
            Node::Mixture(nodes) => {
                let parts: Vec<(T, Vec3<T>, Mat3<T>)> = nodes.iter().map(|n| n.second(p)).collect();
                let vals: Vec<T> = parts.iter().map(|(v, _, _)| *v).collect();
                let (lse, weights) = softmax(&vals);
                let mut g = Vec3::zero();
                let mut h = Mat3::zero();
                for ((_, gi, hi), &wt) in parts.iter().zip(&weights) {
                    g += *gi * wt;
                    h = h + (*hi + Mat3::outer(*gi, *gi)).scale(wt);
                }
                (lse, g, h - Mat3::outer(g, g))
            }
        }
    }
}

/// `log Σ exp(v_i)`, shifted by the maximum.
pub fn log_sum_exp<T: Real>(vals: &[T]) -> T {
    let m = vals.iter().copied().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    let s = vals.iter().fold(T::zero(), |acc, &v| acc + (v - m).exp());
    m + s.ln()
}

fn softmax<T: Real>(vals: &[T]) -> (T, Vec<T>) {
    let lse = log_sum_exp(vals);
    (lse, vals.iter().map(|&v| (v - lse).exp()).collect())
}

/// `U(p)`.
pub fn potential<T: Real>(field: &impl PotentialField<T>, p: Point3<T>) -> T {
    field.value(p)
}

/// Analytic `∇U(p)`.
pub fn gradient<T: Real>(field: &impl PotentialField<T>, p: Point3<T>) -> GradientSample<T> {
    field.gradient(p)
}

/// Second-order central-difference gradient with step `h`.
pub fn gradient_fd<T: Real>(field: &impl PotentialField<T>, p: Point3<T>, h: T) -> GradientSample<T> {
    let mut g = Vec3::zero();
    for i in 0..3 {
        let mut fwd = p;
        let mut bwd = p;
        fwd[i] = fwd[i] + h;
        bwd[i] = bwd[i] - h;
        g[i] = (field.value(fwd) - field.value(bwd)) / (T::two() * h);
    }
    g
}

/// `V(p) = ½(ΔU(p) + |∇U(p)|²)`.
pub fn derived_potential<T: Real>(field: &impl PotentialField<T>, p: Point3<T>) -> T {
    T::half() * (field.laplacian(p) + field.gradient(p).norm_squared())
}
