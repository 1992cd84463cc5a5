//! Shared numerical kernel.

pub mod ode;
pub mod optimize;
pub mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::Mat2;
use crate::scalar::Real;

pub use ode::{integrate_fixed, integrate_ode, OdeSolution, StopReason};
pub use optimize::{maximize_with_penalty, minimize_on_sphere, nelder_mead, OptimizeOptions, OptimizeResult};
pub use quadrature::quadrature;

/// Error control for the adaptive integrators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_steps: usize,
    /// Upper bound on the ODE step size; `None` leaves it to the controller.
    #[serde(default)]
    pub max_step: Option<T>,
}

impl<T: Real> Default for ToleranceConfig<T> {
    fn default() -> Self {
        Self { rel_tol: T::default_rel_tol(), abs_tol: T::default_abs_tol(), max_steps: 200_000, max_step: None }
    }
}

impl<T: Real> ToleranceConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > T::zero() && self.abs_tol > T::zero()) || self.max_steps == 0 {
            return Err(Error::InvalidConfig(format!(
                "tolerances must be positive and max_steps >= 1 (rel {}, abs {}, steps {})",
                self.rel_tol, self.abs_tol, self.max_steps
            )));
        }
        Ok(())
    }
}

/// Relative determinant floor for [`linsolve2`].
pub const DET_EPS: f64 = 1e-14;

/// Solves `A x = b` by Cramer's rule.
pub fn linsolve2<T: Real>(a: &Mat2<T>, b: [T; 2]) -> Result<[T; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let norm2 = a.iter().flatten().fold(T::zero(), |acc, &v| acc + v * v);
    if !det.is_finite() || det.abs() <= T::lit(DET_EPS) * norm2 {
        return Err(Error::SingularSystem { det: det.to_f64_lossy() });
    }
    Ok([(b[0] * a[1][1] - a[0][1] * b[1]) / det, (a[0][0] * b[1] - b[0] * a[1][0]) / det])
}
