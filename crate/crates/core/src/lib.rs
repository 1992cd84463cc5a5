//! Gradient-aligned geometry and diffusion for analytic potentials on R³.
//!
//! Everything is generic over the scalar type (`f32` or `f64`); the aliases
//! below fix the common `f64` case.

pub mod coords;
pub mod diffusion;
pub mod error;
pub mod fields;
pub mod flows;
pub mod geodesics;
pub mod linalg;
pub mod metric;
pub mod numerics;
pub mod scalar;
pub mod sde;

pub use coords::{
    build_rho_theta_surface, find_antipodal, find_principal_axis, initial_directions, ChartOptions, CoordinateChart,
    CoordsOptions, DistanceMode, PrincipalAxisResult, Spacing,
};
pub use diffusion::{
    drift_correction, hormander_expand, ito_to_stratonovich_drift, laplace_beltrami_coeffs, projected_coeffs,
    projection_operator, DiffusionCoeffs, RhoColumn,
};
pub use error::{Error, Result};
pub use fields::{
    derived_potential, gradient, gradient_fd, potential, presets, AxisAngle, GradientSample, MixtureComponent,
    Potential, PotentialField, PotentialSpec,
};
pub use linalg::{rotation_matrix, symmetric_eigen, Mat3, Point3, SymmetricEigen, Vec3};
pub use metric::{
    dissimilarity_metric, frame_transform, frobenius_check, metric_eigensystem, tangent_basis, Frame, MetricTensor,
    TangentBasis,
};
pub use flows::{integral_curve, normalized_integral_curve, CurveSolution, FieldTag};
pub use geodesics::{geodesic_shoot, GeodesicOptions, GeodesicSolution};
pub use numerics::{OdeSolution, StopReason, ToleranceConfig};
pub use scalar::Real;
pub use sde::{euler_maruyama, invariant_density, MomentSummary, SimulationConfig, SimulationOutput};

pub type Vec3d = Vec3<f64>;
pub type Mat3d = Mat3<f64>;
pub type PotentialSpecD = PotentialSpec<f64>;
pub type PotentialD = Potential<f64>;
pub type CoordsOptionsD = CoordsOptions<f64>;
pub type SimulationConfigD = SimulationConfig<f64>;
