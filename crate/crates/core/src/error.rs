use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid potential specification: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("gradient vanishes at the evaluation point (critical point of U)")]
    ZeroGradient,
    #[error("transverse gradient components vanish; the metric is isotropic on the tangent plane")]
    DegenerateTransverse,
    #[error("frame axis gradient component vanishes; frame is singular here")]
    FrameSingular,
    #[error("singular 2x2 system (|det| = {det:e})")]
    SingularSystem { det: f64 },
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("simulation diverged at step {step} (|X| = {radius:e})")]
    Divergence { step: usize, radius: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
