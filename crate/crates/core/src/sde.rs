//! Euler–Maruyama simulation of `dX = dB + ∇U dt` with seeded, reproducible
//! noise, sample moments and a batch-means effective sample size.
//!
//! Noise for coordinate `d` of chain `c` comes from ChaCha20 stream `3c + d`
//! keyed by the seed, so every chain and coordinate has its own counter
//! sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Potential, PotentialField, PotentialSpec};
use crate::linalg::{Mat3, Point3, Vec3};
use crate::scalar::Real;

const BATCHES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct SimulationConfig<T> {
    pub dt: T,
    pub n_steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub x0: Point3<T>,
    /// Keep every `thin`-th state in the returned path.
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// `|X|` beyond which the run is declared divergent; defaults to
    /// `10³ (|x0| + 1)`.
    #[serde(default)]
    pub divergence_bound: Option<T>,
}

fn default_thin() -> usize {
    1000
}

impl<T: Real> SimulationConfig<T> {
    pub fn new(dt: T, n_steps: usize, burn_in: usize, seed: u64, x0: Point3<T>) -> Self {
        Self { dt, n_steps, burn_in, seed, x0, thin: default_thin(), divergence_bound: None }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return bad(format!("dt must be positive and finite, got {}", self.dt));
        }
        if self.burn_in >= self.n_steps {
            return bad(format!("burn_in ({}) must be less than n_steps ({})", self.burn_in, self.n_steps));
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if !self.x0.is_finite() {
            return bad("x0 must be finite".into());
        }
        if let Some(b) = self.divergence_bound {
            if !(b > T::zero()) {
                return bad(format!("divergence bound must be positive, got {b}"));
            }
        }
        Ok(())
    }

    pub fn bound(&self) -> T {
        self.divergence_bound.unwrap_or_else(|| T::lit(1e3) * (self.x0.norm() + T::one()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct MomentSummary<T> {
    pub n_samples: usize,
    pub mean: Vec3<T>,
    pub covariance: Mat3<T>,
    /// Per-coordinate effective sample size from batch means.
    pub ess: Vec3<T>,
}

impl<T: Real> MomentSummary<T> {
    pub fn variances(&self) -> Vec3<T> {
        Vec3::new(self.covariance.m[0][0], self.covariance.m[1][1], self.covariance.m[2][2])
    }

    /// Standard error of each marginal variance, `√(2/ESS)·s²`.
    pub fn variance_standard_errors(&self) -> Vec3<T> {
        let v = self.variances();
        Vec3::new(
            (T::two() / self.ess.x).sqrt() * v.x,
            (T::two() / self.ess.y).sqrt() * v.y,
            (T::two() / self.ess.z).sqrt() * v.z,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct PathSample<T> {
    pub step: usize,
    pub x: Point3<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput<T> {
    pub path: Vec<PathSample<T>>,
    pub moments: MomentSummary<T>,
}

struct Noise {
    streams: [ChaCha20Rng; 3],
}

impl Noise {
    fn new(seed: u64, chain: u64) -> Self {
        let streams = [0u64, 1, 2].map(|d| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(3 * chain + d);
            rng
        });
        Self { streams }
    }

    fn draw<T: Real>(&mut self) -> Vec3<T> {
        let mut s = [T::zero(); 3];
        for (out, rng) in s.iter_mut().zip(self.streams.iter_mut()) {
            let z: f64 = StandardNormal.sample(rng);
            *out = T::lit(z);
        }
        Vec3::from(s)
    }
}

/// Running mean/covariance plus batch sums for the ESS estimate.
struct Accumulator<T> {
    n: usize,
    mean: Vec3<T>,
    m2: Mat3<T>,
    batch_len: usize,
    batch_sum: Vec3<T>,
    batch_fill: usize,
    batch_means: Vec<Vec3<T>>,
}

impl<T: Real> Accumulator<T> {
    fn new(expected: usize) -> Self {
        Self {
            n: 0,
            mean: Vec3::zero(),
            m2: Mat3::zero(),
            batch_len: (expected / BATCHES).max(1),
            batch_sum: Vec3::zero(),
            batch_fill: 0,
            batch_means: Vec::with_capacity(BATCHES + 1),
        }
    }

    fn push(&mut self, x: Vec3<T>) {
        self.n += 1;
        let d = x - self.mean;
        self.mean = self.mean + d / T::lit(self.n as f64);
        self.m2 = self.m2 + Mat3::outer(d, x - self.mean);
        self.batch_sum = self.batch_sum + x;
        self.batch_fill += 1;
        if self.batch_fill == self.batch_len {
            self.batch_means.push(self.batch_sum / T::lit(self.batch_len as f64));
            self.batch_sum = Vec3::zero();
            self.batch_fill = 0;
        }
    }

    fn finish(self) -> MomentSummary<T> {
        let n = T::lit(self.n as f64);
        let mut cov = if self.n > 1 { self.m2.scale(T::one() / (n - T::one())) } else { Mat3::zero() };
        for i in 0..3 {
            for j in 0..i {
                let s = (cov.m[i][j] + cov.m[j][i]) * T::half();
                cov.m[i][j] = s;
                cov.m[j][i] = s;
            }
        }
        let nb = self.batch_means.len();
        let mut ess = Vec3::new(n, n, n);
        if nb >= 2 {
            let nbt = T::lit(nb as f64);
            let bm = self.batch_means.iter().fold(Vec3::zero(), |a, b| a + *b) / nbt;
            for d in 0..3 {
                let var_b = self.batch_means.iter().fold(T::zero(), |a, b| a + (b[d] - bm[d]).powi(2)) / (nbt - T::one());
                let asym = var_b * T::lit(self.batch_len as f64);
                if asym > T::zero() {
                    ess[d] = (n * cov.m[d][d] / asym).min(n);
                }
            }
        }
        MomentSummary { n_samples: self.n, mean: self.mean, covariance: cov, ess }
    }
}

/// Simulates one chain: `Xₙ₊₁ = Xₙ + ∇U(Xₙ) dt + √dt ξₙ`, with moments over
/// the states after `burn_in`.
pub fn euler_maruyama_chain<T: Real>(u: &impl PotentialField<T>, cfg: &SimulationConfig<T>, chain: u64) -> Result<SimulationOutput<T>> {
    cfg.validate()?;
    let mut noise = Noise::new(cfg.seed, chain);
    let sqrt_dt = cfg.dt.sqrt();
    let bound = cfg.bound();
    let mut x = cfg.x0;
    let mut path = vec![PathSample { step: 0, x }];
    let mut acc = Accumulator::new(cfg.n_steps - cfg.burn_in);
    for step in 1..=cfg.n_steps {
        let xi = noise.draw::<T>();
        x = x + u.gradient(x) * cfg.dt + xi * sqrt_dt;
        let r = x.norm();
        if !(r <= bound) {
            return Err(Error::Divergence { step, radius: r.to_f64_lossy() });
        }
        if step > cfg.burn_in {
            acc.push(x);
        }
        if step % cfg.thin == 0 {
            path.push(PathSample { step, x });
        }
    }
    Ok(SimulationOutput { path, moments: acc.finish() })
}

pub fn euler_maruyama<T: Real>(u: &impl PotentialField<T>, cfg: &SimulationConfig<T>) -> Result<SimulationOutput<T>> {
    euler_maruyama_chain(u, cfg, 0)
}

/// Independent chains `0..n_chains` run in parallel, results in chain order.
pub fn run_chains<T: Real>(
    u: &impl PotentialField<T>,
    cfg: &SimulationConfig<T>,
    n_chains: usize,
) -> Vec<Result<SimulationOutput<T>>> {
    (0..n_chains as u64).into_par_iter().map(|c| euler_maruyama_chain(u, cfg, c)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityValue<T> {
    pub value: T,
    /// `false` when `value` is the bare `e^U`.
    pub normalized: bool,
}

/// `e^U(p)`, normalized to a probability density for quadratic potentials and
/// their rotations.
pub fn invariant_density<T: Real>(spec: &PotentialSpec<T>, p: Point3<T>) -> Result<DensityValue<T>> {
    let e_u = Potential::new(spec.clone())?.value(p).exp();
    let norm = density_normalization(spec);
    Ok(match norm {
        Some(c) => DensityValue { value: c * e_u, normalized: true },
        None => DensityValue { value: e_u, normalized: false },
    })
}

/// Factor turning `e^U` into a probability density, where it is known in
/// closed form.
pub fn density_normalization<T: Real>(spec: &PotentialSpec<T>) -> Option<T> {
    match spec {
        PotentialSpec::Quadratic { a, b, c } => {
            Some((*a * *b * *c).sqrt() * (T::two() * T::PI()).powf(T::lit(-1.5)))
        }
        PotentialSpec::Rotated { base, .. } => density_normalization(base),
        _ => None,
    }
}
