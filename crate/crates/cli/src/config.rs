use std::path::{Path, PathBuf};

use diffsim::coords::CoordsOptions;
use diffsim::{presets, ChartOptions, Frame, PotentialField, PotentialSpec, Spacing, ToleranceConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Field,
    Stream,
    Coords,
    Drift,
    Sde,
}

/// A preset name or a full potential description.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PotentialChoice {
    Preset(String),
    Spec(PotentialSpec<f64>),
}

pub const PRESETS: [&str; 4] = ["gaussian", "rotated-gaussian", "curvilinear", "bimodal"];

pub fn preset(name: &str) -> Option<PotentialSpec<f64>> {
    Some(match name {
        "gaussian" => presets::gaussian(),
        "rotated-gaussian" => presets::rotated_gaussian(),
        "curvilinear" => presets::curvilinear_gaussian(),
        "bimodal" => presets::bimodal_curvilinear(),
        _ => return None,
    })
}

/// Evenly spaced nodes `min..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub const fn new(min: f64, max: f64, n: usize) -> Self {
        Self { min, max, n }
    }

    pub fn node(&self, i: usize) -> f64 {
        let t = i as f64 / (self.n - 1) as f64;
        self.min * (1.0 - t) + self.max * t
    }

    fn validate(&self, name: &str) -> Result<(), CliError> {
        if self.n < 2 {
            return Err(CliError::Config(format!("{name}: resolution must be at least 2, got {}", self.n)));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(CliError::Config(format!("{name}: need finite min < max, got [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelQuantity {
    Potential,
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldParams {
    pub x: Axis,
    pub y: Axis,
    pub z: Axis,
    pub level: f64,
    pub level_quantity: LevelQuantity,
}

impl Default for FieldParams {
    fn default() -> Self {
        let a = Axis::new(-3.0, 3.0, 50);
        Self { x: a, y: a, z: a, level: -2.0, level_quantity: LevelQuantity::Potential }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamParams {
    pub x: Axis,
    pub y: Axis,
    pub z: Vec<f64>,
}

impl Default for StreamParams {
    fn default() -> Self {
        let a = Axis::new(-10.0, 10.0, 21);
        Self { x: a, y: a, z: vec![0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoordsParams {
    pub frame: Frame,
    /// Sphere radius for the principal-axis search.
    pub radius: f64,
    pub start: [f64; 3],
    /// Skips the principal-axis search and builds the chart here.
    pub anchor: Option<[f64; 3]>,
    /// Measure distances along this much gradient-curve length instead of
    /// all the way to the critical set.
    pub distance_length: Option<f64>,
    pub n_theta: usize,
    pub n_rho: usize,
    pub spacing: Spacing,
    pub theta_length: Option<f64>,
    pub geodesic_time: f64,
    pub antipodal: bool,
    pub tolerances: ToleranceConfig<f64>,
    pub quad_tol: f64,
    pub optimizer_tol: f64,
    pub max_iter: usize,
}

impl Default for CoordsParams {
    fn default() -> Self {
        let co = CoordsOptions::<f64>::default();
        let ch = ChartOptions::<f64>::default();
        Self {
            frame: ch.frame,
            radius: 10.0,
            start: [10.0, 0.0, 0.0],
            anchor: None,
            distance_length: None,
            n_theta: ch.n_theta,
            n_rho: ch.n_rho,
            spacing: ch.spacing,
            theta_length: None,
            geodesic_time: ch.geodesic_time,
            antipodal: false,
            tolerances: co.tol,
            quad_tol: co.quad_tol,
            optimizer_tol: co.optimize.tol,
            max_iter: co.optimize.max_iter,
        }
    }
}

impl CoordsParams {
    pub fn coords_options(&self) -> CoordsOptions<f64> {
        let mut co = CoordsOptions { tol: self.tolerances, quad_tol: self.quad_tol, ..Default::default() };
        co.optimize.tol = self.optimizer_tol;
        co.optimize.max_iter = self.max_iter;
        co
    }

    pub fn chart_options(&self) -> ChartOptions<f64> {
        ChartOptions {
            coords: self.coords_options(),
            frame: self.frame,
            n_theta: self.n_theta,
            n_rho: self.n_rho,
            spacing: self.spacing,
            theta_length: self.theta_length,
            geodesic_time: self.geodesic_time,
        }
    }
}

/// Drift correction on the quadrant `y, z ≥ 0` of the level set `U = level`,
/// the sheet reached along `+x` (or the frame axis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftParams {
    pub frame: Frame,
    pub level: f64,
    /// When set, `level` is replaced by U at this point.
    pub through: Option<[f64; 3]>,
    /// The two transverse coordinates, in frame order.
    pub u: Axis,
    pub v: Axis,
    /// Search bound along the frame axis.
    pub axis_max: f64,
}

impl Default for DriftParams {
    fn default() -> Self {
        Self {
            frame: Frame::X,
            level: -50.0,
            through: None,
            u: Axis::new(0.0, 7.0, 15),
            v: Axis::new(0.0, 5.0, 11),
            axis_max: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeParams {
    pub dt: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub x0: [f64; 3],
    pub thin: usize,
    pub chains: usize,
    pub divergence_bound: Option<f64>,
}

impl Default for SdeParams {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            n_steps: 1_000_000,
            burn_in: 50_000,
            x0: [0.0; 3],
            thin: 1000,
            chains: 1,
            divergence_bound: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    potential: PotentialChoice,
    out: Option<PathBuf>,
    seed: Option<u64>,
    field: Option<FieldParams>,
    stream: Option<StreamParams>,
    coords: Option<CoordsParams>,
    drift: Option<DriftParams>,
    sde: Option<SdeParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Field(FieldParams),
    Stream(StreamParams),
    Coords(CoordsParams),
    Drift(DriftParams),
    Sde(SdeParams),
}

/// Fully resolved configuration of one run; echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub potential: PotentialSpec<f64>,
    pub out: PathBuf,
    pub seed: u64,
    pub params: Params,
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(command: Command, path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(command, &text, overrides)
    }

    pub fn parse(command: Command, text: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let potential = match file.potential {
            PotentialChoice::Preset(name) => preset(&name).ok_or_else(|| {
                CliError::Config(format!("unknown preset '{name}' (expected one of {})", PRESETS.join(", ")))
            })?,
            PotentialChoice::Spec(spec) => spec,
        };
        potential.validate()?;
        let params = match command {
            Command::Field => Params::Field(file.field.unwrap_or_default()),
            Command::Stream => Params::Stream(file.stream.unwrap_or_default()),
            Command::Coords => Params::Coords(file.coords.unwrap_or_default()),
            Command::Drift => Params::Drift(file.drift.unwrap_or_default()),
            Command::Sde => Params::Sde(file.sde.unwrap_or_default()),
        };
        let mut params = params;
        if let Params::Drift(d) = &mut params {
            if let Some(p) = d.through {
                d.level = diffsim::Potential::new(potential.clone())?.value(p.into());
            }
        }
        let cfg = RunConfig {
            command,
            potential,
            out: overrides.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            seed: overrides.seed.or(file.seed).unwrap_or(0),
            params,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        match &self.params {
            Params::Field(p) => {
                p.x.validate("field.x")?;
                p.y.validate("field.y")?;
                p.z.validate("field.z")?;
                if !p.level.is_finite() {
                    return bad("field.level must be finite".into());
                }
            }
            Params::Stream(p) => {
                p.x.validate("stream.x")?;
                p.y.validate("stream.y")?;
                if p.z.is_empty() || p.z.iter().any(|z| !z.is_finite()) {
                    return bad("stream.z must list at least one finite slice height".into());
                }
            }
            Params::Coords(p) => {
                if p.n_theta < 2 || p.n_rho < 2 {
                    return bad(format!("coords: n_theta and n_rho must be at least 2, got {} and {}", p.n_theta, p.n_rho));
                }
                if !(p.radius > 0.0) && p.anchor.is_none() {
                    return bad(format!("coords.radius must be positive, got {}", p.radius));
                }
                if let Some(l) = p.distance_length {
                    if !(l > 0.0) {
                        return bad(format!("coords.distance_length must be positive, got {l}"));
                    }
                }
                if !(p.geodesic_time > 0.0 && p.quad_tol > 0.0 && p.optimizer_tol > 0.0) {
                    return bad("coords: geodesic_time, quad_tol and optimizer_tol must be positive".into());
                }
                p.tolerances.validate()?;
            }
            Params::Drift(p) => {
                p.u.validate("drift.u")?;
                p.v.validate("drift.v")?;
                if !(p.axis_max > 0.0) || !p.level.is_finite() {
                    return bad("drift: axis_max must be positive and level finite".into());
                }
            }
            Params::Sde(p) => {
                if p.chains == 0 {
                    return bad("sde.chains must be at least 1".into());
                }
                self.simulation(p).validate()?;
            }
        }
        Ok(())
    }

    pub fn simulation(&self, p: &SdeParams) -> diffsim::SimulationConfigD {
        let mut sim = diffsim::SimulationConfig::new(p.dt, p.n_steps, p.burn_in, self.seed, p.x0.into());
        sim.thin = p.thin;
        sim.divergence_bound = p.divergence_bound;
        sim
    }
}
