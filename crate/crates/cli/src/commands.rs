use std::time::Instant;

use diffsim::coords::{antipodal_hint, manifold_distance};
use diffsim::metric::frame_vectors;
use diffsim::sde::{density_normalization, run_chains};
use diffsim::{
    build_rho_theta_surface, drift_correction, find_antipodal, find_principal_axis, initial_directions, CoordinateChart,
    DistanceMode, PotentialD, PotentialField, StopReason, Vec3d,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CoordsParams, DriftParams, FieldParams, LevelQuantity, Params, RunConfig, SdeParams, StreamParams};
use crate::error::CliError;
use crate::grid::{bisect, component_sizes};
use crate::output::{Cell, OutputDir, RunManifest};

/// What a command produced besides its files.
#[derive(Debug, Default)]
pub struct Outcome {
    pub flags: Vec<String>,
    pub results: Value,
}

/// Runs the configured command, writes its files and then the manifest.
/// A manifest with `converged: false` maps to exit code 3.
pub fn run(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let clock = Instant::now();
    let u = PotentialD::new(cfg.potential.clone())?;
    let mut out = OutputDir::create(&cfg.out)?;
    let outcome = match &cfg.params {
        Params::Field(p) => field(cfg, p, &u, &mut out)?,
        Params::Stream(p) => stream(p, &u, &mut out)?,
        Params::Coords(p) => coords(p, &u, &mut out)?,
        Params::Drift(p) => drift(p, &u, &mut out)?,
        Params::Sde(p) => sde(cfg, p, &u, &mut out)?,
    };
    let manifest = RunManifest {
        tool: "diffsim".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        outputs: out.files().to_vec(),
        converged: outcome.flags.is_empty(),
        flags: outcome.flags,
        results: outcome.results,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    };
    manifest.write(out.path())?;
    Ok(manifest)
}

fn xyz(p: Vec3d) -> [f64; 3] {
    [p.x, p.y, p.z]
}

fn field(cfg: &RunConfig, p: &FieldParams, u: &PotentialD, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let dims = [p.x.n, p.y.n, p.z.n];
    let scale = density_normalization(&cfg.potential);
    let rows: Vec<[f64; 5]> = (0..dims[0] * dims[1] * dims[2])
        .into_par_iter()
        .map(|c| {
            let (i, j, k) = (c / (dims[1] * dims[2]), (c / dims[2]) % dims[1], c % dims[2]);
            let pt = Vec3d::new(p.x.node(i), p.y.node(j), p.z.node(k));
            let v = u.value(pt);
            [pt.x, pt.y, pt.z, v, scale.unwrap_or(1.0) * v.exp()]
        })
        .collect();
    let column = match p.level_quantity {
        LevelQuantity::Potential => 3,
        LevelQuantity::Density => 4,
    };
    let mask: Vec<bool> = rows.iter().map(|r| r[column] >= p.level).collect();
    let sizes = component_sizes(&mask, dims);
    let nonfinite = rows.iter().filter(|r| !r[3].is_finite()).count();
    out.write_csv("grid.csv", &["x", "y", "z", "U", "density"], rows.iter().map(|r| r.map(Cell::Float)))?;
    Ok(Outcome {
        flags: Vec::new(),
        results: json!({
            "dims": dims,
            "level": { "quantity": p.level_quantity, "value": p.level },
            "density_normalized": scale.is_some(),
            "superlevel_components": sizes.len(),
            "component_sizes": sizes,
            "nonfinite_values": nonfinite,
        }),
    })
}

fn stream(p: &StreamParams, u: &PotentialD, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut slices = Vec::new();
    for (s, &z) in p.z.iter().enumerate() {
        let rows: Vec<[f64; 4]> = (0..p.x.n * p.y.n)
            .into_par_iter()
            .map(|c| {
                let pt = Vec3d::new(p.x.node(c / p.y.n), p.y.node(c % p.y.n), z);
                let g = u.gradient(pt);
                [pt.x, pt.y, g.x, g.y]
            })
            .collect();
        let name = format!("stream_{s:02}.csv");
        out.write_csv(&name, &["x", "y", "P", "Q"], rows.iter().map(|r| r.map(Cell::Float)))?;
        slices.push(json!({ "file": name, "z": z }));
    }
    Ok(Outcome { flags: Vec::new(), results: json!({ "slices": slices }) })
}

#[derive(Debug, Serialize)]
struct CurveRecord {
    kind: &'static str,
    file: Option<String>,
    seed_index: usize,
    orientation: i8,
    seed_position: f64,
    seed: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_direction: Option<[f64; 2]>,
    stop_reason: Option<StopReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    singularity: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    arclength: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn side(orientation: i8) -> &'static str {
    if orientation > 0 {
        "plus"
    } else {
        "minus"
    }
}

/// Writes every curve of `chart` under `prefix`; curves that failed or ran out
/// of steps are flagged.
fn emit_chart(
    chart: &CoordinateChart<f64>,
    prefix: &str,
    out: &mut OutputDir,
    flags: &mut Vec<String>,
) -> Result<(Value, Vec<CurveRecord>), CliError> {
    let axis = format!("{prefix}rho_axis.csv");
    out.write_csv(&axis, &["s", "x", "y", "z"], chart.rho_curve.knots().map(|(t, q)| [t, q.x, q.y, q.z].map(Cell::Float)))?;
    if chart.rho_curve.stop_reason() == StopReason::StepFailure {
        flags.push(format!("{axis}: gradient curve did not reach the critical set"));
    }
    let mut records = Vec::new();
    for c in &chart.theta_curves {
        let mut rec = CurveRecord {
            kind: "theta",
            file: None,
            seed_index: c.seed_index,
            orientation: c.orientation,
            seed_position: c.seed_position,
            seed: xyz(c.seed),
            initial_direction: Some([c.v0, c.w0]),
            stop_reason: None,
            singularity: None,
            arclength: None,
            error: None,
        };
        match &c.geodesic {
            Ok(g) => {
                let name = format!("{prefix}theta_{:02}_{}.csv", c.seed_index, side(c.orientation));
                let rows = g.ode.times.iter().zip(&g.ode.states).map(|(&t, y)| [t, y[6], y[0], y[1], y[2]].map(Cell::Float));
                out.write_csv(&name, &["t", "s", "x", "y", "z"], rows)?;
                if g.stop_reason() == StopReason::StepFailure {
                    flags.push(format!("{name}: geodesic integration failed"));
                }
                rec.file = Some(name);
                rec.stop_reason = Some(g.stop_reason());
                rec.singularity = g.singular.map(|s| format!("{s:?}"));
                rec.arclength = Some(g.total_arclength());
            }
            Err(e) => {
                flags.push(format!("{prefix}theta curve {} ({}): {e}", c.seed_index, side(c.orientation)));
                rec.error = Some(e.to_string());
            }
        }
        records.push(rec);
    }
    for c in &chart.rho_curves {
        let mut rec = CurveRecord {
            kind: "rho",
            file: None,
            seed_index: c.seed_index,
            orientation: c.orientation,
            seed_position: c.seed_position,
            seed: xyz(c.seed),
            initial_direction: None,
            stop_reason: None,
            singularity: None,
            arclength: None,
            error: None,
        };
        match &c.curve {
            Ok(curve) => {
                let name = format!("{prefix}rho_{:02}_{}.csv", c.seed_index, side(c.orientation));
                out.write_csv(&name, &["s", "x", "y", "z"], curve.knots().map(|(t, q)| [t, q.x, q.y, q.z].map(Cell::Float)))?;
                if curve.stop_reason() == StopReason::StepFailure {
                    flags.push(format!("{name}: gradient curve integration failed"));
                }
                rec.file = Some(name);
                rec.stop_reason = Some(curve.stop_reason());
                rec.arclength = Some(curve.t_end());
            }
            Err(e) => {
                flags.push(format!("{prefix}rho curve {} ({}): {e}", c.seed_index, side(c.orientation)));
                rec.error = Some(e.to_string());
            }
        }
        records.push(rec);
    }
    let summary = json!({
        "rho_axis": axis,
        "critical_point": xyz(chart.rho_curve.end_point()),
        "rho_axis_length": chart.rho_curve.t_end(),
    });
    Ok((summary, records))
}

/// Anchor point, its directions and its chart, as one manifest section.
fn chart_section(
    p: &CoordsParams,
    u: &PotentialD,
    anchor: Vec3d,
    prefix: &str,
    out: &mut OutputDir,
    flags: &mut Vec<String>,
) -> Result<(Value, Option<Vec3d>), CliError> {
    let directions = match initial_directions(u, p.frame, anchor) {
        Ok((d, n)) => Some([d, n]),
        Err(e) => {
            flags.push(format!("{prefix}initial directions: {e}"));
            None
        }
    };
    let mut section = json!({ "point": xyz(anchor), "directions": directions });
    let mut critical = None;
    match build_rho_theta_surface(u, anchor, &p.chart_options()) {
        Ok(chart) => {
            let (summary, curves) = emit_chart(&chart, prefix, out, flags)?;
            critical = Some(chart.rho_curve.end_point());
            section["chart"] = summary;
            section["curves"] = serde_json::to_value(curves).expect("plain data");
        }
        Err(e) => flags.push(format!("{prefix}chart: {e}")),
    }
    Ok((section, critical))
}

fn coords(p: &CoordsParams, u: &PotentialD, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let co = p.coords_options();
    let mode = match p.distance_length {
        Some(l) => DistanceMode::FixedLength(l),
        None => DistanceMode::ToCriticalSet,
    };
    let mut flags = Vec::new();
    let mut results = json!({});

    let anchor = match p.anchor {
        Some(a) => Vec3d::from(a),
        None => {
            let r = find_principal_axis(u, p.radius, p.start.into(), mode, &co)?;
            if !r.converged {
                flags.push(format!("principal axis search did not converge after {} iterations", r.iterations));
            }
            results["principal_search"] = json!({
                "converged": r.converged,
                "iterations": r.iterations,
                "objective": r.riemannian_distance,
            });
            r.point
        }
    };
    let distance = match manifold_distance(u, anchor, DistanceMode::ToCriticalSet, &co) {
        Ok(d) => Some(d),
        Err(e) => {
            flags.push(format!("riemannian distance at the anchor: {e}"));
            None
        }
    };
    let (mut principal, critical) = chart_section(p, u, anchor, "", out, &mut flags)?;
    principal["riemannian_distance"] = json!(distance);
    results["principal"] = principal;

    if p.antipodal {
        match (distance, critical) {
            (Some(d0), Some(crit)) => {
                let r = find_antipodal(u, d0, antipodal_hint(anchor, crit), &co)?;
                if !r.converged {
                    flags.push(format!("antipodal search did not converge after {} iterations", r.iterations));
                }
                let (mut section, _) = chart_section(p, u, r.point, "antipode_", out, &mut flags)?;
                section["riemannian_distance"] = json!(r.riemannian_distance);
                section["search"] = json!({ "converged": r.converged, "iterations": r.iterations });
                results["antipode"] = section;
            }
            _ => flags.push("antipodal search skipped: no distance or critical point at the anchor".into()),
        }
    }
    Ok(Outcome { flags, results })
}

fn drift(p: &DriftParams, u: &PotentialD, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let (axis, j, k) = p.frame.indices();
    let rows: Vec<Option<[f64; 6]>> = (0..p.u.n * p.v.n)
        .into_par_iter()
        .map(|c| {
            let mut base = [0.0; 3];
            base[j] = p.u.node(c / p.v.n);
            base[k] = p.v.node(c % p.v.n);
            let at = |s: f64| {
                let mut q = base;
                q[axis] = s;
                Vec3d::from(q)
            };
            let s = bisect(|s| u.value(at(s)) - p.level, 0.0, p.axis_max)?;
            let q = at(s);
            let [dv, dw] = drift_correction(u, p.frame, q).ok()?;
            let ambient = frame_vectors(u.gradient(q), p.frame).combine(dv, dw);
            Some([q.x, q.y, q.z, dv, dw, ambient.norm()])
        })
        .collect();
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    let n = out.write_csv(
        "drift.csv",
        &["x", "y", "z", "delta_v", "delta_w", "magnitude"],
        rows.iter().flatten().map(|r| r.map(Cell::Float)),
    )?;
    Ok(Outcome {
        flags: Vec::new(),
        results: json!({ "level": p.level, "points": n, "skipped_nodes": skipped }),
    })
}

fn sde(cfg: &RunConfig, p: &SdeParams, u: &PotentialD, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let sim = cfg.simulation(p);
    let mut flags = Vec::new();
    let mut chains = Vec::new();
    for (c, res) in run_chains(u, &sim, p.chains).into_iter().enumerate() {
        match res {
            Ok(run) => {
                let name = format!("path_{c:03}.csv");
                let rows = run.path.iter().map(|s| [Cell::from(s.step), s.x.x.into(), s.x.y.into(), s.x.z.into()]);
                out.write_csv(&name, &["step", "x", "y", "z"], rows)?;
                let m = &run.moments;
                chains.push(json!({
                    "chain": c,
                    "path": name,
                    "n_samples": m.n_samples,
                    "mean": xyz(m.mean),
                    "covariance": m.covariance.m,
                    "variances": xyz(m.variances()),
                    "variance_standard_errors": xyz(m.variance_standard_errors()),
                    "effective_sample_size": xyz(m.ess),
                }));
            }
            Err(e) => {
                flags.push(format!("chain {c}: {e}"));
                chains.push(json!({ "chain": c, "error": e.to_string() }));
            }
        }
    }
    let moments = json!({ "chains": chains });
    out.write_json("moments.json", &moments, p.chains)?;
    Ok(Outcome { flags, results: moments })
}
