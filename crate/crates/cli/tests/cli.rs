use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_diffsim");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let status = Command::new(BIN)
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap();
    status.status.code().unwrap()
}

fn run_text(cmd: &str, text: &str, dir: &Path, extra: &[&str]) -> (i32, PathBuf) {
    let cfg = dir.join(format!("{cmd}.toml"));
    std::fs::write(&cfg, text).unwrap();
    let out = dir.join(format!("{cmd}-out"));
    (run(cmd, &cfg, &out, extra), out)
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn vec3(v: &Value) -> [f64; 3] {
    let a = v.as_array().unwrap();
    [0, 1, 2].map(|i| a[i].as_f64().unwrap())
}

/// Every file in `dir` with its bytes; the manifest without its clock.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let bytes = if name == "manifest.json" {
            let mut m = manifest(dir);
            m.as_object_mut().unwrap().remove("wall_clock_seconds");
            m["config"].as_object_mut().unwrap().remove("out");
            serde_json::to_vec(&m).unwrap()
        } else {
            std::fs::read(&path).unwrap()
        };
        files.insert(name, bytes);
    }
    files
}

#[test]
fn gaussian_field_grid_has_one_row_per_node() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    assert_eq!(run("field", &configs().join("gaussian_field.toml"), &out, &[]), 0);
    let m = manifest(&out);
    assert_eq!(m["outputs"][0]["rows"], 125_000);
    let (header, rows) = read_csv(&out.join("grid.csv"));
    assert_eq!(header, ["x", "y", "z", "U", "density"]);
    assert_eq!(rows.len(), 125_000);
    for r in rows.iter().step_by(997) {
        let u = -0.5 * (r[0] * r[0] + 2.0 * r[1] * r[1] + 4.0 * r[2] * r[2]);
        assert!((r[3] - u).abs() <= 1e-14 * (1.0 + u.abs()));
        let norm = 8f64.sqrt() / (2.0 * std::f64::consts::PI).powf(1.5);
        assert!((r[4] - norm * u.exp()).abs() <= 1e-15);
    }
    assert_eq!(m["results"]["level"]["value"], -2.0);
}

#[test]
fn curvilinear_field_is_finite_everywhere() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    assert_eq!(run("field", &configs().join("curvilinear_field.toml"), &out, &[]), 0);
    let (_, rows) = read_csv(&out.join("grid.csv"));
    assert!(rows.iter().all(|r| r.iter().all(|v| v.is_finite())));
    assert_eq!(manifest(&out)["results"]["nonfinite_values"], 0);
}

/// Components of a boolean grid by union–find over face neighbours.
fn union_find_components(mask: &[bool], [nx, ny, nz]: [usize; 3]) -> usize {
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut parent: Vec<usize> = (0..mask.len()).collect();
    let id = |i, j, k| (i * ny + j) * nz + k;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let a = id(i, j, k);
                if !mask[a] {
                    continue;
                }
                for b in [(i + 1 < nx).then(|| id(i + 1, j, k)), (j + 1 < ny).then(|| id(i, j + 1, k)), (k + 1 < nz).then(|| id(i, j, k + 1))]
                    .into_iter()
                    .flatten()
                {
                    if mask[b] {
                        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    (0..mask.len()).filter(|&i| mask[i] && find(&mut parent, i) == i).count()
}

#[test]
fn bimodal_density_level_splits_into_two_components() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("b");
    assert_eq!(run("field", &configs().join("bimodal_field.toml"), &out, &[]), 0);
    let m = manifest(&out);
    let dims = m["results"]["dims"].as_array().unwrap().iter().map(|d| d.as_u64().unwrap() as usize).collect::<Vec<_>>();
    let (_, rows) = read_csv(&out.join("grid.csv"));
    let mask: Vec<bool> = rows.iter().map(|r| r[4] >= 1e-4).collect();
    let oracle = union_find_components(&mask, [dims[0], dims[1], dims[2]]);
    assert_eq!(oracle, 2);
    assert_eq!(m["results"]["superlevel_components"], 2);
    // each cluster sits around one mixture centre
    for centre in [[20.0, 20.0, -10.0], [-20.0, -20.0, 10.0]] {
        let near = rows.iter().zip(&mask).filter(|(r, &on)| {
            on && (0..3).map(|d| (r[d] - centre[d]).powi(2)).sum::<f64>() < 30f64.powi(2)
        });
        assert!(near.count() > 100);
    }
}

#[test]
fn stream_slices_hold_the_gradient() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "potential = \"gaussian\"\n[stream]\nx = { min = -3.0, max = 3.0, n = 7 }\ny = { min = -2.0, max = 2.0, n = 5 }\nz = [1.5, -1.0]\n";
    let (code, out) = run_text("stream", text, tmp.path(), &[]);
    assert_eq!(code, 0);
    let m = manifest(&out);
    for (s, z) in [(0, 1.5), (1, -1.0)] {
        assert_eq!(m["results"]["slices"][s]["z"], z);
        let (header, rows) = read_csv(&out.join(format!("stream_{s:02}.csv")));
        assert_eq!(header, ["x", "y", "P", "Q"]);
        assert_eq!(rows.len(), 35);
        for r in rows {
            assert_eq!(r[2], -r[0]);
            assert_eq!(r[3], -2.0 * r[1]);
        }
    }
}

#[test]
fn rotated_coords_manifest_reports_principal_point() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    assert_eq!(run("coords", &configs().join("rotated_coords.toml"), &out, &[]), 0);
    let m = manifest(&out);
    let p = vec3(&m["results"]["principal"]["point"]);
    for (got, want) in p.iter().zip([20.0 / 3.0, -10.0 / 3.0, 20.0 / 3.0]) {
        assert!((got - want).abs() < 1e-3, "{p:?}");
    }
    let dir = &m["results"]["principal"]["directions"][0];
    assert!((dir[0].as_f64().unwrap() - 2.0).abs() < 1e-6 && dir[1] == -1.0);
    // every listed file exists and has the listed number of rows
    for o in m["outputs"].as_array().unwrap() {
        let text = std::fs::read_to_string(out.join(o["file"].as_str().unwrap())).unwrap();
        assert_eq!(text.lines().count() - 1, o["rows"].as_u64().unwrap() as usize);
    }
    let curves = m["results"]["principal"]["curves"].as_array().unwrap();
    assert_eq!(curves.iter().filter(|c| c["kind"] == "theta").count(), 16);
    assert!(curves.iter().all(|c| c["file"].is_string()));
}

#[test]
fn gaussian_drift_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    assert_eq!(run("drift", &configs().join("gaussian_drift.toml"), &out, &[]), 0);
    let (header, rows) = read_csv(&out.join("drift.csv"));
    assert_eq!(header, ["x", "y", "z", "delta_v", "delta_w", "magnitude"]);
    assert!(rows.len() > 100);
    let (a, b, c) = (1.0, 2.0, 4.0);
    for r in &rows {
        let (x, y, z) = (r[0], r[1], r[2]);
        assert!((a * x * x + b * y * y + c * z * z - 100.0).abs() < 1e-9);
        let g2 = (a * x).powi(2) + (b * y).powi(2) + (c * z).powi(2);
        let dv = -b * y / (2.0 * x * g2);
        let dw = -c * z / (2.0 * x * g2);
        let scale = 1e-6 * (1.0 + dv.abs().max(dw.abs()));
        assert!((r[3] - dv).abs() < scale && (r[4] - dw).abs() < scale, "{r:?} vs {dv} {dw}");
        // |Δ¹ V + Δ² W| with V = (-Q, P, 0), W = (-R, 0, P)
        let (p, q, rr) = (-a * x, -b * y, -c * z);
        let amb = [-q * dv - rr * dw, p * dv, p * dw];
        let norm = amb.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((r[5] - norm).abs() < 1e-6 * (1.0 + norm));
    }
}

#[test]
fn sde_covariance_within_statistical_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "potential = \"gaussian\"\nseed = 5\n[sde]\ndt = 0.01\nn_steps = 400000\nburn_in = 10000\nthin = 100\n";
    let (code, out) = run_text("sde", text, tmp.path(), &[]);
    assert_eq!(code, 0);
    let m = manifest(&out);
    let chain = &m["results"]["chains"][0];
    let var = vec3(&chain["variances"]);
    let se = vec3(&chain["variance_standard_errors"]);
    for (d, a) in [1.0f64, 2.0, 4.0].into_iter().enumerate() {
        // stationary variance of the discrete chain X' = (1 - a dt) X + √dt ξ
        let phi = 1.0 - a * 0.01;
        let exact = 0.01 / (1.0 - phi * phi);
        assert!((var[d] - exact).abs() < 3.0 * se[d], "dim {d}: {} vs {exact} ± {}", var[d], se[d]);
    }
    let (header, rows) = read_csv(&out.join("path_000.csv"));
    assert_eq!(header, ["step", "x", "y", "z"]);
    assert_eq!(rows.len(), 4001);
    assert_eq!(rows[1][0], 100.0);
    let moments: Value = serde_json::from_str(&std::fs::read_to_string(out.join("moments.json")).unwrap()).unwrap();
    assert_eq!(moments, m["results"]);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("sde", "potential = \"bimodal\"\nseed = 3\n[sde]\ndt = 0.01\nn_steps = 20000\nburn_in = 1000\nthin = 50\nchains = 3\nx0 = [20.0, 20.0, -10.0]\n"),
        ("coords", "potential = \"gaussian\"\n[coords]\nanchor = [10.0, 0.0, 0.0]\nn_theta = 3\nn_rho = 3\n"),
        ("field", "potential = \"bimodal\"\n[field]\nx = { min = -40.0, max = 40.0, n = 12 }\ny = { min = -40.0, max = 40.0, n = 12 }\nz = { min = -40.0, max = 40.0, n = 12 }\nlevel = 1e-4\nlevel_quantity = \"density\"\n"),
        ("drift", "potential = \"curvilinear\"\n[drift]\nthrough = [20.0, 1.0, -9.0]\nu = { min = 0.0, max = 4.0, n = 5 }\nv = { min = -9.0, max = -5.0, n = 5 }\n"),
    ];
    for (cmd, text) in cases {
        let cfg = tmp.path().join(format!("{cmd}.toml"));
        std::fs::write(&cfg, text).unwrap();
        let (a, b) = (tmp.path().join(format!("{cmd}-a")), tmp.path().join(format!("{cmd}-b")));
        assert_eq!(run(cmd, &cfg, &a, &[]), 0, "{cmd}");
        assert_eq!(run(cmd, &cfg, &b, &[]), 0, "{cmd}");
        let (sa, sb) = (snapshot(&a), snapshot(&b));
        assert!(sa.len() >= 2);
        assert_eq!(sa, sb, "{cmd}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "potential = \"gaussian\"\nseed = 1\n[sde]\ndt = 0.01\nn_steps = 2000\nburn_in = 100\nthin = 100\n";
    let (_, first) = run_text("sde", text, tmp.path(), &[]);
    let a = std::fs::read(first.join("path_000.csv")).unwrap();
    let (code, second) = run_text("sde", text, tmp.path(), &["--seed", "2"]);
    assert_eq!(code, 0);
    assert_eq!(manifest(&second)["config"]["seed"], 2);
    assert_ne!(a, std::fs::read(second.join("path_000.csv")).unwrap());
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    for (cmd, text) in [
        ("field", "potential = \"no-such-preset\""),
        ("field", "potential = \"gaussian\"\n[field]\nx = { min = -1.0, max = 1.0, n = 1 }"),
        ("stream", "potential = \"gaussian\"\n[stream]\nz = []"),
        ("sde", "potential = \"gaussian\"\n[sde]\ndt = -1.0"),
        ("coords", "potential = { kind = \"quadratic\", a = 0.0, b = 1.0, c = 1.0 }"),
        ("field", "not toml at all ["),
    ] {
        let (code, out) = run_text(cmd, text, tmp.path(), &[]);
        assert_eq!(code, 2, "{text}");
        assert!(!out.join("manifest.json").exists());
    }
    let missing = tmp.path().join("missing.toml");
    assert_eq!(run("field", &missing, &tmp.path().join("x"), &[]), 2);
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let cfg = tmp.path().join("ok.toml");
    std::fs::write(&cfg, "potential = \"gaussian\"").unwrap();
    assert_eq!(run("stream", &cfg, &blocker.join("sub"), &[]), 2);
}

#[test]
fn non_convergence_exits_with_three_and_keeps_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "potential = \"gaussian\"\n[sde]\ndt = 0.01\nn_steps = 100000\nburn_in = 10\ndivergence_bound = 0.05\nchains = 2\n";
    let (code, out) = run_text("sde", text, tmp.path(), &[]);
    assert_eq!(code, 3);
    let m = manifest(&out);
    assert_eq!(m["converged"], false);
    assert_eq!(m["flags"].as_array().unwrap().len(), 2);
    assert!(out.join("moments.json").exists());

    let text = "potential = \"rotated-gaussian\"\n[coords]\nmax_iter = 5\nn_theta = 2\nn_rho = 2\n";
    let (code, out) = run_text("coords", text, tmp.path(), &[]);
    assert_eq!(code, 3);
    let m = manifest(&out);
    assert_eq!(m["results"]["principal_search"]["converged"], false);
    assert!(m["flags"][0].as_str().unwrap().contains("principal axis"));
    // the chart at the unconverged point is still written and listed
    assert!(out.join("rho_axis.csv").exists());
    assert!(m["outputs"].as_array().unwrap().len() > 1);
}
