use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_jumpflow");

/// `W` between (0.9, 0.1) and (0.1, 0.9) on two points with unit rate and
/// logarithmic mean, from quadrature of the closed form.
const TWO_POINT_LOG: f64 = 1.183_580_802_774_366_3;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn run(dir: &Path, args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).arg("--out").arg(dir.join("out")).arg("--no-timing");
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const RING8: &str = r#""space": {"topology": "lattice", "extents": [8], "h": 0.125},
    "kernel": {"form": "fractional", "alpha": 1.0}"#;

const TWO_POINT: &str = r#""space": {"topology": "general", "positions": [[0.0], [1.0]], "m": [1.0, 1.0]},
    "kernel": {"form": "dense", "J": [[0.0, 1.0], [1.0, 0.0]]}"#;

#[test]
fn malformed_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let c = write_config(dir.path(), "{\"space\": ");
    assert_eq!(code(&run(dir.path(), &["validate"], Some(&c))), 2);
    let c = write_config(dir.path(), &format!("{{{RING8}, \"mystery\": 1}}"));
    assert_eq!(code(&run(dir.path(), &["validate"], Some(&c))), 2);
    let o = run(dir.path(), &["validate"], Some(&dir.path().join("missing.json")));
    assert_eq!(code(&o), 2);
}

#[test]
fn validate_default_reports_moments() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["validate"], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(dir.path().join("out/validate.json"));
    assert_eq!(v["valid"], true);
    assert!(v["M2"].as_f64().unwrap() > 0.0);
    assert!(v["C"].as_f64().unwrap() > 0.0);
    assert_eq!(v["header"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["header"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn asymmetric_weights_fail_validation_by_name() {
    let dir = TempDir::new().unwrap();
    let c = write_config(
        dir.path(),
        r#"{"space": {"topology": "lattice", "extents": [8]},
            "kernel": {"form": "lattice_weights", "weights": [{"z": [1], "w": 1.0}, {"z": [-1], "w": 2.0}]}}"#,
    );
    let o = run(dir.path(), &["validate"], Some(&c));
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("symmetry"));
    let v = read_json(dir.path().join("out/validate.json"));
    assert_eq!(v["failed_invariants"][0], "symmetry");
}

#[test]
fn evi_on_dense_kernel_is_refused() {
    let dir = TempDir::new().unwrap();
    let c = write_config(
        dir.path(),
        r#"{"space": {"topology": "general", "positions": [[0.0], [1.0], [2.5]]},
            "kernel": {"form": "dense", "J": [[0, 1, 0.5], [1, 0, 2], [0.5, 2, 0]]}}"#,
    );
    let o = run(dir.path(), &["evi"], Some(&c));
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&run(dir.path(), &["convexity"], Some(&c))), 3);
    assert_eq!(code(&run(dir.path(), &["compare-w1"], Some(&c))), 3);
    let c = write_config(
        dir.path(),
        r#"{"space": {"topology": "general", "positions": [[0.0], [1.0], [2.5]]},
            "kernel": {"form": "dense", "J": [[0, 1, 0.5], [1, 0, 2], [0.5, 2, 0]]},
            "evolve": {"backend": "spectral"}}"#,
    );
    assert_eq!(code(&run(dir.path(), &["evolve"], Some(&c))), 3);
}

#[test]
fn suite_on_default_config_passes() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["suite"], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let summary = fs::read_to_string(dir.path().join("out/suite_summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert!(rows.len() >= 12, "{} checks", rows.len());
    for id in 1..=14 {
        let prefix = format!("c{id:02}_");
        assert!(rows.iter().any(|r| r.starts_with(&prefix)), "criterion {id} missing");
    }
    let jsonl = fs::read_to_string(dir.path().join("out/suite_reports.jsonl")).unwrap();
    let first: Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(first["header"]["command"], "suite");
    assert_eq!(jsonl.lines().count(), rows.len() + 1);
}

#[test]
fn identical_endpoints_give_zero() {
    let dir = TempDir::new().unwrap();
    let c = write_config(
        dir.path(),
        &format!(
            r#"{{{RING8}, "geodesic": {{"mu0": {{"kind": "bump", "center": 2, "width": 0.2, "floor": 0.1}},
                                     "mu1": {{"kind": "bump", "center": 2, "width": 0.2, "floor": 0.1}}}}}}"#
        ),
    );
    let o = run(dir.path(), &["geodesic"], Some(&c));
    assert_eq!(code(&o), 0);
    let v = read_json(dir.path().join("out/geodesic.json"));
    assert_eq!(v["W"], 0.0);
    assert_eq!(v["converged"], true);
}

#[test]
fn disconnected_support_is_infinite() {
    let dir = TempDir::new().unwrap();
    let c = write_config(
        dir.path(),
        r#"{"space": {"topology": "general", "positions": [[0.0], [1.0], [2.0], [3.0]]},
            "kernel": {"form": "dense", "J": [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]},
            "geodesic": {"mu0": {"kind": "values", "values": [0.1, 0.1, 0.4, 0.4]},
                         "mu1": {"kind": "uniform"}}}"#,
    );
    let o = run(dir.path(), &["geodesic"], Some(&c));
    assert_eq!(code(&o), 1);
    let v = read_json(dir.path().join("out/geodesic.json"));
    assert_eq!(v["W"], "infinite");
    assert_eq!(v["converged"], false);
}

#[test]
fn two_point_matches_oracle() {
    let dir = TempDir::new().unwrap();
    let c = write_config(
        dir.path(),
        &format!(
            r#"{{{TWO_POINT}, "geodesic": {{"mu0": {{"kind": "values", "values": [0.9, 0.1]}},
                                         "mu1": {{"kind": "values", "values": [0.1, 0.9]}}}}}}"#
        ),
    );
    let o = run(dir.path(), &["geodesic"], Some(&c));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(dir.path().join("out/geodesic.json"));
    let w = v["W"].as_f64().unwrap();
    assert!((w - TWO_POINT_LOG).abs() < 1e-3, "W = {w}");
    assert!(v["ce_residual"].as_f64().unwrap() < 1e-10);
    let density = fs::read_to_string(dir.path().join("out/geodesic_density.csv")).unwrap();
    assert!(density.starts_with("# tool jumpflow\n"));
    assert!(dir.path().join("out/geodesic_momentum.csv").exists());
}

#[test]
fn endpoints_from_files() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("a.csv"), "state,value\n0,0.9\n1,0.1\n").unwrap();
    fs::write(dir.path().join("b.csv"), "# comment\n1,0.9\n0,0.1\n").unwrap();
    let c = write_config(
        dir.path(),
        &format!(
            r#"{{{TWO_POINT}, "geodesic": {{"mu0": {{"kind": "file", "path": "a.csv"}},
                                         "mu1": {{"kind": "file", "path": "b.csv"}}}}}}"#
        ),
    );
    assert_eq!(code(&run(dir.path(), &["geodesic"], Some(&c))), 0);
    let w = read_json(dir.path().join("out/geodesic.json"))["W"].as_f64().unwrap();
    assert!((w - TWO_POINT_LOG).abs() < 1e-3);
}

fn density_rows(path: PathBuf) -> Vec<(usize, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("state"))
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

#[test]
fn evolve_at_zero_returns_input() {
    let dir = TempDir::new().unwrap();
    let values = [0.3, 1.7, 0.5, 1.5, 1.0, 0.2, 1.8, 1.0];
    let c = write_config(
        dir.path(),
        &format!(r#"{{{RING8}, "evolve": {{"rho0": {{"kind": "values", "values": {values:?}}}, "t": 0.0}}}}"#),
    );
    assert_eq!(code(&run(dir.path(), &["evolve"], Some(&c))), 0);
    let rows = density_rows(dir.path().join("out/evolve_density.csv"));
    assert_eq!(rows.len(), values.len());
    for (i, v) in rows {
        assert_eq!(v, values[i]);
    }
    let symbol = fs::read_to_string(dir.path().join("out/evolve_symbol.csv")).unwrap();
    assert!(symbol.lines().any(|l| l.starts_with("index,k0")));
}

#[test]
fn evolve_conserves_mass() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["evolve"], None)), 0);
    let rows = density_rows(dir.path().join("out/evolve_density.csv"));
    let mass: f64 = rows.iter().map(|(_, v)| v / 16.0).sum();
    assert!((mass - 1.0).abs() < 1e-12);
    assert!(rows.iter().all(|(_, v)| *v >= 0.0));
}

#[test]
fn reruns_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for cmd in ["geodesic", "means-check", "evi"] {
        assert_eq!(code(&run(a.path(), &[cmd, "--k", "16"], None)), 0, "{cmd}");
        assert_eq!(code(&run(b.path(), &[cmd, "--k", "16"], None)), 0, "{cmd}");
    }
    let mut names: Vec<_> = fs::read_dir(a.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 7);
    for name in names {
        let x = fs::read(a.path().join("out").join(&name)).unwrap();
        let y = fs::read(b.path().join("out").join(&name)).unwrap();
        assert_eq!(x, y, "{name:?} differs");
    }
}

#[test]
fn overrides_change_the_digest() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(code(&run(a.path(), &["means-check"], None)), 0);
    assert_eq!(code(&run(b.path(), &["means-check", "--seed", "7"], None)), 0);
    let first = |d: &TempDir| -> Value {
        let text = fs::read_to_string(d.path().join("out/means-check_reports.jsonl")).unwrap();
        serde_json::from_str(text.lines().next().unwrap()).unwrap()
    };
    let (x, y) = (first(&a), first(&b));
    assert_ne!(x["header"]["config_sha256"], y["header"]["config_sha256"]);
    assert_eq!(y["header"]["seed"], 7);
}

#[test]
fn tolerance_override_is_validated() {
    let dir = TempDir::new().unwrap();
    // The EVI quotient on the default config is about -0.1, so a tiny
    // tolerance still passes.
    assert_eq!(code(&run(dir.path(), &["evi", "--tol", "-1"], None)), 2);
    assert_eq!(code(&run(dir.path(), &["evi", "--tol", "1e-12"], None)), 0);
}

#[test]
fn shipped_schema_matches_default_config_keys() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let schema = read_json(root.join("schema/run_config.schema.json"));
    let config = read_json(root.join("configs/default.json"));
    let props = schema["properties"].as_object().unwrap();
    for key in config.as_object().unwrap().keys() {
        assert!(props.contains_key(key), "{key} missing from schema");
    }
}
