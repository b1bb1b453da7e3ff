use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const GAP: &str = r#"
version = 1
seed = 11
[cost]
p = 2.0
norm = { dim = 2, kind = "euclidean" }
[suite]
kind = "duality_gap"
instances = 6
max_atoms = 8
"#;

fn wslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wslab")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_writes_reports_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "gap.toml", GAP);
    let out = tmp.path().join("out");
    let o = wslab(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "pass");
    assert_eq!(summary["instances"], 6);
    let details = fs::read_to_string(out.join("details.csv")).unwrap();
    assert_eq!(details.lines().count(), 7);
    assert!(details.starts_with("instance,m,n,p,gap_rel"));
}

#[test]
fn violations_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
version = 1
seed = 2
[cost]
p = 2.0
norm = { dim = 2, kind = "euclidean" }
[suite]
kind = "slope_check"
functions = 2
pairs_per_radius = 2
radii = [0.5]
[tolerances]
bracket_width = 1e-12
"#;
    let cfg = write(tmp.path(), "slope.toml", text);
    let out = tmp.path().join("out");
    let o = wslab(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"status\": \"fail\""));
    let curves = fs::read_to_string(out.join("slope_brackets.csv")).unwrap();
    assert!(curves.starts_with("instance,radius,slope,lower,differential_norm"));
}

#[test]
fn config_and_io_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.toml", &GAP.replace("instances = 6", "instances = \"six\""));
    assert_eq!(wslab(&["validate", &bad]).status.code(), Some(2));
    assert_eq!(wslab(&["run", &bad]).status.code(), Some(2));
    let missing = tmp.path().join("nope.toml");
    assert_eq!(wslab(&["run", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(wslab(&["frobnicate"]).status.code(), Some(2));
    let good = write(tmp.path(), "gap.toml", GAP);
    let o = wslab(&["validate", &good]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("duality_gap"));
}

#[test]
fn constant_functions_have_zero_brackets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/slope_check_constant.toml");
    let out = tmp.path().join("out");
    let o = wslab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(out.join("details.csv")).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!((&rec[2], &rec[3], &rec[4]), ("0.0", "0.0", "0.0"));
    }
}

#[test]
fn modulus_envelope_is_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
version = 1
seed = 4
[cost]
p = 2.0
norm = { dim = 2, kind = "euclidean" }
[suite]
kind = "modulus_probe"
trials = 40
"#;
    let cfg = write(tmp.path(), "modulus.toml", text);
    let out = tmp.path().join("out");
    assert_eq!(wslab(&["run", &cfg, "--out", out.to_str().unwrap(), "--jobs", "1"]).status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(out.join("modulus_envelope.csv")).unwrap();
    let env: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(env.len(), 40);
    assert!(env.windows(2).all(|w| w[1] >= w[0]));
}
