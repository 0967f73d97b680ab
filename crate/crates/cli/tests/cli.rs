use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, manifest: &str, args: &[&str]) -> Output {
    let m = dir.join("m.toml");
    fs::write(&m, manifest).unwrap();
    Command::new(env!("CARGO_BIN_EXE_convexppp"))
        .arg("--manifest")
        .arg(&m)
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SPHERE_CSR: &str = "seed = 5\nnsim = 19\n[shape]\nkind = \"sphere\"\n[model]\ntype = \"csr\"\nrho = ";

#[test]
fn simulate_empty_and_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &format!("{SPHERE_CSR}0.0"), &["simulate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(d.path().join("pattern.csv")).unwrap(), "x,y,z\n");

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        assert!(run(dir.path(), &format!("{SPHERE_CSR}3.0"), &["simulate"]).status.success());
    }
    let pa = fs::read(a.path().join("pattern.csv")).unwrap();
    assert_eq!(pa, fs::read(b.path().join("pattern.csv")).unwrap());
    let meta = json(&a.path().join("pattern.json"));
    assert_eq!(meta["model"], "csr");
    assert_eq!(meta["seed"], 5);
    assert!(meta["manifest_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn cube_counts_are_poisson_240() {
    let d = tempfile::tempdir().unwrap();
    let n = 40;
    let mut counts = Vec::new();
    for seed in 0..n {
        let m = "[shape]\nkind = \"cube\"\nl = 1.0\n[model]\ntype = \"csr\"\nrho = 10.0\n";
        let o = run(d.path(), m, &["simulate", "--seed", &seed.to_string()]);
        assert!(o.status.success());
        let rows = fs::read_to_string(d.path().join("pattern.csv")).unwrap().lines().count() - 1;
        counts.push(rows as f64);
    }
    let mean = counts.iter().sum::<f64>() / n as f64;
    let se = (240.0 / n as f64).sqrt();
    assert!((mean - 240.0).abs() < 3.0 * se, "mean count {mean}");
}

#[test]
fn bad_inputs_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), "[shape]\nkind = \"ellipsoid\"\na = -1.0\nb = 1.0\nc = 1.0\n[model]\ntype = \"csr\"\nrho = 1.0\n", &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(d.path(), "bogus = 1\n", &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    fs::write(d.path().join("p.csv"), "x,y,z\n0,0,1\n0,0,2\n1,0,0\n0.5,0,0\n").unwrap();
    let o = run(d.path(), "pattern = \"p.csv\"\nnsim = 19\n[shape]\nkind = \"sphere\"\n", &["test"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("[1, 3]"), "{err}");
}

#[test]
fn test_command_outputs() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("empty.csv"), "x,y,z\n").unwrap();
    let o = run(d.path(), "pattern = \"empty.csv\"\nnsim = 19\n[shape]\nkind = \"sphere\"\n", &["test"]);
    assert!(o.status.success());
    let rep = json(&d.path().join("report.json"));
    assert_eq!(rep["p_value"], 1.0);
    assert!(!rep["warnings"].as_array().unwrap().is_empty());

    let m = format!("{SPHERE_CSR}8.0");
    let o = run(d.path(), &m, &["test", "--svg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = fs::read(d.path().join("report.json")).unwrap();
    assert!(fs::read_to_string(d.path().join("test.svg")).unwrap().starts_with("<svg"));
    let csv = fs::read_to_string(d.path().join("standardized.csv")).unwrap();
    assert!(csv.starts_with("r,ktilde,theoretical"));
    assert!(run(d.path(), &m, &["test"]).status.success());
    assert_eq!(first, fs::read(d.path().join("report.json")).unwrap());
    let rep = json(&d.path().join("report.json"));
    assert_eq!(rep["null_ts"].as_array().unwrap().len(), 19);

    // a strongly clustered pattern on the sphere
    let m = "seed = 2\nnsim = 19\n[shape]\nkind = \"sphere\"\n[model]\ntype = \"thomas\"\nmu = 60.0\noffspring = 20.0\nkappa = 0.01\nbridge = \"bandwidth\"\n";
    let o = run(d.path(), m, &["test", "--gate", "0.05"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(run(d.path(), m, &["test"]).status.success());
}

#[test]
fn null_p_values_look_uniform() {
    let d = tempfile::tempdir().unwrap();
    let n = 40;
    let mut ps = Vec::new();
    for seed in 0..n {
        let o = run(d.path(), &format!("{SPHERE_CSR}5.0"), &["test", "--seed", &seed.to_string()]);
        assert!(o.status.success());
        ps.push(json(&d.path().join("report.json"))["p_value"].as_f64().unwrap());
    }
    ps.sort_by(f64::total_cmp);
    // KS distance to U(0,1), allowing for the 1/20 lattice of p-values
    let ks = ps
        .iter()
        .enumerate()
        .map(|(i, &p)| ((i + 1) as f64 / n as f64 - p).abs().max((p - i as f64 / n as f64).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 1.36 / (n as f64).sqrt() + 0.05, "KS distance {ks}");
}

#[test]
fn power_and_curves_and_shape_info() {
    let d = tempfile::tempdir().unwrap();
    let m = r#"
seed = 3
trials = 4
nsim = 19
r_step = 0.1

[[experiments]]
id = "1a"
shape = { prolate_a = 1.0 }
model = { type = "csr", rho = 5.0 }

[[experiments]]
id = "big"
shape = { kind = "sphere" }
model = { type = "matern2", mu = 10000.0, r = 0.3 }
"#;
    let o = run(d.path(), m, &["power"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1a"));
    let csv = fs::read_to_string(d.path().join("power.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "experiment,shape,parameter,expectation,trials,nsim,accept,reject,note");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let (a, r): (f64, f64) = (row[6].parse().unwrap(), row[7].parse().unwrap());
    assert_eq!(a + r, 1.0);
    assert!(lines.next().unwrap().contains("skipped"));

    let o = run(d.path(), &format!("r_step = 0.1\ngrid_points = 200\n{SPHERE_CSR}4.0"), &["curves"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["k.csv", "f.csv", "h.csv", "j.csv", "ktilde.csv", "curves.json"] {
        assert!(d.path().join(f).exists(), "{f}");
    }

    let o = run(d.path(), "[shape]\nkind = \"ellipsoid\"\na = 1.0\nb = 1.0\nc = 3.0\n", &["shape-info"]);
    assert!(o.status.success());
    let info = json(&d.path().join("shape.json"));
    assert!(info["area"].as_f64().unwrap() > 4.0 * std::f64::consts::PI);
}

#[test]
fn conflicting_command_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), "command = \"power\"\n", &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
}
