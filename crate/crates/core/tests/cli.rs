use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_richter"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn column(csv: &str, row: usize, name: &str) -> String {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.nth(row).unwrap().split(',').nth(idx).unwrap().to_string()
}

fn num(csv: &str, row: usize, name: &str) -> f64 {
    column(csv, row, name).parse().unwrap()
}

fn triangular() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/triangular.txt")
}

#[test]
fn saddle_beyond_the_certified_range() {
    let o = run(&["saddle", "--family", "exp_centered", "--tau", "0.1"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!((num(&s, 0, "z0") - 0.1 / 1.1).abs() < 1e-12);
    assert!((num(&s, 0, "lambda") - 0.310_179_804).abs() < 1e-8);
    assert!((num(&s, 0, "mu") - 1.1f64.ln()).abs() < 1e-12);
    assert_eq!(column(&s, 0, "in_range"), "false");
}

#[test]
fn saddle_default_grid_is_in_range() {
    let o = run(&["saddle", "--family", "uniform_sym"]);
    let s = stdout(&o);
    assert_eq!(s.lines().count(), 22);
    assert!(s.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn cramer_series_for_exp() {
    let o = run(&["cramer-series", "--family", "exp_centered", "--order", "6"]);
    assert!(o.status.success());
    let s = stdout(&o);
    for k in 0..=6 {
        let want = (-1f64).powi(k as i32) / (k as f64 + 3.0);
        assert!((num(&s, k, "lambda") - want).abs() < 1e-12, "k = {k}");
    }
}

#[test]
fn gaussian_approx_is_exact() {
    let o = run(&["approx", "--family", "gaussian", "--n", "100", "--x", "1.0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert_eq!(num(&s, 0, "ratio_richter"), 1.0);
    assert_eq!(num(&s, 0, "rel_err"), 0.0);
}

#[test]
fn verify_bounds_passes_for_uniform() {
    let o = run(&["verify-bounds", "--family", "uniform_sym"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.lines().count() > 40);
    assert!(s.lines().skip(1).all(|l| l.split(',').nth(4) == Some("true")));
}

#[test]
fn verify_bounds_on_a_grid_family() {
    let path = format!("path={}", triangular().display());
    let o = run(&["verify-bounds", "--family", "grid", "--params", &path]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["approx"]).status.code(), Some(1));
    assert_eq!(run(&["approx", "--family", "cauchy"]).status.code(), Some(1));
    assert_eq!(run(&["approx", "--family", "exp_centered", "--n", "100", "--x", "1"]).status.code(), Some(1));
    assert_eq!(run(&["tsallis", "--family", "uniform_sym", "--n-list", "2,3,4"]).status.code(), Some(3));
    assert_eq!(run(&["convergence", "--family", "exp_centered", "--n-list", "2,1024"]).status.code(), Some(3));
    assert_eq!(run(&["families", "--config", "/nonexistent/richter.cfg"]).status.code(), Some(1));
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("experiment.cfg");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn config_file_drives_outputs_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        &format!(
            "[family]\nname = exp_centered\n\n[run]\nn_list = 256, 64\npoints = 9\n\n[output]\ndir = {}\n",
            out.display()
        ),
    );
    let cfg = cfg.to_str().unwrap();
    assert!(run(&["approx", "--config", cfg]).status.success());
    let first = fs::read(out.join("approx.csv")).unwrap();
    let summary = fs::read_to_string(out.join("approx_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().nth(1).unwrap().starts_with("64,9,"));
    assert!(run(&["approx", "--config", cfg, "--jobs", "1"]).status.success());
    assert_eq!(first, fs::read(out.join("approx.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 19);
    assert!(!text.contains('\r'));

    assert!(run(&["approx", "--config", cfg, "--format", "json"]).status.success());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("approx.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 18);
    assert_eq!(json["family"], "exp_centered");
}

#[test]
fn malformed_config_reports_line_and_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[family]\nname = uniform_sym\n[run]\nn_list = 64, sixty\n");
    let o = run(&["approx", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4") && err.contains("run.n_list"), "{err}");
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[family]\nname = exp_centered\n[run]\nn = 64\nx = 0, 0.05\n");
    let o = run(&["approx", "--config", cfg.to_str().unwrap(), "--family", "uniform_sym", "--n", "32"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(column(&s, 0, "n"), "32");
    assert!(num(&s, 0, "ratio_edgeworth") < 1.0);
}

#[test]
fn families_lists_built_ins() {
    let s = stdout(&run(&["families"]));
    let names: Vec<&str> = s.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["gaussian", "uniform_sym", "exp_centered"]);
    assert!((num(&s, 0, "alpha") - 0.728_600_108_5).abs() < 1e-9);
}

#[test]
fn convergence_and_tsallis_pass() {
    let o = run(&["convergence", "--family", "uniform_sym", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["remainder"].is_null());
    let o = run(&["tsallis", "--family", "uniform_sym"]);
    assert_eq!(o.status.code(), Some(0));
}
