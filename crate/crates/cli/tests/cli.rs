use num_complex::Complex64;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tubecav::resonfit::{self, Environment, ResonanceFit};

fn tubecav() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tubecav"))
}

fn run(args: &[&str]) -> Output {
    tubecav().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn empty_config_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.json");
    fs::write(&cfg, "").unwrap();
    let o = run(&["--config", s(&cfg), "--out", s(&tmp.path().join("o")), "qed"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn schema_error_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"qed": {"points": "many"}}"#).unwrap();
    let o = run(&["--config", s(&cfg), "--out", s(&tmp.path().join("o")), "qed"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("qed.points"));
    fs::write(&cfg, r#"{"sweep": {"pipeline": "piezo", "axes": [{"name": "bogus", "values": [1]}]}}"#).unwrap();
    let o = run(&["--config", s(&cfg), "--out", s(&tmp.path().join("o")), "sweep"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn physics_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let series = tmp.path().join("short.csv");
    fs::write(&series, "temperature_k,qi,df_over_f\n1.0,3e7,0\n2.0,2e7,0\n3.0,6e6,0\n").unwrap();
    let o = run(&["--out", s(&tmp.path().join("o")), "mb", "--series", s(&series)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("under-constrained"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn partial_sweep_exits_4_and_keeps_good_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("t.json");
    fs::write(&cfg, r#"{"sweep": {"pipeline": "thermal", "axes": [{"name": "temperature_k", "values": [1, 8, 2]}]}}"#).unwrap();
    let out = tmp.path().join("o");
    let o = run(&["--config", s(&cfg), "--out", s(&out), "sweep"]);
    assert_eq!(o.status.code(), Some(4));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["failures"].as_array().unwrap().len(), 1);
    assert_eq!(m["failures"][0]["index"], 1);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[2], "8.0,,,");
    assert!(tubecav_cli::stage::verify(&out).unwrap());
}

#[test]
fn thermal_sweep_is_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("t.json");
    fs::write(&cfg, r#"{"sweep": {"pipeline": "thermal", "axes": [{"name": "temperature_k", "start": 1, "stop": 4, "step": 0.1}]}}"#).unwrap();
    let out = tmp.path().join("o");
    assert!(run(&["--config", s(&cfg), "--out", s(&out), "sweep"]).status.success());
    let qi: Vec<f64> = fs::read_to_string(out.join("sweep.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(qi.len(), 31);
    assert!(qi.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn piezo_sweep_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("p.json");
    fs::write(&cfg, r#"{"sweep": {"pipeline": "piezo", "axes": [{"name": "voltage_v", "start": 0, "stop": 180, "step": 20}]}}"#).unwrap();
    let out = tmp.path().join("o");
    assert!(run(&["--config", s(&cfg), "--out", s(&out), "sweep"]).status.success());
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 10);
    for r in rows {
        assert!((r[1] - 0.1e6 * r[0]).abs() < 1e-6);
    }
}

#[test]
fn fit_command_recovers_synthetic_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let env = Environment { a: 0.8, phi: 0.4, tau: 1e-9 };
    let truth = ResonanceFit::new(98.2e9, 3e7, 1e7, env).unwrap();
    let trace = resonfit::synth_trace(&truth, 10.0 * 98.2e9 / truth.qtot, 401, 0.0, 1).unwrap();
    let path = tmp.path().join("trace.csv");
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    fs::write(&path, buf).unwrap();
    fs::write(tmp.path().join("trace.json"), r#"{"power_dbm": -100, "temperature_k": 1.2}"#).unwrap();
    let out = tmp.path().join("o");
    let o = run(&["--out", s(&out), "fit", "--trace", s(&path)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let f = json(&out.join("fit.json"));
    assert!((f["qi"].as_f64().unwrap() / 3e7 - 1.0).abs() < 1e-3);
    assert!((f["qc"].as_f64().unwrap() / 1e7 - 1.0).abs() < 1e-3);
    assert!((f["f0_hz"].as_f64().unwrap() / 98.2e9 - 1.0).abs() < 1e-9);
    let d = json(&out.join("fit_details.json"));
    assert!(d["photons"]["n"].as_f64().unwrap() > 0.0);
    assert_eq!(d["temperature_k"], 1.2);
}

#[test]
fn fit_rejects_malformed_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.csv");
    fs::write(&path, "freq_hz,re_s11,im_s11\n1,2\n").unwrap();
    let o = run(&["--out", s(&tmp.path().join("o")), "fit", "--trace", s(&path)]);
    assert!(!o.status.success());
    let flat: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); 32];
    let f: Vec<f64> = (0..32).map(|i| 1e9 + i as f64).collect();
    let t = resonfit::ReflectionTrace::new(f, flat).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    fs::write(&path, buf).unwrap();
    let o = run(&["--out", s(&tmp.path().join("o")), "fit", "--trace", s(&path)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn modes_reports_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&["--out", s(&out), "--resolution", "8", "modes", "--preset", "elbow"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&out.join("modes.json"));
    let f = m["modes"][0]["f_hz"].as_f64().unwrap();
    assert!(f > 100e9 && f < 112e9, "{f}");
    assert_eq!(m["resolution"], 8.0);
    let o = run(&["--out", s(&out), "modes", "--preset", "nonesuch"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn render_produces_stable_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("qi.csv");
    fs::write(&data, "n,qi\n1,3e7\n10,3.1e7\n100,2.9e7\n1000,3e7\n").unwrap();
    let cfg = tmp.path().join("r.json");
    fs::write(&cfg, r#"{"render": {"csv": ["qi.csv"], "x": "n", "y": ["qi"], "kind": "scatter", "log_x": true, "output": "qi"}}"#).unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(&["--config", s(&cfg), "--out", s(&a), "render"]).status.success());
    assert!(run(&["--config", s(&cfg), "--out", s(&b), "render"]).status.success());
    let sa = fs::read(a.join("qi.svg")).unwrap();
    assert_eq!(sa, fs::read(b.join("qi.svg")).unwrap());
    assert!(String::from_utf8_lossy(&sa).contains("<svg xmlns"));
    fs::write(&cfg, r#"{"render": {"csv": ["qi.csv"], "x": "n", "y": ["qe"]}}"#).unwrap();
    let o = run(&["--config", s(&cfg), "--out", s(&a), "render"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("qe"));
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tubecav().env("TUBECAV_OUT", tmp.path()).arg("table1").output().unwrap();
    assert!(o.status.success());
    assert!(tmp.path().join("table1").join("table1.csv").exists());
    assert!(tmp.path().join("table1").join("manifest.json").exists());
}

#[test]
fn single_point_sweep_matches_plain_run() {
    let tmp = tempfile::tempdir().unwrap();
    let q = tmp.path().join("qed");
    assert!(tubecav().args(["--out", q.to_str().unwrap(), "qed"]).status().unwrap().success());
    let plain: serde_json::Value = serde_json::from_slice(&fs::read(q.join("splittings.json")).unwrap()).unwrap();
    let cfg = tmp.path().join("one.json");
    fs::write(&cfg, r#"{"sweep": {"pipeline": "qed", "axes": [{"name": "n_mm", "values": [25]}]}}"#).unwrap();
    let s = tmp.path().join("sweep");
    assert!(tubecav()
        .args(["--config", cfg.to_str().unwrap(), "--out", s.to_str().unwrap(), "sweep"])
        .status()
        .unwrap()
        .success());
    let text = fs::read_to_string(s.join("sweep.csv")).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[1], plain["rabi_hz"].as_f64().unwrap());
    assert_eq!(row[2], plain["mm_split_hz"].as_f64().unwrap());
}
