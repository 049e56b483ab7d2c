use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const INV_PI: f64 = std::f64::consts::FRAC_1_PI;

fn forcing() -> Value {
    json!([{"family": "sum", "params": {"terms": [
        {"family": "cosine", "params": {"amplitude": INV_PI}},
        {"family": "cosine", "params": {"amplitude": INV_PI, "phase": -std::f64::consts::FRAC_PI_2}}
    ]}}])
}

fn periodic(l: f64, numerics: Value) -> Value {
    json!({
        "problem": {
            "domain": "periodic",
            "equations": [{"a": 0, "b": 1, "kernel": {"family": "cosine", "params": {}}}],
            "nonlinearity": {"family": "affine", "params": {"matrix": [[l]], "forcing": forcing()}}
        },
        "numerics": numerics,
    })
}

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Run {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn exec(&self, sub: &str, cfg: &Value, extra: &[&str]) -> Output {
        let path = self.dir.path().join("run.json");
        fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
        Command::new(env!("CARGO_BIN_EXE_idrift"))
            .arg(sub)
            .arg("--config")
            .arg(&path)
            .arg("--out")
            .arg(self.out())
            .args(extra)
            .output()
            .unwrap()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out().join(name)).unwrap()).unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn certified_solve_writes_reports() {
    let run = Run::new();
    let o = run.exec("solve", &periodic(0.2, json!({"mode_cutoff": 64, "tol": 1e-11})), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cert = run.json("certificate.json");
    assert_eq!(cert["status"], "certified");
    assert!((cert["certificate"]["factor"].as_f64().unwrap() - 0.2 * std::f64::consts::PI).abs() < 1e-9);
    let solve = run.json("solve.json");
    assert_eq!(solve["status"], "certified");
    assert_eq!(solve["nontrivial"], true);
    assert_eq!(run.json("residual.json")["within_threshold"], true);
    let sol = csv_rows(&run.out().join("solution.csv"));
    assert_eq!(sol.len(), 256);
}

#[test]
fn trace_csv_and_json_agree() {
    let run = Run::new();
    let o = run.exec(
        "solve",
        &periodic(0.2, json!({"mode_cutoff": 32, "reference_mode": true})),
        &[],
    );
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&run.out().join("trace.csv"));
    let js = run.json("trace.json");
    let js = js.as_array().unwrap();
    assert_eq!(rows.len(), js.len());
    for (r, j) in rows.iter().zip(js) {
        assert_eq!(r[0].parse::<u64>().unwrap(), j["step"].as_u64().unwrap());
        assert_eq!(r[1].parse::<f64>().unwrap(), j["increment_h2"].as_f64().unwrap());
        match j["ratio"].as_f64() {
            Some(v) => assert_eq!(r[2].parse::<f64>().unwrap(), v),
            None => assert!(r[2].is_empty()),
        }
        match j["residual_l2"].as_f64() {
            Some(v) => assert_eq!(r[3].parse::<f64>().unwrap(), v),
            None => assert!(r[3].is_empty()),
        }
        assert_eq!(r[4], "0");
    }
}

#[test]
fn zero_lipschitz_run_has_one_row() {
    let run = Run::new();
    let o = run.exec("solve", &periodic(0.0, json!({"mode_cutoff": 32})), &[]);
    assert_eq!(code(&o), 0);
    assert_eq!(csv_rows(&run.out().join("trace.csv")).len(), 1);
}

#[test]
fn failing_orthogonality_is_named() {
    let run = Run::new();
    let cfg = json!({
        "problem": {
            "domain": "real_line",
            "equations": [{"a": 0, "b": 1, "kernel": {"family": "gaussian", "params": {}}}],
            "nonlinearity": {"family": "affine", "params": {"matrix": [[0.1]]}}
        },
        "numerics": {"grid_points": 256}
    });
    let o = run.exec("check", &cfg, &[]);
    assert_eq!(code(&o), 2);
    let s = run.json("solvability.json");
    assert_eq!(s["solvable"], false);
    let failed: Vec<&str> = s["failed_conditions"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(failed, ["equation 1: or1"]);
    assert_eq!(code(&run.exec("solve", &cfg, &[])), 2);
    assert!(!run.out().join("trace.csv").exists());
}

#[test]
fn certificate_bands() {
    let run = Run::new();
    // π·0.31 lies between 0.95 and 1
    let band = periodic(0.31, json!({"mode_cutoff": 32}));
    assert_eq!(code(&run.exec("check", &band, &[])), 2);
    assert_eq!(run.json("certificate.json")["status"], "uncertified-convergent");
    let relaxed = periodic(0.31, json!({"mode_cutoff": 32, "certified_mode": false}));
    assert_eq!(code(&run.exec("solve", &relaxed, &[])), 0);
    assert_eq!(run.json("solve.json")["status"], "uncertified-convergent");
    let failed = periodic(0.7, json!({"mode_cutoff": 32}));
    assert_eq!(code(&run.exec("solve", &failed, &[])), 2);
    assert_eq!(run.json("certificate.json")["status"], "failed");
    let forced = periodic(0.7, json!({"mode_cutoff": 32, "allow_uncertified": true, "max_iter": 50}));
    let o = run.exec("solve", &forced, &[]);
    assert!([0, 3].contains(&code(&o)));
}

#[test]
fn iteration_cap_exits_three() {
    let run = Run::new();
    let o = run.exec("solve", &periodic(0.2, json!({"mode_cutoff": 32, "max_iter": 3, "tol": 1e-14})), &[]);
    assert_eq!(code(&o), 3);
    assert_eq!(csv_rows(&run.out().join("trace.csv")).len(), 3);
}

#[test]
fn input_errors_exit_one() {
    let run = Run::new();
    let mut cfg = periodic(0.2, json!({}));
    cfg["numerics"]["mode_cutof"] = json!(8);
    let o = run.exec("check", &cfg, &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mode_cutof"));

    let o = Command::new(env!("CARGO_BIN_EXE_idrift")).arg("solve").output().unwrap();
    assert_eq!(code(&o), 1);
    let o = Command::new(env!("CARGO_BIN_EXE_idrift")).arg("--help").output().unwrap();
    assert_eq!(code(&o), 0);

    let missing = Command::new(env!("CARGO_BIN_EXE_idrift"))
        .args(["check", "--config", "/nonexistent/run.json"])
        .output()
        .unwrap();
    assert_eq!(code(&missing), 1);
}

#[test]
fn strict_layout_rejects_single_family() {
    let run = Run::new();
    let o = run.exec("check", &periodic(0.2, json!({"mode_cutoff": 32})), &["--strict"]);
    assert_eq!(code(&o), 1);
    assert_eq!(run.json("solvability.json")["valid"], false);
}

#[test]
fn oracle_audits_saved_solution() {
    let run = Run::new();
    let cfg = periodic(0.2, json!({"mode_cutoff": 64, "tol": 1e-11}));
    assert_eq!(code(&run.exec("solve", &cfg, &[])), 0);
    let o = run.exec("oracle", &cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = run.json("residual.json");
    assert_eq!(r["within_threshold"], true);

    // a perturbed solution fails the audit
    let path = run.out().join("solution.csv");
    let mut rows = csv_rows(&path);
    for r in &mut rows {
        let x: f64 = r[0].parse().unwrap();
        let v: f64 = r[1].parse().unwrap();
        r[1] = (v + 1e-3 * (2.0 * x).sin()).to_string();
    }
    let bad = run.dir.path().join("bad.csv");
    let mut w = csv::Writer::from_path(&bad).unwrap();
    w.write_record(["x", "u_1"]).unwrap();
    for r in &rows {
        w.write_record(r).unwrap();
    }
    w.flush().unwrap();
    let o = run.exec("oracle", &cfg, &["--solution", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn spectrum_export() {
    let run = Run::new();
    let cfg = json!({
        "problem": {
            "domain": "real_line",
            "equations": [{"a": 1, "b": 1, "kernel": {"family": "gaussian", "params": {}}}],
            "nonlinearity": {"family": "affine", "params": {"matrix": [[0.2]]}}
        },
        "numerics": {"grid_points": 128}
    });
    assert_eq!(code(&run.exec("spectrum", &cfg, &[])), 0);
    let rows = csv_rows(&run.out().join("spectrum.csv"));
    assert_eq!(rows.len(), 128);
    let s = run.json("spectrum.json");
    assert_eq!(s[0]["fredholm"], true);
}

#[test]
fn shipped_configs_check_cleanly() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let out = tempfile::tempdir().unwrap();
        let o = Command::new(env!("CARGO_BIN_EXE_idrift"))
            .arg("check")
            .arg("--config")
            .arg(&path)
            .arg("--out")
            .arg(out.path())
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
        seen += 1;
    }
    assert!(seen >= 2);
}

#[test]
fn slowly_decaying_kernel_is_flagged() {
    let run = Run::new();
    let cfg = json!({
        "problem": {
            "domain": "real_line",
            "equations": [{"a": 1, "b": 1, "kernel": {"family": "gaussian", "params": {"width": 8}}}],
            "nonlinearity": {"family": "affine", "params": {"matrix": [[0.01]]}}
        },
        "numerics": {"grid_points": 256}
    });
    run.exec("check", &cfg, &[]);
    let s = run.json("solvability.json");
    assert!(s["kernel_truncation"][0]["edge_ratio"].as_f64().unwrap() > 1e-12);
}
