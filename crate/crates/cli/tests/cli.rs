use std::path::Path;
use std::process::{Command, Output};

fn otgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otgen")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = otgen(args);
    assert!(out.status.success(), "otgen {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn gen_graph(dir: &Path) -> String {
    let out_dir = dir.join("data");
    ok(&["gen-sbm", "--blocks", "25,25", "--p-in", "0.2", "--p-out", "0.02", "--feature-dim", "4", "--seed", "2", "--out-dir", out_dir.to_str().unwrap(), "--name", "g"]);
    out_dir.join("g.json").to_str().unwrap().to_string()
}

#[test]
fn ot_check_two_against_three_points() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, plan) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("plan.csv"));
    std::fs::write(&a, "0,0\n1,0\n").unwrap();
    std::fs::write(&b, "0,0\n1,0\n2,0\n").unwrap();
    let out = ok(&["ot-check", a.to_str().unwrap(), b.to_str().unwrap(), "--plan", plan.to_str().unwrap()]);
    assert!((out.trim().parse::<f64>().unwrap() - 0.5).abs() < 1e-12);
    let rows = std::fs::read_to_string(&plan).unwrap();
    let mass: f64 = rows.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((mass - 1.0).abs() < 1e-12, "{rows}");
}

#[test]
fn bound_prints_a_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen_graph(dir.path());
    let out = ok(&["bound", "--graph", &g, "--depth", "2", "--clf-layers", "1", "--epochs", "50", "--percentile", "1"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for key in ["bound_global", "bound_classwise", "bound_classwise_approx", "eps_delta", "empirical_gap", "gamma"] {
        assert!(v.get(key).is_some(), "missing {key} in {out}");
    }
    let gap = v["empirical_gap"].as_f64().unwrap();
    if let Some(b) = v["bound_global"].as_f64() {
        assert!(gap <= b + 1e-9);
    }
}

#[test]
fn oracle_labels_off_drops_the_oracle_bound() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen_graph(dir.path());
    let out = ok(&["bound", "--graph", &g, "--epochs", "20", "--oracle-labels", "off"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["bound_classwise"].is_null());
    assert!(v["bound_classwise_approx"].as_f64().is_some());
}

#[test]
fn depth_sweep_writes_pinned_columns() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen_graph(dir.path());
    let out = dir.path().join("sweep.csv");
    ok(&["depth-sweep", "--graph", &g, "--depths", "1,4", "--out", out.to_str().unwrap()]);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "depth,W_G,W_C,W_S,envelope_sgc,rho_perp,C1,C2,beta");
    assert_eq!(lines.count(), 2);
}

#[test]
fn run_then_correlate() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen_graph(dir.path());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, format!(r#"{{"graph": {{"manifest": "{g}"}}, "depths": [1, 2, 8], "clf_layers": [1], "epochs": 40}}"#)).unwrap();
    let report = dir.path().join("rep.csv");
    ok(&["run", "--config", cfg.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert!(dir.path().join("rep.config.json").exists());
    let out = ok(&["correlate", "--input", report.to_str().unwrap(), "--fields", "bound_global,gap"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("gap\trho=1.0000\tused=3"), "{out}");
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let out = otgen(&["bound", "--graph", "/nonexistent/g.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/g.json"));
    let dir = tempfile::tempdir().unwrap();
    let g = gen_graph(dir.path());
    let out = otgen(&["bound", "--graph", &g, "--clf-layers", "3"]);
    assert!(!out.status.success());
    let out = otgen(&["bound", "--graph", &g, "--percentile", "1.5"]);
    assert!(!out.status.success());
}
