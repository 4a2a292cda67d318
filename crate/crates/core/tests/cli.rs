use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netreg"))
}

fn small_config(extra: &str) -> String {
    format!(
        r#"{{
        "schema_version": 1,
        "model": {{"kind": "quadratic", "dim": 4, "eig_range": [0.2, 1.0]}},
        "nodes": 4,
        "noise": {{"model": "gaussian", "sigma": 1.0}},
        "rates": [2.0, 1.0, 1.0, 1.0],
        "hyper": {{"gamma": 0.01, "a": 1.0}},
        "horizon": {{"ticks": 10}},
        "trials": 2,
        "seed": 3{extra}
    }}"#
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn assert_valid_svg(p: &Path) {
    let text = std::fs::read_to_string(p).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    assert_eq!(doc.root_element().tag_name().name(), "svg");
}

#[test]
fn smoke_run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &small_config(""));
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out), "--thin", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("trial_0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,t,node,vbar,grad_norm_sq,loss,running_avg_grad_norm_sq,running_avg_vbar"
    );
    assert_eq!(lines.count(), 10);
    for f in ["config.json", "trial_1.csv", "aggregate.csv", "summary.json", "timing.json", "graph.edges"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(summary["config"]["nodes"], 4);
    assert_eq!(summary["trials_total"], 2);
    for f in ["grad_norm_sq.svg", "loss.svg", "vbar.svg"] {
        assert_valid_svg(&out.join(f));
    }
    let edges = std::fs::read_to_string(out.join("graph.edges")).unwrap();
    assert_eq!(edges.lines().count(), 6);
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &small_config(r#", "horizon": {"ticks": 300}"#).replace(r#""horizon": {"ticks": 10},"#, ""));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&a)]).status.success());
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&b)]).status.success());
    for f in ["trial_0.csv", "trial_1.csv", "aggregate.csv", "summary.json", "config.json", "grad_norm_sq.svg"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn adding_trials_keeps_earlier_trials() {
    let tmp = tempfile::tempdir().unwrap();
    let five = write_config(tmp.path(), "five.json", &small_config("").replace(r#""trials": 2"#, r#""trials": 5"#));
    let ten = write_config(tmp.path(), "ten.json", &small_config("").replace(r#""trials": 2"#, r#""trials": 10"#));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["run", "--config", s(&five), "--out", s(&a)]).status.success());
    assert!(run(&["run", "--config", s(&ten), "--out", s(&b), "--workers", "3"]).status.success());
    for i in 0..5 {
        let f = format!("trial_{i}.csv");
        assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap());
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &small_config(""));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&a)]).status.success());
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&b), "--seed", "99"]).status.success());
    assert_ne!(
        std::fs::read(a.join("trial_0.csv")).unwrap(),
        std::fs::read(b.join("trial_0.csv")).unwrap()
    );
    assert_eq!(read_json(&b.join("summary.json"))["config"]["seed"], 99);
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    assert_eq!(run(&["run", "--config", s(&missing)]).status.code(), Some(1));
    let bad = write_config(tmp.path(), "bad.json", "{ not json");
    assert_eq!(run(&["check", "--config", s(&bad)]).status.code(), Some(1));
    let wrong_rates = write_config(
        tmp.path(),
        "rates.json",
        &small_config("").replace("[2.0, 1.0, 1.0, 1.0]", "[1.0, 1.0]"),
    );
    let o = run(&["run", "--config", s(&wrong_rates), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rates"));
}

#[test]
fn all_diverged_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &small_config(r#", "schemes": ["fl"]"#)
            .replace(r#""gamma": 0.01"#, r#""gamma": 500.0"#)
            .replace(r#""ticks": 10"#, r#""ticks": 400"#),
    );
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["trials_diverged"], 2);
}

#[test]
fn check_reports_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = write_config(tmp.path(), "ok.json", &small_config("").replace("[2.0, 1.0, 1.0, 1.0]", "1.0"));
    let o = run(&["check", "--config", s(&ok)]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success());
    assert!(text.contains("Theorem 1 applies"), "{text}");
    assert!(text.contains("κ = "));

    let low_a = write_config(tmp.path(), "low.json", &small_config("").replace(r#""a": 1.0"#, r#""a": 0.01"#));
    let text = String::from_utf8_lossy(&run(&["check", "--config", s(&low_a)]).stdout).into_owned();
    assert!(text.contains("Theorem 1 inapplicable"), "{text}");
    assert!(text.contains("γ̄₁ = -"), "{text}");

    // L = 1, so γ = 3 lies outside (0, 2/L).
    let big_gamma = write_config(tmp.path(), "big.json", &small_config("").replace(r#""gamma": 0.01"#, r#""gamma": 3.0"#));
    let text = String::from_utf8_lossy(&run(&["check", "--config", s(&big_gamma)]).stdout).into_owned();
    assert!(text.contains("Proposition 1 inapplicable"), "{text}");
}

#[test]
fn compare_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &small_config("").replace(r#""ticks": 10"#, r#""ticks": 500"#));
    let out = tmp.path().join("cmp");
    let o = run(&["compare", "--config", s(&cfg), "--out", s(&out), "--thin", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cmp = read_json(&out.join("comparison.json"));
    assert!(cmp["grad_plateau_ratio"].as_f64().unwrap() > 0.0);
    assert!(out.join("nr/trial_0.csv").exists() && out.join("fl/trial_0.csv").exists());

    let svg = std::fs::read_to_string(out.join("grad_norm_sq.svg")).unwrap();
    assert_valid_svg(&out.join("grad_norm_sq.svg"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains(">nr<") && svg.contains(">fl<"));

    let figs = tmp.path().join("figs");
    let o = run(&["plot", "--out", s(&figs), s(&out.join("nr")), s(&out.join("fl"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_valid_svg(&figs.join("loss.svg"));
}

#[test]
fn sweep_over_topology() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &small_config(r#", "sweep": {"axis": "topology", "values": [{"kind": "complete"}, {"kind": "ring", "k": 2}]}"#)
            .replace(r#""ticks": 10"#, r#""ticks": 200"#),
    );
    let out = tmp.path().join("sw");
    let o = run(&["sweep", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = read_json(&out.join("sweep.json"));
    assert_eq!(rep["points"].as_array().unwrap().len(), 2);
    assert_eq!(rep["points"][1]["label"], "ring_k2");
    assert!(out.join("point_1/nr/aggregate.csv").exists());
    assert_valid_svg(&out.join("sweep.svg"));
}

#[test]
fn time_horizon_and_trace_export() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &small_config(r#", "export_traces": true"#).replace(r#""ticks": 10"#, r#""time": 20.0"#),
    );
    let out = tmp.path().join("t");
    assert!(run(&["run", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let trace = std::fs::read_to_string(out.join("trace_0.csv")).unwrap();
    assert!(trace.starts_with("k,t,node\n"));
    let last_t: f64 = trace.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(last_t <= 20.0);
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["realtime_bounds"]["time"], 20.0);
}
