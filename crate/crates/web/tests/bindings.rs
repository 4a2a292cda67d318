use netreg_web::{bound_report_json, graph_spectrum_json, simulate_compare_json};
use serde_json::Value;

const CONFIG: &str = r#"{
    "schema_version": 1,
    "model": {"kind": "quadratic", "dim": 4, "eig_range": [0.2, 1.0]},
    "nodes": 5,
    "noise": {"model": "gaussian", "sigma": 1.0},
    "rates": 1.0,
    "hyper": {"gamma": 0.02, "a": 1.0},
    "horizon": {"ticks": 2000},
    "trials": 3,
    "thin": 20,
    "workers": 4
}"#;

#[test]
fn compare_returns_both_curves() {
    let v: Value = serde_json::from_str(&simulate_compare_json(CONFIG).unwrap()).unwrap();
    assert_eq!(v["nr"]["k"].as_array().unwrap().len(), 100);
    assert_eq!(v["fl"]["grad_norm_sq"].as_array().unwrap().len(), 100);
    assert!(v["fl"]["vbar"].as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0)));
    assert!(v["nr_plateau_grad_norm_sq"].as_f64().unwrap() > 0.0);
    assert_eq!(v["bounds"]["theorem1_valid"], true);
}

#[test]
fn compare_rejects_oversized_runs() {
    let big = CONFIG.replace(r#""ticks": 2000"#, r#""ticks": 5000000"#);
    assert!(simulate_compare_json(&big).unwrap_err().contains("demo limit"));
    assert!(simulate_compare_json("{}").is_err());
}

#[test]
fn bound_report_has_verdicts() {
    let v: Value = serde_json::from_str(&bound_report_json(CONFIG).unwrap()).unwrap();
    let verdicts: Vec<&str> = v["verdicts"].as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect();
    assert!(verdicts.iter().any(|l| l.starts_with("Theorem 1 applies")));
    assert!((v["report"]["gamma_bar2"].as_f64().unwrap() - 1.0 / 44.0).abs() < 1e-9);
}

#[test]
fn spectrum_of_ring() {
    let v: Value = serde_json::from_str(&graph_spectrum_json("ring", 10, 2, 0.0, 0).unwrap()).unwrap();
    let expect = 2.0 - 2.0 * (2.0 * std::f64::consts::PI / 10.0).cos();
    assert!((v["lambda2"].as_f64().unwrap() - expect).abs() < 1e-9);
    assert_eq!(v["edges"].as_array().unwrap().len(), 10);
    assert!(graph_spectrum_json("star", 10, 2, 0.0, 0).is_err());
    let ws: Value = serde_json::from_str(&graph_spectrum_json("watts_strogatz", 30, 4, 0.3, 5).unwrap()).unwrap();
    assert!(ws["lambda2"].as_f64().unwrap() > 0.0);
}

#[test]
fn demo_page_default_config_runs() {
    let html = include_str!("../www/index.html");
    let start = html.find(r#"<textarea id="config">"#).unwrap() + r#"<textarea id="config">"#.len();
    let end = start + html[start..].find("</textarea>").unwrap();
    let cfg = &html[start..end];
    let v: Value = serde_json::from_str(&simulate_compare_json(cfg).unwrap()).unwrap();
    assert!(v["fl_plateau_grad_norm_sq"].as_f64().unwrap() > v["nr_plateau_grad_norm_sq"].as_f64().unwrap());
    let r: Value = serde_json::from_str(&bound_report_json(cfg).unwrap()).unwrap();
    assert!(!r["verdicts"].as_array().unwrap().is_empty());
    for kind in ["complete", "ring", "watts_strogatz"] {
        graph_spectrum_json(kind, 20, 4, 0.2, 1).unwrap();
    }
}
