use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use darboux_core::config::RunConfig;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_darboux"))
}

fn quick() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/quick.toml")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// (x, V) pairs from a potential CSV at its first time.
fn first_row(csv: &str) -> Vec<(f64, f64)> {
    let mut rows = csv.lines().skip(1).map(|l| {
        let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
        (f[0], f[1], f[2])
    });
    let t0 = rows.clone().next().unwrap().1;
    rows.by_ref().filter(|r| r.1 == t0).map(|r| (r.0, r.2)).collect()
}

#[test]
fn catalog_lists_all_families() {
    let o = run(&["catalog"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["osc1", "osc2", "osc3", "osc-erf", "sing-broken", "sing-exact"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{name}  "))), "{name} missing:\n{text}");
    }
}

#[test]
fn catalog_shows_the_allowed_p_rule() {
    let o = run(&["catalog", "--family", "sing-exact"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("rule: if p is even"), "{text}");
    assert_eq!(text.lines().filter(|l| !l.starts_with(' ')).count(), 1);
}

#[test]
fn catalog_json_templates_form_a_valid_config() {
    let o = run(&["catalog", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let entries = v.as_array().unwrap();
    assert_eq!(entries.len(), 6);
    let mut toml = String::new();
    for e in entries {
        let t: toml::Table = serde_json::from_value(e["template"].clone()).unwrap();
        toml.push_str(&format!("[[family]]\n{t}\n"));
    }
    let cfg = RunConfig::from_toml(&toml).unwrap();
    assert_eq!(cfg.families.len(), 6);
    cfg.validate().unwrap();
}

#[test]
fn unknown_family_is_a_config_error() {
    let o = run(&["catalog", "--family", "osc9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("expected one of"));
}

#[test]
fn erf_parameter_with_node_is_rejected() {
    let o = run(&["verify", "--family", "osc-erf", "--param", "C=0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("|C| > 1"), "{}", stderr(&o));
}

#[test]
fn param_without_family_is_rejected() {
    let o = run(&["verify", "--param", "C=2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_reports_its_location() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[grid]\nt_min = 0.0\nnt = \"many\"\n").unwrap();
    let o = run(&["verify", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn verify_quick_config_writes_report() {
    let dir = TempDir::new().unwrap();
    let o = run(&["verify", "--config", path(&quick()), "--out", path(dir.path()), "--negative-controls"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["passed"] == true));
    assert!(checks.iter().any(|c| c["control"] == true));
}

#[test]
fn potential_export_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        let o = run(&["potential", "--config", path(&quick()), "--out", path(d.path())]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"potential.json".to_string()));
    assert!(names.iter().filter(|n| n.ends_with("-potential.csv")).count() == 3);
    for n in &names {
        assert_eq!(std::fs::read(a.path().join(n)).unwrap(), std::fs::read(b.path().join(n)).unwrap(), "{n}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("potential.json")).unwrap()).unwrap();
    for e in summary.as_array().unwrap() {
        assert!(e["max_scaled_deviation"].as_f64().unwrap() < 1e-6);
    }
}

#[test]
fn singular_potentials_near_the_origin() {
    // u ~ x^s with s(s − 1) = g adds 2s/x²: s = 2 on the broken branch,
    // s = −1 on the exact one (g = 2)
    let dir = TempDir::new().unwrap();
    for family in ["sing-broken", "sing-exact"] {
        let o = run(&["potential", "--config", path(&quick()), "--family", family, "--out", path(dir.path())]);
        assert!(o.status.success(), "{}", stderr(&o));
        let csv = std::fs::read_to_string(dir.path().join(format!("00-{family}-potential.csv"))).unwrap();
        let (x, v) = first_row(&csv)[0];
        assert!(x < 2e-3);
        let want = if family == "sing-broken" { 6.0 } else { 0.0 };
        assert!((x * x * v - want).abs() < 1e-3, "{family}: x²V = {}", x * x * v);
    }
}

#[test]
fn propagate_exports_both_grids() {
    let dir = TempDir::new().unwrap();
    let o = run(&["propagate", "--config", path(&quick()), "--family", "osc3", "--param", "n=0", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let numeric = std::fs::read_to_string(dir.path().join("00-osc3-state2-numeric.csv")).unwrap();
    let analytic = std::fs::read_to_string(dir.path().join("00-osc3-state2-analytic.csv")).unwrap();
    assert_eq!(numeric.lines().next(), Some("x,t,re,im"));
    assert_eq!(numeric.lines().count(), analytic.lines().count());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("propagation.json")).unwrap()).unwrap();
    let run = &summary[0];
    assert!(run["error"].as_f64().unwrap() < run["tolerance"].as_f64().unwrap());
    assert_eq!(run["row_errors"].as_array().unwrap().len(), 11);
}
