use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lindstedt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lindstedt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exited normally")
}

fn expand_into(dir: &Path, precision: &str) -> Output {
    lindstedt(&[
        "expand",
        "--model",
        "ref1",
        "--order",
        "3",
        "--precision",
        precision,
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn verify_reference_model_passes() {
    let output = lindstedt(&["verify", "--model", "ref1", "--order", "3", "--samples", "20"]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(code(&output), 0, "{stdout}");
    assert!(stdout.ends_with("[verdict]\nstatus: pass\n"));
    for section in [
        "[formal residual]",
        "[tree oracle equivalence]",
        "[zero momentum cancellation]",
        "[scale certificate]",
        "[bryuno bound]",
        "[localized cancellation trees]",
        "[localized cancellation catalog]",
        "[self-energy symmetry]",
    ] {
        assert!(stdout.contains(section), "missing {section}");
    }
}

#[test]
fn missing_model_is_a_usage_error() {
    let output = lindstedt(&["verify", "--model", "/nonexistent/model.toml"]);
    assert_eq!(code(&output), 2);
    assert!(String::from_utf8_lossy(&output.stderr).contains("--model"));
}

#[test]
fn malformed_flags_are_usage_errors() {
    assert_eq!(code(&lindstedt(&["verify", "--precision", "extended"])), 2);
    assert_eq!(code(&lindstedt(&["expand", "--precision", "quad"])), 2);
    assert_eq!(code(&lindstedt(&["probe-domain", "--phi", "3/2"])), 2);
    assert_eq!(code(&lindstedt(&["frobnicate"])), 2);
}

#[test]
fn model_files_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.toml");
    fs::write(
        &path,
        r#"
name = "pendulum"
r = 2
s = 1
omega = ["1", "0.6180339887498948482045868343656381177203"]
tau = 1
C0 = "0.38"
beta0 = ["0"]
symmetrize = true

[[terms]]
nu = [0, 0]
mu = [1]
re = "0.5"

[[terms]]
nu = [1, 0]
mu = [1]
re = "0.25"
"#,
    )
    .unwrap();
    let output = lindstedt(&["expand", "--model", path.to_str().unwrap(), "--order", "2"]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(code(&output), 0, "{stdout}{}", String::from_utf8_lossy(&output.stderr));
    assert!(stdout.contains("name: pendulum"));

    fs::write(&path, "r = \"two\"").unwrap();
    assert_eq!(code(&lindstedt(&["expand", "--model", path.to_str().unwrap()])), 2);
}

#[test]
fn expand_is_deterministic_and_matches_golden() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    assert_eq!(code(&expand_into(first.path(), "double")), 0);
    assert_eq!(code(&expand_into(second.path(), "double")), 0);
    for file in ["expand.txt", "coefficients.txt"] {
        let a = fs::read(first.path().join(file)).unwrap();
        let b = fs::read(second.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
    let table = fs::read_to_string(first.path().join("coefficients.txt")).unwrap();
    let golden = include_str!("golden/ref1_order3_coefficients.txt");
    assert_eq!(table, golden);

    // a^(1) at ν = (1, 1) is i ν_α f_ν / (ω·ν)² with f_ν = 1/2
    let sigma = (5f64.sqrt() - 1.0) / 2.0;
    let expected = 0.5 / (1.0 + sigma).powi(2);
    let line = table.lines().find(|l| l.starts_with("1 1 1 0 ")).unwrap();
    let im: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
    assert!((im - expected).abs() < 1e-15, "{line}");
}

#[test]
fn extended_precision_agrees_with_double() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&expand_into(dir.path(), "extended")), 0);
    let report = fs::read_to_string(dir.path().join("expand.txt")).unwrap();
    assert!(report.contains("precision: extended"));
    let extended = fs::read_to_string(dir.path().join("coefficients.txt")).unwrap();
    let golden = include_str!("golden/ref1_order3_coefficients.txt");
    let (extended, golden) = (records(&extended), records(golden));
    let keys: BTreeSet<&String> = extended.keys().chain(golden.keys()).collect();
    for key in keys {
        let x = extended.get(key).copied().unwrap_or_default();
        let g = golden.get(key).copied().unwrap_or_default();
        assert!(
            (x.0 - g.0).abs() <= 1e-15 && (x.1 - g.1).abs() <= 1e-15,
            "{key}: {x:?} vs {g:?}"
        );
    }
}

/// `section/index fields → (re, im)`; rows absent from a table stand for zero.
fn records(table: &str) -> BTreeMap<String, (f64, f64)> {
    let mut section = String::new();
    let mut out = BTreeMap::new();
    for line in table.lines() {
        if line.starts_with('[') {
            section = line.to_string();
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let n = fields.len();
        let value = (fields[n - 2].parse().unwrap(), fields[n - 1].parse().unwrap());
        out.insert(format!("{section} {}", fields[..n - 2].join(" ")), value);
    }
    out
}

#[test]
fn verify_dumps_trees_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let output = lindstedt(&[
        "verify",
        "cancellations",
        "--order",
        "2",
        "--dump-trees",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0);
    let trees = fs::read_to_string(dir.path().join("trees.txt")).unwrap();
    assert!(trees.starts_with("# order 1 tree 0 family "));
    let report = fs::read_to_string(dir.path().join("verify.txt")).unwrap();
    assert!(report.contains("[zero momentum cancellation]"));
    assert!(!report.contains("[bryuno bound]"));
}

#[test]
fn resum_reports_every_window() {
    let output = lindstedt(&["resum", "--model", "ref1"]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(code(&output), 0, "{stdout}");
    for n in -5..=1 {
        assert!(stdout.contains(&format!("[window {n}]")), "window {n}");
    }
    assert!(stdout.contains("[block bounds]"));
}

#[test]
fn domain_probe_fails_at_the_narrowest_opening_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let full = lindstedt(&["probe-domain", "--eps0", "0.1", "--out", out]);
    assert_eq!(code(&full), 1);
    let report = fs::read_to_string(dir.path().join("probe-domain.txt")).unwrap();
    assert!(report.contains("phi 7.8539816339744828e-1: fail"));
    assert!(report.contains("phi 1.5707963267948966e0: pass"));
    let csv = fs::read_to_string(dir.path().join("domain.csv")).unwrap();
    assert!(csv.starts_with("phi,re_eps,im_eps,pass,norm_margin\n"));

    let wide = lindstedt(&["probe-domain", "--eps0", "0.1", "--phi", "1/2", "3/4", "--out", out]);
    assert_eq!(code(&wide), 0, "{}", String::from_utf8_lossy(&wide.stderr));
}

#[test]
fn bench_reports_throughput() {
    let output = lindstedt(&["bench", "--order", "3"]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(code(&output), 0);
    assert!(stdout.contains("trees: [10, 90, 1180]"));
    assert!(stdout.contains("products per second: "));
}
