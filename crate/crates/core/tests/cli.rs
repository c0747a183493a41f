//! End-to-end runs of the `qbattery` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_TRACE: &str = r#"spec_version = 1
[model]
n_qubits = 1
g = 0.5
j = 0.0
photons = 1

[integrator]
t_final = 100.0

[[trace.cases]]
kappa = 0.0

[[trace.cases]]
kappa = 0.2
gamma1 = 0.1
"#;

fn qbattery(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbattery"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn write_spec(dir: &Path, text: &str) -> String {
    let path = dir.join("spec.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn trace_writes_csv_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), SMALL_TRACE);
    let out = tmp.path().join("out");
    let o = qbattery(&["trace", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let written = files(&out);
    let names: Vec<&str> = written.keys().map(String::as_str).collect();
    assert_eq!(
        names,
        [
            "effective_spec.toml",
            "summary.json",
            "trace_closed.csv",
            "trace_kappa0.2_gamma10.1_gamma20.csv"
        ]
    );
    let csv = String::from_utf8(written["trace_closed.csv"].clone()).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 8, "{header}");
    assert_eq!(csv.lines().count(), 1 + 1001);

    let summary: serde_json::Value = serde_json::from_slice(&written["summary.json"]).unwrap();
    assert_eq!(summary["command"], "trace");
    assert_eq!(summary["results"].as_array().unwrap().len(), 2);
}

#[test]
fn reruns_are_bit_identical_and_reproducible_from_the_effective_spec() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), SMALL_TRACE);
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    for dir in [&a, &b] {
        let o = qbattery(&[
            "trace",
            "--spec",
            &spec,
            "--out",
            dir.to_str().unwrap(),
            "--set",
            "model.g=0.7",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(files(&a), files(&b));

    let effective = a.join("effective_spec.toml");
    let o = qbattery(&[
        "trace",
        "--spec",
        effective.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(files(&a), files(&c));
}

#[test]
fn negative_rate_is_a_config_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), SMALL_TRACE);
    let out = tmp.path().join("out");
    let o = qbattery(&[
        "trace",
        "--spec",
        &spec,
        "--out",
        out.to_str().unwrap(),
        "--set",
        "rates.kappa=-0.1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kappa"), "{}", stderr(&o));
}

#[test]
fn unknown_override_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = qbattery(&[
        "spectrum",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "model.bogus=1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn malformed_spec_reports_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), "spec_version = 1\n[model]\ng = \n");
    let out = tmp.path().join("out");
    let o = qbattery(&["trace", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn unconverged_cutoff_fails_numerically_after_writing_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(
        tmp.path(),
        r#"spec_version = 1
[model]
n_qubits = 1
j = 0.0
photons = 1
fock_cutoff = 3

[rates]
kappa = 0.1
gamma1 = 0.1

[sweep]
kind = "grid"
[[sweep.axes]]
name = "g"
values = [1.5]
"#,
    );
    let out = tmp.path().join("out");
    let o = qbattery(&["sweep", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("g=1.5"), "{}", stderr(&o));
    assert!(out.join("sweep.csv").exists());
    assert!(out.join("sweep_convergence.csv").exists());

    let o = qbattery(&[
        "sweep",
        "--spec",
        &spec,
        "--out",
        out.to_str().unwrap(),
        "--set",
        "convergence.mode=report",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn spectrum_matches_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = qbattery(&[
        "spectrum",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "spectrum.j_values=[-1.0, 0.0, 1.0]",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let p = qbattery::model::ModelParams::resonant_qubits(3, 1.0, 1.0, 10);
    let table = qbattery::model::spectrum_vs_j(&p, &[-1.0, 0.0, 1.0]).unwrap();
    assert_eq!(csv, table.to_csv());
}

#[test]
fn params_needs_a_circuit_section() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = qbattery(&["params", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("circuit"), "{}", stderr(&o));
}
