use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use qbattery_ffi::*;

const SMALL: &str = "spec_version = 1
[model]
n_qubits = 1
g = 0.5
j = 0.0
photons = 1
[rates]
kappa = 0.1
gamma1 = 0.1
[integrator]
t_final = 100.0
";

fn last_error() -> String {
    unsafe { CStr::from_ptr(qb_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn parse(text: &str, overrides: &[&str]) -> (QbStatus, *mut QbSpec) {
    let text = CString::new(text).unwrap();
    let owned: Vec<CString> = overrides
        .iter()
        .map(|s| CString::new(*s).unwrap())
        .collect();
    let ptrs: Vec<*const c_char> = owned.iter().map(|s| s.as_ptr()).collect();
    let mut spec = ptr::null_mut();
    let status = unsafe { qb_spec_parse(text.as_ptr(), ptrs.as_ptr(), ptrs.len(), &mut spec) };
    (status, spec)
}

#[test]
fn metrics_and_trace_round_trip() {
    let (status, spec) = parse(SMALL, &[]);
    assert_eq!(status, QbStatus::Ok, "{}", last_error());

    let mut m = QbMetrics::default();
    assert_eq!(
        unsafe { qb_run_metrics(spec, &mut m) },
        QbStatus::Ok,
        "{}",
        last_error()
    );
    assert!(m.stable_energy > 0.0 && m.max_power > 0.0);
    assert_eq!(m.fock_cutoff, 1 + 2 + 4);

    let mut trace = ptr::null_mut();
    assert_eq!(
        unsafe { qb_run_trace(spec, &mut trace) },
        QbStatus::Ok,
        "{}",
        last_error()
    );
    let n = unsafe { qb_trace_len(trace) };
    assert_eq!(n, 1001);
    let mut t = vec![0.0; n];
    let mut de = vec![0.0; n];
    unsafe {
        assert_eq!(
            qb_trace_series(trace, QbSeries::Time, t.as_mut_ptr(), n),
            QbStatus::Ok
        );
        assert_eq!(
            qb_trace_series(trace, QbSeries::DeltaE, de.as_mut_ptr(), n),
            QbStatus::Ok
        );
        assert_eq!(
            qb_trace_series(trace, QbSeries::Power, de.as_mut_ptr(), n - 1),
            QbStatus::BufferTooSmall
        );
    }
    assert_eq!(t[0], 0.0);
    assert!((t[n - 1] - 100.0).abs() < 1e-9);
    assert_eq!(de[0], 0.0);

    let mut text = ptr::null_mut();
    assert_eq!(unsafe { qb_spec_to_toml(spec, &mut text) }, QbStatus::Ok);
    let toml = unsafe { CStr::from_ptr(text) }
        .to_str()
        .unwrap()
        .to_string();
    assert!(toml.contains("fock_cutoff = 7"));
    unsafe {
        qb_string_free(text);
        qb_trace_free(trace);
        qb_spec_free(spec);
    }
}

#[test]
fn overrides_apply_and_bad_input_is_reported() {
    let (status, spec) = parse(SMALL, &["model.g=0.25"]);
    assert_eq!(status, QbStatus::Ok);
    unsafe { qb_spec_free(spec) };

    let (status, spec) = parse(SMALL, &["rates.kappa=-1"]);
    assert_eq!(status, QbStatus::InvalidInput);
    assert!(spec.is_null());
    assert!(last_error().contains("kappa"), "{}", last_error());

    let (status, _) = parse(SMALL, &["model.bogus=1"]);
    assert_eq!(status, QbStatus::InvalidInput);
}

#[test]
fn null_and_non_utf8_arguments_are_rejected() {
    let mut spec = ptr::null_mut();
    assert_eq!(
        unsafe { qb_spec_parse(ptr::null(), ptr::null(), 0, &mut spec) },
        QbStatus::NullPointer
    );
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { qb_spec_parse(bad.as_ptr().cast(), ptr::null(), 0, &mut spec) },
        QbStatus::InvalidUtf8
    );
    let mut m = QbMetrics::default();
    assert_eq!(
        unsafe { qb_run_metrics(ptr::null(), &mut m) },
        QbStatus::NullPointer
    );
    assert_eq!(unsafe { qb_trace_len(ptr::null()) }, 0);
    unsafe {
        qb_spec_free(ptr::null_mut());
        qb_trace_free(ptr::null_mut());
        qb_string_free(ptr::null_mut());
    }
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(qb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api_and_compiles() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(include.join("qbattery.h")).unwrap();
    for name in [
        "qb_spec_parse",
        "qb_spec_free",
        "qb_run_metrics",
        "qb_run_trace",
        "qb_trace_series",
        "qb_trace_free",
        "qb_last_error",
        "QB_STATUS_OK",
        "typedef struct QbSpec QbSpec",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
    let Some(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"qbattery.h\"\nint main(void) {\n  QbSpec *s = 0;\n  QbMetrics m;\n  \
         QbStatus st = qb_spec_parse(\"\", 0, 0, &s);\n  if (st == QB_STATUS_OK) qb_run_metrics(s, &m);\n  \
         qb_spec_free(s);\n  return (int)st;\n}\n",
    )
    .unwrap();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn which_cc() -> Option<&'static str> {
    ["cc", "gcc", "clang"].into_iter().find(|c| {
        Command::new(c)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
    })
}
