use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wignerphase"));
    for k in ["WIGNERPHASE_CONFIG", "WIGNERPHASE_OUT", "WIGNERPHASE_THREADS", "WIGNERPHASE_SEED"] {
        c.env_remove(k);
    }
    c
}

fn run(dir: &Path, sub: &str, config: &str, out: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{out}.json"));
    fs::write(&cfg, config).unwrap();
    bin()
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join(out))
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data rows of a CSV file, parsed.
fn rows(path: PathBuf) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn curvature_at_unit_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "curvature", r#"{"system":"oscillator","points":[[1,0,1]]}"#, "c", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for (file, tol) in [("curvature_hilbert.csv", 2e-3), ("curvature_phasespace.csv", 1e-6)] {
        let r = rows(dir.path().join("c").join(file));
        assert_eq!(r.len(), 1);
        assert_eq!(&r[0][..3], &[1.0, 0.0, 1.0]);
        assert!((r[0][3] - 0.125).abs() < tol && r[0][4].abs() < tol && (r[0][5] - 0.125).abs() < tol, "{file}: {:?}", r[0]);
    }
    let d = rows(dir.path().join("c/curvature_diff.csv"));
    assert!(d[0][3..].iter().all(|v| v.abs() < 2e-3));
    assert!(dir.path().join("c/resolved_config.json").exists());
}

#[test]
fn csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"system":"oscillator","levels":[0,2],"sweep":{"x":{"min":1,"max":2,"count":2},"y":{"min":0,"max":0,"count":1},"z":{"min":1,"max":1.5,"count":2}}}"#;
    let o = run(dir.path(), "curvature", cfg, "s", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("s/curvature_phasespace_n2.csv")).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("X,Y,Z,F_YZ,F_ZX,F_XY"));
    let data: Vec<&str> = lines.collect();
    assert_eq!(data.len(), 4);
    for field in data[0].split(',') {
        let mantissa = field.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").len(), 17, "{field}");
    }
    // F^q scales with n + 1/2
    let n0 = rows(dir.path().join("s/curvature_phasespace_n0.csv"));
    let n2 = rows(dir.path().join("s/curvature_phasespace_n2.csv"));
    for (a, b) in n0.iter().zip(&n2) {
        assert!((b[5] - 5.0 * a[5]).abs() < 1e-8);
    }
}

#[test]
fn domain_error_names_the_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "curvature", r#"{"system":"oscillator","points":[[1,0,1],[1,2,1]]}"#, "d", &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("(1, 2, 1)"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"system":"oscillator","levels":[],"points":[[1,0,1]]}"#,
        r#"{"system":"oscillator","points":[[1,0,1]],"colour":"red"}"#,
        r#"{"system":"pendulum"}"#,
        r#"{"system":"oscillator","hbar":-1}"#,
        "not json",
    ];
    for (k, cfg) in cases.iter().enumerate() {
        let o = run(dir.path(), "curvature", cfg, &format!("u{k}"), &[]);
        assert_eq!(o.status.code(), Some(1), "{cfg}: {}", stderr(&o));
    }
    let o = bin().arg("phase").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn too_fast_schedule_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"system":"oscillator","schedule":{"total_time":2,"time_steps":20,"factors":[1]}}"#;
    let o = run(dir.path(), "verify", cfg, "v", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("adiabaticity"), "{}", stderr(&o));
}

#[test]
fn wigner_first_excited_state_is_negative_at_origin() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "wigner", r#"{"system":"oscillator","levels":[1]}"#, "w", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(dir.path().join("w/wigner.csv"));
    assert_eq!(r.len(), 81 * 81);
    let origin = r.iter().find(|v| v[0] == 0.0 && v[1] == 0.0).unwrap();
    assert!((origin[2] + 1.0 / PI).abs() < 1e-8, "{}", origin[2]);
    let radial = rows(dir.path().join("w/wigner_radial.csv"));
    assert_eq!(radial[0][0], 0.0);
    assert!((radial[0][1] + 1.0 / PI).abs() < 1e-8);
}

#[test]
fn phase_report_on_the_unit_cap() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "phase", r#"{"system":"oscillator"}"#, "p", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(dir.path().join("p/phase_report.json"));
    let g = |k: &str| r[k]["raw"].as_f64().unwrap();
    assert!((g("gamma_q") + 0.85307).abs() < 1e-3);
    assert!((g("gamma_ps") + 0.85307).abs() < 1e-5);
    assert!((r["hannay"].as_f64().unwrap() - 1.70614).abs() < 1e-5);
    assert!(r["wz_holonomy"].is_null());
    assert!(!r["diagnostics"]["conventions"].as_array().unwrap().is_empty());
}

#[test]
fn flat_and_degenerate_circuits_give_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"system":"oscillator","circuit":{"type":"planar-y0","x0":1.2,"z0":0.9,"radius":0.3,"samples":128}}"#,
        r#"{"system":"oscillator","circuit":{"type":"cap","omega0":1,"r":0,"samples":64}}"#,
    ];
    for (k, cfg) in cases.iter().enumerate() {
        let name = format!("z{k}");
        let o = run(dir.path(), "phase", cfg, &name, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        let r = json(dir.path().join(&name).join("phase_report.json"));
        for v in [&r["gamma_q"]["raw"], &r["gamma_ps"]["raw"], &r["hannay"]] {
            assert!(v.as_f64().unwrap().abs() < 1e-6, "{cfg}: {v}");
        }
    }
}

#[test]
fn separable_curvature_adds_modes() {
    let dir = tempfile::tempdir().unwrap();
    let point = r#""points":[[1.5,0.2,1]]"#;
    let o = run(dir.path(), "curvature", &format!(r#"{{"system":"separable-product","levels":[0,1],{point}}}"#), "sp", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(dir.path(), "curvature", &format!(r#"{{"system":"oscillator","levels":[0,1],{point}}}"#), "os", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let prod = rows(dir.path().join("sp/curvature_phasespace.csv"));
    let a = rows(dir.path().join("os/curvature_phasespace_n0.csv"));
    let b = rows(dir.path().join("os/curvature_phasespace_n1.csv"));
    for k in 3..6 {
        assert!((prod[0][k] - a[0][k] - b[0][k]).abs() < 1e-10);
    }
}

#[test]
fn runs_are_deterministic_and_resolved_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"system":"oscillator","levels":[1],"circuit":{"type":"cap","omega0":1,"r":0.6,"samples":128},"wz":{"rank":2,"gauge_strength":0.4},"mixed":{"weights":[0.7,0.3]}}"#;
    for out in ["a", "b"] {
        let o = run(dir.path(), "phase", cfg, out, &["--seed", "17", "--threads", "2"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |d: &str, f: &str| fs::read(dir.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "phase_report.json"), read("b", "phase_report.json"));
    assert_eq!(read("a", "resolved_config.json"), read("b", "resolved_config.json"));

    let resolved = String::from_utf8(read("a", "resolved_config.json")).unwrap();
    let v: Value = serde_json::from_str(&resolved).unwrap();
    assert_eq!(v["seed"], 17);
    assert_eq!(v["backend"], "analytic");
    assert_eq!(v["quadrature"]["surface_order"], 8);
    let o = run(dir.path(), "phase", &resolved, "c", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read("a", "phase_report.json"), read("c", "phase_report.json"));
    assert_eq!(read("a", "resolved_config.json"), read("c", "resolved_config.json"));

    // a different gauge changes the holonomy but not the phases
    let o = run(dir.path(), "phase", cfg, "d", &["--seed", "18"]);
    assert!(o.status.success());
    let (a, d) = (json(dir.path().join("a/phase_report.json")), json(dir.path().join("d/phase_report.json")));
    assert_ne!(a["wz_holonomy"], d["wz_holonomy"]);
    assert_eq!(a["gamma_ps"], d["gamma_ps"]);
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("e.json");
    fs::write(&cfg, r#"{"system":"oscillator","points":[[1,0,1]]}"#).unwrap();
    let o = bin()
        .arg("curvature")
        .env("WIGNERPHASE_CONFIG", &cfg)
        .env("WIGNERPHASE_OUT", dir.path().join("e"))
        .env("WIGNERPHASE_SEED", "5")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(dir.path().join("e/resolved_config.json"))["seed"], 5);
}

#[test]
fn hannay_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "hannay", r#"{"system":"oscillator","levels":[0,2]}"#, "h", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let want = PI * (1f64.cosh() - 1.0);
    for r in rows(dir.path().join("h/hannay.csv")) {
        assert!((r[2] - want).abs() < 1e-6);
    }
    for r in rows(dir.path().join("h/semiclassical.csv")) {
        assert!(r[5] < 1e-4, "{r:?}");
    }
}

#[test]
fn verify_table_converges() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "verify", r#"{"system":"oscillator"}"#, "v", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(dir.path().join("v/verify.csv"));
    assert_eq!(r.len(), 3);
    assert!(r.windows(2).all(|w| w[1][3] < w[0][3]));
    assert!(r[2][3] < 1e-2, "{r:?}");
    let s = json(dir.path().join("v/verify_summary.json"));
    assert!((s[0]["table"]["slope"].as_f64().unwrap() + 1.0).abs() < 0.3);
}

#[test]
fn selftest_passes() {
    let o = bin().arg("selftest").output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.lines().count() >= 8);
    assert!(out.lines().all(|l| l.starts_with("PASS ")), "{out}");
}
