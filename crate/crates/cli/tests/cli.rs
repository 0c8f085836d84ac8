use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BASE: &str = r#"
seed = 7

[particle]
mass = 1.0

[grid]
n = 8
h = 0.6

[channel]
k = [0.0, 0.0, 1.118033988749895]
n = 3

[output]
dir = "out"
fields = true
"#;

const GAUSSIAN: &str = "\n[potential]\nscalar = { family = \"gaussian\", g = 0.02, a = 1.0 }\n";
const ZERO: &str = "\n[potential]\n";

fn run(dir: &Path, cmd: &str, config: &str) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_dirac-rls")).args([cmd, "--config", path.to_str().unwrap(), "--threads", "1"]).output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn manifest_lists_every_file(out: &Path) {
    let m = json(&out.join("manifest.json"));
    let listed: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|e| e["path"].as_str().unwrap()).collect();
    for entry in fs::read_dir(out).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name != "manifest.json" {
            assert!(listed.contains(&name.as_str()), "{name} missing from manifest");
        }
    }
    assert_eq!(m["conventions"]["fourier_forward"], "exp(-i q.r)");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn solve_without_potential_is_trivial() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "solve", &format!("{BASE}{ZERO}"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    let rep = json(&o.join("solve_report.json"));
    assert_eq!(rep["residual"].as_f64().unwrap(), 0.0);
    assert!(rep.get("wall_time_s").is_none());
    let psi = fs::read(o.join("psi.bin")).unwrap();
    assert_eq!(&psi[..8], b"DRLSFLD1");
    assert!(psi[48..].iter().all(|&b| b == 0));
    manifest_lists_every_file(&o);
}

#[test]
fn scan_without_potential_is_identically_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}{ZERO}\n[scan]\nlambda_min = 1.1\nlambda_max = 2.5\ncount = 4\n");
    let out = run(dir.path(), "scan-exceptional", &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/scan.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for r in rows {
        let s: f64 = r.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(s, 1.0);
    }
}

#[test]
fn amplitude_reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}{GAUSSIAN}\n[amplitude]\nfar_field_radii = [20.0, 40.0]\n\n[certificate]\ntesters = 3\n");
    let mut digests = Vec::new();
    for _ in 0..2 {
        let out = run(dir.path(), "amplitude", &cfg);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let o = dir.path().join("out");
        manifest_lists_every_file(&o);
        let files = ["amplitude.json", "amplitude.csv", "solve_report.json", "far_field.json", "certificate.json"];
        digests.push(files.map(|f| fs::read(o.join(f)).unwrap()));
    }
    assert_eq!(digests[0], digests[1]);
    let amp = json(&dir.path().join("out/amplitude.json"));
    assert_eq!(amp["directions"].as_array().unwrap().len(), 20);
}

#[test]
fn missing_mass_exits_with_validation_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "solve", &format!("{}{GAUSSIAN}", BASE.replace("mass = 1.0", "")));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mass"));
}

#[test]
fn unknown_key_exits_with_validation_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "solve", &format!("{}{GAUSSIAN}", BASE.replace("mass = 1.0", "massq = 1.0")));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("massq"));
}

#[test]
fn missing_section_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "scan-exceptional", &format!("{BASE}{GAUSSIAN}"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`scan`"));
}

#[test]
fn divergent_born_iteration_exits_with_numerical_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}\n[potential]\nscalar = {{ family = \"gaussian\", g = 40.0, a = 1.0 }}\n\n[solver]\nmethod = \"born\"\nmax_iter = 50\n");
    let out = run(dir.path(), "solve", &cfg);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let m = json(&dir.path().join("out/manifest.json"));
    assert_eq!(m["status"], "error");
    assert!(m["error"].as_str().unwrap().contains("rls_solver"));
}

#[test]
fn kernel_check_reports_oracle_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}\n[kernel_check]\nn = 16\nh = 0.5\nlambda = 1.5\nbranch = \"plus\"\nmin_radius = 1.0\nboundary_margin = 1.0\nregularization = {{ kind = \"truncated\", refine = 2, pad = 2, truncation = 0.6 }}\n");
    let out = run(dir.path(), "kernel-check", &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&dir.path().join("out/kernel_check.json"));
    let dev = rep["max_relative_deviation"].as_f64().unwrap();
    assert!(rep["points"].as_u64().unwrap() > 0);
    assert!(dev.is_finite() && dev < 0.1, "{dev}");
}

#[test]
fn dynamics_without_potential_converges_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{BASE}{ZERO}\n[dynamics]\npacket = {{ p0 = [0.0, 0.0, 1.2], sigma_p = 0.25, n = 3, r0 = [0.0, 0.0, 0.0] }}\ns_time = 2.0\n\n[dynamics.propagation]\ndt = 0.1\nt_max = 2.0\nedge_tol = 1.0\ngrid = {{ n = 16, h = 0.8, origin = [-6.4, -6.4, -6.4] }}\n"
    );
    let out = run(dir.path(), "dynamics", &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let w = json(&dir.path().join("out/wave_operator.json"));
    assert_eq!(w["converged"], true);
    assert_eq!(w["norm_ratio"].as_f64().unwrap(), 1.0);
    let s = json(&dir.path().join("out/s_operator.json"));
    assert_eq!(s["norm_ratio"].as_f64().unwrap(), 1.0);
    assert!(dir.path().join("out/wave_operator.csv").exists());
}

#[test]
fn compare_without_potential_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{BASE}{ZERO}\n[dynamics]\npacket = {{ p0 = [0.0, 0.0, 1.118033988749895], sigma_p = 0.25, n = 3, r0 = [0.0, 0.0, 0.0] }}\n\n[dynamics.propagation]\ndt = 0.1\nedge_tol = 1.0\ngrid = {{ n = 16, h = 0.8, origin = [-6.4, -6.4, -6.4] }}\n\n[compare]\nt = 2.0\n"
    );
    let out = run(dir.path(), "compare", &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("out/compare.json"));
    assert_eq!(r["shape_discrepancy"].as_f64().unwrap(), 0.0);
    assert!(r["dynamic"].as_array().unwrap().iter().all(|x| x.as_f64().unwrap() == 0.0));
}
