use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_conekahler"));
    c.env_remove("CONEKAHLER_THREADS");
    c
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("conekahler-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

#[test]
fn missing_metric_file_is_invalid_config() {
    let out = bin().args(["geometry", "--metric"]).arg(data("no_such.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let r = report(&out);
    assert_eq!(r["status"], "invalid_config");
    assert!(r["result"].is_null());
}

#[test]
fn usage_errors_exit_with_invalid_config() {
    let out = bin().args(["solve", "--op", "cubic"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let out = bin().args(["invariants", "--field", "z^2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn unknown_config_key_is_rejected() {
    let cfg = scratch("typo.toml");
    std::fs::write(&cfg, "[flow]\ntoll = 1e-3\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).arg("stability").output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn laplace_with_zero_source_returns_zero() {
    let out = bin().args(["solve", "--op", "laplace", "--metric"]).arg(data("football.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["status"], "ok");
    assert_eq!(r["result"]["kernel_dimension"], 0);
    assert_eq!(r["result"]["solution_sup"].as_f64(), Some(0.0));
}

#[test]
fn solution_sidecar_has_header_and_one_row_per_node() {
    let json = scratch("laplace.json");
    let out = bin()
        .args(["solve", "--op", "laplace", "--metric"])
        .arg(data("football.toml"))
        .arg("--out")
        .arg(&json)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(r["sidecars"][0], "laplace.solution.csv");
    let csv = std::fs::read_to_string(json.with_file_name("laplace.solution.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[..7].iter().all(|l| l.starts_with("# ")));
    assert_eq!(lines[7], "index,re_z,im_z,value");
    assert_eq!(lines.len() - 8, 24 * 32);
}

#[test]
fn stability_verdicts_in_exact_arithmetic() {
    let out = bin().args(["stability", "--bundle"]).arg(data("three_point.toml")).output().unwrap();
    let r = report(&out);
    assert_eq!(r["result"]["stable"], true);
    assert_eq!(r["result"]["margin"], "1/4");

    let out = bin().args(["stability", "--bundle"]).arg(data("one_point.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["result"]["stable"], false);
    assert!(!r["result"]["witness"].is_null());
}

#[test]
fn unstable_flow_reports_nonconvergence_with_success_status() {
    let cfg = scratch("short_flow.toml");
    std::fs::write(&cfg, "[flow]\nnt = 8\nntheta = 8\nmax_steps = 40\n").unwrap();
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["flow", "--bundle"])
        .arg(data("one_point.toml"))
        .arg("--metric")
        .arg(data("football.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["status"], "ok");
    assert_eq!(r["result"]["converged"], false);
    assert_eq!(r["result"]["bundle_stable"], false);
}

#[test]
fn report_is_byte_stable_apart_from_timestamp() {
    let run = || {
        let out = bin()
            .args(["--seed", "11", "--threads", "2", "geometry", "--metric"])
            .arg(data("football.toml"))
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        let text = String::from_utf8(out.stdout).unwrap();
        text.lines().filter(|l| !l.trim_start().starts_with("\"timestamp\"")).collect::<Vec<_>>().join("\n")
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(a.contains("\"config_hash\""));
}

#[test]
fn config_hash_tracks_inputs_not_paths() {
    let copy = scratch("football_copy.toml");
    std::fs::copy(data("football.toml"), &copy).unwrap();
    let hash = |p: &Path| {
        let out = bin().args(["invariants", "--cmd", "avg", "--metric"]).arg(p).output().unwrap();
        report(&out)["config_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(hash(&data("football.toml")), hash(&copy));
    assert_ne!(hash(&data("football.toml")), hash(&data("teardrop.toml")));
}

#[test]
fn thread_flag_overrides_environment() {
    let threads = |env: Option<&str>, flag: Option<&str>| {
        let mut c = bin();
        if let Some(e) = env {
            c.env("CONEKAHLER_THREADS", e);
        }
        if let Some(f) = flag {
            c.args(["--threads", f]);
        }
        let out = c.args(["stability", "--bundle"]).arg(data("three_point.toml")).output().unwrap();
        (out.status.code(), report(&out)["threads"].as_u64())
    };
    assert_eq!(threads(Some("3"), None), (Some(0), Some(3)));
    assert_eq!(threads(Some("3"), Some("2")), (Some(0), Some(2)));
    assert_eq!(threads(Some("many"), None).0, Some(3));
    assert_eq!(threads(None, Some("0")).0, Some(3));
}

#[test]
fn futaki_of_football_vanishes() {
    let out = bin()
        .args(["invariants", "--cmd", "futaki", "--field", "z_dz", "--metric"])
        .arg(data("football.toml"))
        .output()
        .unwrap();
    let r = report(&out);
    assert!(r["result"]["futaki"]["log_futaki"].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn noncoercive_bilaplacian_is_a_numerical_failure() {
    let out = bin().args(["solve", "--op", "bilap", "--k", "1.0", "--metric"]).arg(data("football.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["status"], "numerical_failure");
    assert!(r["error"].as_str().unwrap().contains("coercivity"));
}
