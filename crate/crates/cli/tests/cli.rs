use std::path::Path;
use std::process::{Command, Output};

use orbit_core::model::{load_distribution, load_signal, relative_error};

fn orbit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orbit"))
        .current_dir(dir)
        .args(args)
        .env_remove("ORBIT_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = orbit(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn gen_writes_valid_files() {
    let d = tempfile::tempdir().unwrap();
    let line = ok(d.path(), &["gen", "signal", "--L", "5", "--R", "5", "--seed", "1", "--out", "x.json"]);
    assert!(line.starts_with("signal L=5 R=5"));
    let x = load_signal(d.path().join("x.json")).unwrap();
    assert_eq!((x.l_max(), x.shells()), (5, 5));
    assert!(x.is_real_symmetric(1e-14));

    ok(d.path(), &["gen", "dist", "--L", "5", "--in-plane", "--seed", "2", "--out", "rho.json"]);
    let rho = load_distribution(d.path().join("rho.json")).unwrap();
    assert!(rho.is_in_plane(0.0));
}

#[test]
fn invalid_shell_count_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let out = orbit(d.path(), &["gen", "signal", "--L", "3", "--R", "0", "--out", "x.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--R"));
}

#[test]
fn population_moments_recover_the_pair() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["gen", "signal", "--L", "4", "--R", "3", "--seed", "3", "--out", "x.json"]);
    ok(d.path(), &["gen", "dist", "--L", "4", "--seed", "4", "--out", "rho.json"]);
    ok(d.path(), &["moments", "--signal", "x.json", "--dist", "rho.json", "--out", "m.json"]);
    let stdout = ok(
        d.path(),
        &["recover", "--moments", "m.json", "--truth", "x.json", "--truth-dist", "rho.json", "--oracle-base", "--out", "rec"],
    );
    assert!(stdout.contains("signal error"));
    let x = load_signal(d.path().join("x.json")).unwrap();
    let xh = load_signal(d.path().join("rec_signal.json")).unwrap();
    assert!(relative_error(&x, &xh).unwrap().relative_error < 1e-6);
    let rho = load_distribution(d.path().join("rho.json")).unwrap();
    let rh = load_distribution(d.path().join("rec_dist.json")).unwrap();
    assert!(orbit_core::model::distribution_error(&rho, &rh).unwrap().relative_error < 1e-6);
    let report = std::fs::read_to_string(d.path().join("rec_report.csv")).unwrap();
    assert!(report.starts_with("band,kind,rows,cols,cond,residual,error"));
    assert_eq!(report.lines().count(), 1 + 4 + 3);
}

#[test]
fn identity_observation_recovers_exactly() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["gen", "signal", "--L", "4", "--R", "3", "--seed", "5", "--out", "x.json"]);
    ok(
        d.path(),
        &["simulate", "--signal", "x.json", "--sampler", "gaussian-euler", "--tau", "0", "--n", "1", "--sigma", "0", "--out", "obs.json"],
    );
    ok(
        d.path(),
        &["recover", "--obs", "obs.json", "--sigma", "0", "--truth", "x.json", "--oracle-base", "--out", "rec"],
    );
    let x = load_signal(d.path().join("x.json")).unwrap();
    let xh = load_signal(d.path().join("rec_signal.json")).unwrap();
    assert!(relative_error(&x, &xh).unwrap().relative_error < 1e-8);
    let rh = load_distribution(d.path().join("rec_dist.json")).unwrap();
    for l in 0..=4 {
        assert!((rh.band(l) - nalgebra::DMatrix::identity(2 * l + 1, 2 * l + 1)).norm() < 1e-8);
    }
}

#[test]
fn observations_without_sigma_are_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["gen", "signal", "--L", "2", "--R", "3", "--out", "x.json"]);
    ok(d.path(), &["simulate", "--signal", "x.json", "--n", "10", "--snr", "1", "--out", "obs.json"]);
    for args in [
        &["recover", "--obs", "obs.json", "--out", "rec"][..],
        &["moments", "--obs", "obs.json", "--out", "m.json"][..],
    ] {
        let out = orbit(d.path(), args);
        assert_eq!(code(&out), 2, "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("--sigma"));
    }
}

#[test]
fn missing_and_malformed_inputs_exit_3() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&orbit(d.path(), &["recover", "--moments", "absent.json", "--out", "r"])), 3);
    std::fs::write(d.path().join("bad.json"), "{\"format_version\": 1, \"kind\": \"signal\"").unwrap();
    assert_eq!(code(&orbit(d.path(), &["moments", "--signal", "bad.json", "--dist", "bad.json", "--out", "m"])), 3);
    std::fs::write(d.path().join("bad.toml"), "kind = \"n-sweep\"\nn_grid = [\n").unwrap();
    assert_eq!(code(&orbit(d.path(), &["experiment", "bad.toml"])), 3);
}

#[test]
fn strict_mode_turns_numerical_failure_into_exit_4() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["gen", "signal", "--L", "4", "--R", "3", "--seed", "6", "--out", "x.json"]);
    ok(d.path(), &["gen", "dist", "--L", "4", "--in-plane", "--seed", "7", "--out", "rho.json"]);
    ok(d.path(), &["moments", "--signal", "x.json", "--dist", "rho.json", "--out", "m.json"]);
    let base = ["recover", "--moments", "m.json", "--in-plane", "--truth", "x.json", "--oracle-base", "--out", "rec"];
    let lenient = orbit(d.path(), &base);
    assert_eq!(code(&lenient), 0);
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("underdetermined"));
    let mut strict = base.to_vec();
    strict.push("--strict");
    assert_eq!(code(&orbit(d.path(), &strict)), 4);
}

#[test]
fn uniform_distribution_is_flagged_not_fatal() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["gen", "signal", "--L", "3", "--R", "3", "--seed", "8", "--out", "x.json"]);
    ok(d.path(), &["gen", "dist", "--L", "3", "--sampler", "uniform", "--out", "u.json"]);
    ok(d.path(), &["moments", "--signal", "x.json", "--dist", "u.json", "--out", "m.json"]);
    let base = ["recover", "--moments", "m.json", "--truth", "x.json", "--oracle-base", "--out", "rec"];
    let out = ok(d.path(), &base);
    assert!(out.contains("failed: band"));
    let report = std::fs::read_to_string(d.path().join("rec_report.csv")).unwrap();
    assert!(report.contains("zero-matrix") || report.contains("unstable"));
    let mut strict = base.to_vec();
    strict.push("--strict");
    assert_eq!(code(&orbit(d.path(), &strict)), 4);
}

const SWEEP: &str = "kind = \"snr-sweep\"\nL = 3\nR = 3\nn = 400\nseeds = 2\nsnr_grid = [2.0, 0.5]\n";

#[test]
fn experiment_outputs_are_reproducible() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("sweep.toml"), SWEEP).unwrap();
    let run = |prefix: &str, workers: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_orbit"))
            .current_dir(d.path())
            .args(["experiment", "sweep.toml", "--out", prefix])
            .env("ORBIT_WORKERS", workers)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run("a", "1");
    run("b", "3");
    for suffix in [".csv", "_runs.csv", "_stages.csv"] {
        let a = std::fs::read(d.path().join(format!("a{suffix}"))).unwrap();
        let b = std::fs::read(d.path().join(format!("b{suffix}"))).unwrap();
        assert_eq!(a, b, "{suffix}");
    }
    let summary = std::fs::read_to_string(d.path().join("a.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(json["table_version"], 1);
    assert_eq!(json["runs"].as_array().unwrap().len(), 4);
}

#[test]
fn experiment_flags_override_the_config() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("sweep.toml"), SWEEP).unwrap();
    let out = ok(d.path(), &["experiment", "sweep.toml", "--seeds", "1", "--R", "4", "--out", "o"]);
    assert!(out.contains("R=4"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("o.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["seeds"], 1);
    assert_eq!(json["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn bad_worker_count_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("sweep.toml"), SWEEP).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_orbit"))
        .current_dir(d.path())
        .args(["experiment", "sweep.toml"])
        .env("ORBIT_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_config_values_are_usage_errors() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("s.toml"), "kind = \"n-sweep\"\nn_grid = []\n").unwrap();
    let out = orbit(d.path(), &["experiment", "s.toml"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_grid"));
}
