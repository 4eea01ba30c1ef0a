use std::path::Path;
use std::process::{Command, Output};

fn dynlab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynlab"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("DYNLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynlab(
        dir.path(),
        &["simulate", "--example", "1", "--iters", "1000", "--start", "0.3,0.0,0.0"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("orbit.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("step,x,y,z"));
    assert_eq!(csv.lines().count(), 1001);
    let v = json(&dir.path().join("simulate.json"));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["report"]["rows"], 1000);
    assert_eq!(v["params"]["lambda_c"], 0.4);
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--iters", "500", "--seed", "9", "--start", "0.7,-0.2,0.1"];
    assert!(dynlab(a.path(), &args).status.success());
    let mut with_threads = args.to_vec();
    with_threads.extend(["--threads", "1"]);
    assert!(dynlab(b.path(), &with_threads).status.success());
    for f in ["orbit.csv", "simulate.json"] {
        let (x, y) = (
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
        );
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn deformation_flags_route_to_the_family() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynlab(dir.path(), &["simulate", "--iters", "10", "--mu", "1.0", "--n-power", "6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("simulate.json"));
    assert_eq!(v["report"]["deformed"], true);
    assert_eq!(v["params"]["n_power"], 6);
}

#[test]
fn flags_override_the_params_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.txt");
    std::fs::write(&file, "# test\nexample = 1\nlambda_c = 0.45\nalpha = 0.4\n").unwrap();
    let out = dynlab(
        dir.path(),
        &["simulate", "--iters", "3", "--params", file.to_str().unwrap(), "--alpha", "0.3"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("simulate.json"));
    assert_eq!(v["params"]["lambda_c"], 0.45);
    assert_eq!(v["params"]["alpha"], 0.3);
    assert_eq!(v["params"]["lambda_ss"], 0.1);
}

#[test]
fn invalid_configuration_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynlab(dir.path(), &["simulate", "--lambda-c", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda_c < 1"));
    let out = dynlab(dir.path(), &["basins", "--grid", "3x3"]);
    assert_eq!(out.status.code(), Some(1));
    let out = dynlab(dir.path(), &["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn transversality_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynlab(
        dir.path(),
        &["transversality", "--epsilon", "0.1,0.05,0.02", "--pairs", "2000", "--seed", "7"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("transversality.json"));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["pass"], true);
    assert_eq!(v["config"]["seed"], 7);
    assert_eq!(v["report"]["entries"].as_array().unwrap().len(), 3);
    assert!(dir.path().join("worst_pairs.csv").exists());
}

#[test]
fn unstable_field_writes_every_cylinder() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynlab(dir.path(), &["unstable-field", "--depth", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("slope_field.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("cylinder_word,alpha_uu,residual"));
    assert_eq!(csv.lines().count(), 1 + 81);
}

#[test]
fn inequality_report_has_sigma_hat() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynlab(
        dir.path(),
        &["inequality", "--n", "1:4", "--r", "0.0001", "--atoms", "100000", "--no-floor"],
    );
    let v = json(&dir.path().join("inequality.json"));
    assert!(v["report"]["sigma_hat"].is_number());
    assert_eq!(v["report"]["rows"].as_array().unwrap().len(), 4);
    let pass = v["pass"].as_bool().unwrap();
    assert_eq!(out.status.code(), Some(if pass { 0 } else { 2 }));
}

#[test]
fn basins_report_and_audit_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynlab(
        dir.path(),
        &["basins", "--grid", "4x4x2", "--iters", "2000", "--burn-in", "100", "--tol", "0.5"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("basins.json"));
    assert_eq!(v["report"]["k_clusters"], 1);
    assert_eq!(v["report"]["n_points"], 32);
    // an unreachable threshold is an audit failure, not a crash
    let out = dynlab(
        dir.path(),
        &["basins", "--grid", "2x2x1", "--iters", "2000", "--burn-in", "100", "--expect-k", "5"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn norm_scan_separates_curve_from_proxy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynlab(
        dir.path(),
        &["norm-scan", "--single-curve", "--atoms", "100000", "--iters", "1", "--r", "0.05,0.03,0.01,0.005"],
    );
    assert_eq!(out.status.code(), Some(2));
    let v = json(&dir.path().join("norm_scan.json"));
    assert_eq!(v["report"]["bounded"], false);
}
