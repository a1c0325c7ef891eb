use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn neot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neot")).args(args).output().expect("binary runs")
}

fn json_out(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn estimate_on_single_atoms_is_half_squared_distance() {
    let dir = tempfile::tempdir().unwrap();
    let x = write(dir.path(), "x.csv", "0.5,1.0\n");
    let y = write(dir.path(), "y.csv", "# target\n-0.5,3.0\n");
    let v = json_out(&neot(&["estimate", "--x", &x, "--y", &y, "--eps", "0.5", "--k", "4"]));
    assert!((v["estimate"].as_f64().unwrap() - 2.5).abs() < 1e-12);
    assert_eq!(v["epochs"], 20);
    assert_eq!(v["objective_curve"].as_array().unwrap().len(), 20);
    assert_eq!(v["metadata"]["estimate_kind"], "end_of_training");
}

#[test]
fn estimate_rejects_nonpositive_eps_as_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let x = write(dir.path(), "x.csv", "0.0\n");
    let out = neot(&["estimate", "--x", &x, "--y", &x, "--eps", "0", "--k", "4"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eps must be positive"));
}

#[test]
fn io_and_format_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = neot(&["sinkhorn", "--x", missing.to_str().unwrap(), "--y", missing.to_str().unwrap(), "--eps", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let bad = write(dir.path(), "bad.csv", "1,2\n3\n");
    let out = neot(&["sinkhorn", "--x", &bad, "--y", &bad, "--eps", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let one = write(dir.path(), "one.csv", "1\n");
    let two = write(dir.path(), "two.csv", "1,2\n");
    let out = neot(&["sinkhorn", "--x", &one, "--y", &two, "--eps", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flags_exit_with_64() {
    assert_eq!(neot(&["sinkhorn", "--bogus"]).status.code(), Some(64));
    assert_eq!(neot(&[]).status.code(), Some(64));
    assert_eq!(neot(&["plan"]).status.code(), Some(64));
    assert_eq!(neot(&["--help"]).status.code(), Some(0));
}

#[test]
fn sinkhorn_on_single_atoms() {
    let dir = tempfile::tempdir().unwrap();
    let x = write(dir.path(), "x.csv", "1.0,2.0\n");
    let y = write(dir.path(), "y.csv", "0.0,0.0\n");
    let v = json_out(&neot(&["sinkhorn", "--x", &x, "--y", &y, "--eps", "0.3"]));
    assert!((v["cost"].as_f64().unwrap() - 2.5).abs() < 1e-12);
    assert_eq!(v["residual"].as_f64().unwrap(), 0.0);
    assert!(v["iterations"].as_u64().unwrap() <= 2);
    assert!(v["dual_gap"].as_f64().unwrap() < 1e-12);
}

#[test]
fn sinkhorn_two_atoms_match_closed_form_and_save_plan() {
    let dir = tempfile::tempdir().unwrap();
    let x = write(dir.path(), "x.csv", "0\n1\n");
    let plan_path = dir.path().join("plan.csv");
    let v = json_out(&neot(&[
        "sinkhorn", "--x", &x, "--y", &x, "--eps", "0.5", "--save-plan", plan_path.to_str().unwrap(),
    ]));
    // optimal coupling weight t = e / (2(1 + e)) on the diagonal
    let e = std::f64::consts::E;
    let t = e / (2.0 * (1.0 + e));
    let expected = 2.0 * (0.5 - t) * 0.5
        + 0.5 * (2.0 * t * (4.0 * t).ln() + 2.0 * (0.5 - t) * (4.0 * (0.5 - t)).ln());
    assert!((v["cost"].as_f64().unwrap() - expected).abs() < 1e-6);
    let plan = fs::read_to_string(plan_path).unwrap();
    let first: f64 = plan.lines().next().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((first - t).abs() < 1e-6);
}

#[test]
fn sinkhorn_iteration_cap_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let x = write(dir.path(), "x.csv", "-1\n-0.3\n0.2\n0.9\n");
    let y = write(dir.path(), "y.csv", "-0.8\n0.0\n0.7\n");
    let out = neot(&["sinkhorn", "--x", &x, "--y", &y, "--eps", "0.05", "--max-iter", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("residual"));
}

#[test]
fn binary_and_csv_inputs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let rows: [[f64; 2]; 3] = [[0.25, -1.5], [1.0, 0.125], [-0.75, 0.5]];
    let mut bin = b"EOTD\x01".to_vec();
    bin.extend_from_slice(&3u32.to_le_bytes());
    bin.extend_from_slice(&2u32.to_le_bytes());
    let mut csv = String::new();
    for r in rows {
        for v in r {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        csv.push_str(&format!("{},{}\n", r[0], r[1]));
    }
    fs::write(dir.path().join("x.eotd"), &bin).unwrap();
    let xb = dir.path().join("x.eotd");
    let xc = write(dir.path(), "x.csv", &csv);
    let a = neot(&["sinkhorn", "--x", xb.to_str().unwrap(), "--y", &xc, "--eps", "0.5"]);
    let b = neot(&["sinkhorn", "--x", &xc, "--y", xb.to_str().unwrap(), "--eps", "0.5"]);
    assert_eq!(json_out(&a)["cost"], json_out(&b)["cost"]);
}

#[test]
fn estimate_is_byte_deterministic_and_saves_the_network() {
    let dir = tempfile::tempdir().unwrap();
    let x = write(dir.path(), "x.csv", "0.1\n-0.4\n0.7\n0.3\n-0.9\n0.0\n0.5\n-0.2\n");
    let y = write(dir.path(), "y.csv", "0.6\n-0.1\n0.2\n-0.7\n0.9\n0.4\n-0.5\n0.05\n");
    let net = dir.path().join("net.json");
    let args = [
        "estimate", "--x", &x, "--y", &y, "--eps", "0.5", "--k", "8", "--batch", "4", "--seed", "11",
        "--no-timing", "--save-net", net.to_str().unwrap(),
    ];
    let (a, b) = (neot(&args), neot(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let saved: Value = serde_json::from_slice(&fs::read(&net).unwrap()).unwrap();
    assert_eq!(saved["k"], 8);
    assert_eq!(saved["W"].as_array().unwrap().len(), 8);
    let other = neot(&[
        "estimate", "--x", &x, "--y", &y, "--eps", "0.5", "--k", "8", "--batch", "4", "--seed", "12", "--no-timing",
    ]);
    assert_ne!(a.stdout, other.stdout);
}

fn sweep_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "sweep", "--out-dir", out, "--no-timing", "--dims", "1", "--k-per-dim", "4", "--ns", "8", "--runs", "1",
        "--truth-n", "300", "--epochs", "2",
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn smoke_sweep_writes_one_row_and_caches_the_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let v = json_out(&neot(&sweep_args(out, &[])));
    assert_eq!(v["sinkhorn_solves"], 1);
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with('#'));
    assert_eq!(lines[1], "dim,n,k,eps,seed,batch,estimate,truth,relative_error,wall_time,error");
    assert!(lines[2].starts_with("1,8,4,0.5,"));
    assert!(fs::read_to_string(dir.path().join("sweep.svg")).unwrap().contains("<svg"));

    let v = json_out(&neot(&sweep_args(out, &[])));
    assert_eq!(v["sinkhorn_solves"], 0);
    let summary: Value = serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["sinkhorn_solves"], 0);
    assert_eq!(summary["protocol"]["pilot_seeds"], 1);
    assert_eq!(fs::read_to_string(dir.path().join("sweep.csv")).unwrap(), csv);
}

#[test]
fn sweep_outputs_do_not_depend_on_thread_count() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = |out: &Path, threads: &str| {
        neot(&[
            "sweep", "--out-dir", out.to_str().unwrap(), "--no-timing", "--distribution", "gaussian", "--dims", "2",
            "--k-per-dim", "4", "--ns", "8,16", "--runs", "3", "--truth-n", "300", "--epochs", "2", "--seed", "5",
            "--threads", threads,
        ])
    };
    let (ra, rb) = (run(a.path(), "1"), run(b.path(), "3"));
    assert!(ra.status.success() && rb.status.success());
    for f in ["sweep.csv", "sweep.svg"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let summary = |d: &Path| {
        let mut v: Value = serde_json::from_slice(&fs::read(d.join("summary.json")).unwrap()).unwrap();
        v["config"].as_object_mut().unwrap().remove("out_dir");
        v
    };
    assert_eq!(summary(a.path()), summary(b.path()));
    let csv = fs::read_to_string(a.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 6);
}

#[test]
fn sweep_config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"dims":[2],"k_per_dim":[3],"ns":[8],"runs":4,"truth_n":100,"epochs":1,"eps":0.7}"#,
    );
    let out = dir.path().join("out");
    let v = json_out(&neot(&["sweep", "--config", &cfg, "--runs", "2", "--out-dir", out.to_str().unwrap()]));
    assert_eq!(v["slopes"][0]["dim"], 2);
    let summary: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["runs"], 2);
    assert_eq!(summary["config"]["eps"], 0.7);
    let bad = write(dir.path(), "bad.json", r#"{"eps":0}"#);
    let out = neot(&["sweep", "--config", &bad]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eps must be positive"));
}

#[test]
fn sweep_with_failing_reference_exits_nonzero_but_writes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"truth_max_iter":1,"eps":0.05}"#);
    let mut args = sweep_args(dir.path().to_str().unwrap(), &[]);
    args.extend(["--config", &cfg]);
    let out = neot(&args);
    assert_eq!(out.status.code(), Some(1));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.lines().nth(2).unwrap().contains("did not converge"));
}

#[test]
fn plan_with_zero_samples_and_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let v = json_out(&neot(&[
        "plan", "--paper-example", "--n", "64", "--k", "4", "--samples", "0", "--epochs", "1", "--out-dir", out,
    ]));
    assert!(v["empirical_cov"].is_null());
    assert!(v["empirical_mean"].is_null());
    let cross = v["reference_cov"][0][1].as_f64().unwrap();
    assert!((cross - 0.309_016_994).abs() < 1e-9);
    assert_eq!(v["reference_mean"][1], 0.25);
    let csv = fs::read_to_string(dir.path().join("plan_pairs.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1);
    assert!(dir.path().join("plan_summary.json").exists());
}

#[test]
fn plan_is_byte_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = |d: &Path| {
        neot(&[
            "plan", "--paper-example", "--n", "128", "--k", "4", "--samples", "500", "--epochs", "2", "--seed", "9",
            "--no-timing", "--out-dir", d.to_str().unwrap(),
        ])
    };
    let (ra, rb) = (run(a.path()), run(b.path()));
    assert!(ra.status.success());
    assert_eq!(ra.stdout, rb.stdout);
    assert_eq!(
        fs::read(a.path().join("plan_pairs.csv")).unwrap(),
        fs::read(b.path().join("plan_pairs.csv")).unwrap()
    );
    let v: Value = serde_json::from_slice(&ra.stdout).unwrap();
    assert_eq!(v["empirical_cov"].as_array().unwrap().len(), 2);
}
