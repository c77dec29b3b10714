//! End-to-end command tests through the compiled binary.

use std::process::{Command, Output};

fn tiltwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiltwalk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn ln_cosh(x: f64) -> f64 {
    x.cosh().ln()
}

#[test]
fn tfe_flat_on_alternating_potential() {
    let out = tiltwalk(&["tfe", "--env", "periodic:0,1", "--beta", "1", "--theta", "0", "--method", "implicit"]);
    let v = stdout_json(&out);
    assert_eq!(v["lambda"], 1.0);
    assert_eq!(v["flat"], true);
}

#[test]
fn tfe_constant_env_closed_form() {
    let out = tiltwalk(&["tfe", "--env", "periodic:0.3", "--beta", "1", "--theta", "1"]);
    let v = stdout_json(&out);
    let want = 0.3 + ln_cosh(1.0);
    assert!((v["lambda"].as_f64().unwrap() - want).abs() < 1e-8);
    assert_eq!(v["flat"], false);
}

#[test]
fn tfe_missing_beta_is_usage_error() {
    let out = tiltwalk(&["tfe", "--env", "periodic:0,1", "--theta", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "stderr: {err}");
}

#[test]
fn tfe_bad_env_spec_is_usage_error() {
    let out = tiltwalk(&["tfe", "--env", "nope:1", "--beta", "1", "--theta", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tfe_grid_csv_has_stable_header() {
    let out = tiltwalk(&[
        "tfe", "--env", "periodic:0,1", "--beta", "1", "--theta-grid", "0:1:0.5", "--format", "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "theta,lambda,flat,method,residual");
    assert_eq!(lines.count(), 3);
}

#[test]
fn tfe_deterministic_given_seed() {
    let run = || {
        let out = tiltwalk(&[
            "tfe", "--env", "iid:p=0.5", "--window", "2000", "--seed", "9", "--beta", "1",
            "--theta", "2", "--method", "implicit",
        ]);
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run(), run());
}

#[test]
fn effham_single_regime_on_each_side_of_the_threshold() {
    // The convexity threshold at beta = 1 is sqrt(1 - e^{-2}) = 0.92989...
    // (approximately 0.93); sweeps just under and just over it stay in one
    // regime throughout.
    for (delta, regime) in [("0.929", "weak"), ("0.93", "strong")] {
        let out = tiltwalk(&[
            "effham", "--env", "periodic:0,1", "--beta", "1", "--delta", delta,
            "--theta-grid", "-2:2:0.25", "--format", "csv",
        ]);
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "theta,K_delta,H_bar,regime");
        for line in lines {
            assert!(line.ends_with(&format!(",{regime}")), "delta={delta}, row: {line}");
        }
    }
}

#[test]
fn effham_delta_zero_equals_tfe_sweep() {
    let eff = tiltwalk(&[
        "effham", "--env", "periodic:0,1", "--beta", "1", "--delta", "0",
        "--theta-grid", "0:2:0.5", "--format", "csv",
    ]);
    let tfe = tiltwalk(&[
        "tfe", "--env", "periodic:0,1", "--beta", "1", "--theta-grid", "0:2:0.5", "--format", "csv",
    ]);
    assert!(eff.status.success() && tfe.status.success());
    let eff_rows: Vec<f64> = String::from_utf8_lossy(&eff.stdout)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    let tfe_rows: Vec<f64> = String::from_utf8_lossy(&tfe.stdout)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(eff_rows.len(), tfe_rows.len());
    for (a, b) in eff_rows.iter().zip(tfe_rows.iter()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn effham_full_control_piecewise_linear() {
    let out = tiltwalk(&[
        "effham", "--env", "periodic:0,1", "--beta", "1", "--delta", "1",
        "--theta-grid", "0:2:0.25", "--format", "csv",
    ]);
    assert!(out.status.success());
    for line in String::from_utf8_lossy(&out.stdout).lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let theta: f64 = cols[0].parse().unwrap();
        let h: f64 = cols[2].parse().unwrap();
        let want = if theta < 0.5 { 0.0 } else { 0.5 - theta };
        assert!((h - want).abs() < 1e-12, "theta={theta}: {h} vs {want}");
        assert_eq!(cols[3], "full");
    }
}

#[test]
fn bellman_delta_zero_equals_direct_tfe() {
    let bell = tiltwalk(&[
        "bellman", "--env", "periodic:0,1", "--beta", "1", "--delta", "0", "--theta", "0.7",
        "--n", "256",
    ]);
    let v = stdout_json(&bell);
    let per_n = v["value_per_n"].as_f64().unwrap();
    let tfe = tiltwalk(&[
        "tfe", "--env", "periodic:0,1", "--beta", "1", "--theta", "0.7", "--method", "direct-dp",
        "--n", "256",
    ]);
    let t = stdout_json(&tfe);
    assert!((per_n - t["lambda"].as_f64().unwrap()).abs() < 1e-11);
}

#[test]
fn bellman_full_control_near_closed_form() {
    // Theorem-scale check at desk size: delta = 1, theta = 2 on an iid
    // window; u(n, 0)/n within 0.02 of beta E V - |theta|.
    let out = tiltwalk(&[
        "bellman", "--env", "iid:p=0.5", "--window", "5000", "--seed", "1", "--beta", "1",
        "--delta", "1", "--theta", "2", "--n", "4000",
    ]);
    let v = stdout_json(&out);
    let per_n = v["value_per_n"].as_f64().unwrap();
    let mean_v = 0.5;
    assert!((per_n - (mean_v - 2.0)).abs() < 0.02, "per_n = {per_n}");
}

#[test]
fn simulate_policy_dominates_optimal() {
    for policy in ["march-left", "march-right", "const:q=0.4", "valley:h=0.2,ell=1"] {
        let out = tiltwalk(&[
            "simulate", "--env", "iid:p=0.5", "--window", "500", "--seed", "3", "--beta", "1",
            "--delta", "0.5", "--theta", "0.6", "--n", "64", "--policy", policy,
        ]);
        let v = stdout_json(&out);
        let excess = v["excess"].as_f64().unwrap();
        assert!(excess >= -1e-10, "{policy}: excess = {excess}");
    }
}

#[test]
fn simulate_rejects_inadmissible_policy() {
    let out = tiltwalk(&[
        "simulate", "--env", "periodic:0.5", "--beta", "1", "--delta", "0.2", "--theta", "0",
        "--n", "16", "--policy", "const:q=0.9",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn excursion_quantities() {
    let out = tiltwalk(&["excursion", "--c", "1", "--ell", "20", "--xi", "0.5", "--lambda", "0.5"]);
    let v = stdout_json(&out);
    assert!((v["j"].as_f64().unwrap() - ln_cosh(1.0)).abs() < 1e-9);
    assert!((v["j_ell"].as_f64().unwrap() - ln_cosh(1.0)).abs() < 1e-3);
    assert!((v["rate"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
    let tau1 = v["tau1_transform"].as_f64().unwrap();
    let want = 0.5f64.exp() - (1.0f64.exp() - 1.0).sqrt();
    assert!((tau1 - want).abs() < 1e-9);
    // Confinement exponents agree between routes.
    let cf = v["confinement_closed_form"].as_f64().unwrap();
    let sp = v["confinement_spectral"].as_f64().unwrap();
    assert!((cf - sp).abs() < 1e-10);
}

#[test]
fn excursion_without_flags_is_usage_error() {
    let out = tiltwalk(&["excursion"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_walk_suite_passes() {
    let out = tiltwalk(&["verify", "--suite", "walk"]);
    assert!(
        out.status.success(),
        "stdout: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("[PASS]"));
    assert!(!text.contains("[FAIL]"));
}

#[test]
fn verify_deterministic_across_reruns() {
    let run = || {
        let out = tiltwalk(&["verify", "--suite", "env", "--seed", "7"]);
        (out.status.code(), out.stdout)
    };
    assert_eq!(run(), run());
}

#[test]
fn verify_tampered_tolerance_fails_nonzero() {
    let out = tiltwalk(&["verify", "--suite", "walk", "--tol-scale", "1e-9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL]"));
}

#[test]
fn unknown_suite_is_usage_error() {
    let out = tiltwalk(&["verify", "--suite", "nope"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bellman_dump_table_binary_layout() {
    let dir = std::env::temp_dir().join(format!("tiltwalk-dump-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("slice.bin");
    let out = tiltwalk(&[
        "bellman", "--env", "periodic:0.5", "--beta", "1", "--delta", "0.5", "--theta", "0.4",
        "--n", "6", "--dump-table", path.to_str().unwrap(),
    ]);
    let v = stdout_json(&out);
    let bytes = std::fs::read(&path).unwrap();
    // Header {n, lo, hi} as little-endian u64/i64, then doubles.
    assert_eq!(u64::from_le_bytes(bytes[0..8].try_into().unwrap()), 6);
    let lo = i64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let hi = i64::from_le_bytes(bytes[16..24].try_into().unwrap());
    assert_eq!((lo, hi), (0, 0));
    let value = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    assert!((value - v["value"].as_f64().unwrap()).abs() < 1e-9);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn out_file_writes_identical_content() {
    let dir = std::env::temp_dir().join(format!("tiltwalk-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("sweep.csv");
    let piped = tiltwalk(&[
        "tfe", "--env", "periodic:0,1", "--beta", "1", "--theta-grid", "0:1:0.5", "--format", "csv",
    ]);
    let to_file = tiltwalk(&[
        "tfe", "--env", "periodic:0,1", "--beta", "1", "--theta-grid", "0:1:0.5", "--format", "csv",
        "--out", path.to_str().unwrap(),
    ]);
    assert!(to_file.status.success());
    let on_disk = std::fs::read_to_string(&path).unwrap();
    assert_eq!(String::from_utf8_lossy(&piped.stdout), on_disk);
    std::fs::remove_dir_all(&dir).ok();
}
