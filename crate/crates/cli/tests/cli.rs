use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bicwg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bicwg"))
        .current_dir(dir)
        .env_remove("BICWG_OUTPUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path, command: &str) -> Value {
    let text = fs::read_to_string(dir.join(format!("{command}_manifest.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Data rows of a CSV, split on commas, after the `#` lines and the header.
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let head = lines.next().unwrap().split(',').map(String::from).collect();
    let body = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (head, body)
}

fn col(body: &[Vec<String>], i: usize) -> Vec<f64> {
    body.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn transmission_sweep_in_ev() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bicwg(
        tmp.path(),
        &["transmission", "--d", "5.25,5.5,5.60,5.70,5.90", "--emin", "0.2", "--emax", "0.3", "--points", "41", "--out", "o"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("o");
    let m = manifest(&dir, "transmission");
    assert_eq!(m["status"], "ok");
    let files = m["outputs"].as_array().unwrap();
    assert_eq!(files.len(), 6);
    for f in files {
        assert!(f["bytes"].as_u64().unwrap() > 0);
        assert!(tmp.path().join(f["path"].as_str().unwrap()).exists());
    }
    for d in ["5.25", "5.5", "5.6", "5.7", "5.9"] {
        let path = dir.join(format!("transmission_d{d}.csv"));
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_hash="));
        let (head, body) = rows(&path);
        assert_eq!(head, ["E_internal", "E_eV", "T_re", "T_im", "T_abs2"]);
        assert_eq!(body.len(), 41);
        let ev = col(&body, 1);
        assert!((ev[0] - 0.2).abs() < 1e-12 && (ev[40] - 0.3).abs() < 1e-12);
        assert!(col(&body, 4).iter().all(|t| (-1e-12..=1.0 + 1e-9).contains(t)));
    }
}

#[test]
fn plain_lead_transmits_fully() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bicwg(tmp.path(), &["transmission", "--cavities", "0", "--points", "9", "--out", "o"]);
    assert!(out.status.success());
    let (_, body) = rows(&tmp.path().join("o/transmission_uniform.csv"));
    assert!(col(&body, 4).iter().all(|t| (t - 1.0).abs() < 1e-12));
}

#[test]
fn outputs_do_not_depend_on_threads_or_location() {
    let tmp = tempfile::tempdir().unwrap();
    for (dir, threads) in [("a", "1"), ("b", "2")] {
        let out = bicwg(
            tmp.path(),
            &["transmission", "--d", "5.6", "--points", "31", "--threads", threads, "--out", dir],
        );
        assert!(out.status.success());
    }
    let a = fs::read(tmp.path().join("a/transmission_d5.6.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/transmission_d5.6.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("run.toml"),
        "output_dir = \"from_config\"\n[geometry]\ncavity_count = 1\n[task]\nunits = \"internal\"\n[task.transmission]\nemin = 20.0\nemax = 30.0\npoints = 7\n",
    )
    .unwrap();
    let out = bicwg(tmp.path(), &["transmission", "--config", "run.toml", "--points", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("from_config");
    let (_, body) = rows(&dir.join("transmission_single.csv"));
    assert_eq!(body.len(), 5);
    assert_eq!(col(&body, 0)[0], 20.0);
    // the snapshot reproduces the run
    let snapshot = fs::read_to_string(dir.join("transmission_config.toml")).unwrap();
    assert!(snapshot.contains("points = 5"));
}

#[test]
fn environment_sets_default_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["transmission", "--cavities", "0", "--points", "3"];
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_bicwg"))
            .current_dir(tmp.path())
            .env("BICWG_OUTPUT_DIR", "env_dir")
            .args(&args)
            .output()
            .unwrap()
    };
    assert!(run(&[]).status.success());
    assert!(tmp.path().join("env_dir/transmission_uniform.csv").exists());
    assert!(run(&["--out", "flag_dir"]).status.success());
    assert!(tmp.path().join("flag_dir/transmission_uniform.csv").exists());
}

#[test]
fn config_errors_exit_2_with_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[geometry]\nwidth = 3.0\n").unwrap();
    let out = bicwg(tmp.path(), &["transmission", "--config", "bad.toml", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let m = manifest(&tmp.path().join("o"), "transmission");
    assert_eq!(m["status"], "failed");
    assert!(m["error"].as_str().unwrap().contains("width"));

    let out = bicwg(tmp.path(), &["transmission", "--n-modes", "1", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let out = bicwg(tmp.path(), &["survival", "--cavities", "2", "--state", "single", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let out = bicwg(tmp.path(), &["transmission", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_bound_state_exits_1_with_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bicwg(tmp.path(), &["bic", "--dmin", "5.7", "--dmax", "5.8", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(&tmp.path().join("o"), "bic");
    assert_eq!(m["exit_code"], 1);
    assert!(m["error"].as_str().unwrap().contains("no bound state"));
}

#[test]
fn bic_table_for_first_period() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bicwg(tmp.path(), &["bic", "--dmin", "5.2", "--dmax", "6.5", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, body) = rows(&tmp.path().join("o/bic.csv"));
    assert_eq!(body.len(), 2);
    assert!((col(&body, 0)[0] - 5.60).abs() < 0.05);
    assert_eq!(body[0][3], "symmetric");
    assert!((col(&body, 0)[1] - 6.26).abs() < 0.05);
    assert_eq!(body[1][3], "antisymmetric");
}

#[test]
fn poletrack_labels_and_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bicwg(tmp.path(), &["poletrack", "--dmin", "5.25", "--dmax", "5.90", "--step", "0.01", "--out", "o"]);
    assert!(out.status.success());
    let traj: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("o/poletrack.json")).unwrap()).unwrap();
    let traj = traj.as_array().unwrap();
    assert_eq!(traj.len(), 2);
    let (_, body) = rows(&tmp.path().join("o/poletrack.csv"));
    for t in traj {
        let id = t["id"].as_u64().unwrap().to_string();
        let labels: Vec<&str> = body.iter().filter(|r| r[6] == id).map(|r| r[5].as_str()).collect();
        assert_eq!(labels.len(), 66);
        assert!(labels.iter().all(|&l| l == t["symmetry"]));
    }

    let out = bicwg(tmp.path(), &["poletrack", "--dmin", "5.25", "--dmax", "5.25", "--out", "s"]);
    assert!(out.status.success());
    let traj: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("s/poletrack.json")).unwrap()).unwrap();
    assert!(traj.as_array().unwrap().iter().all(|t| t["d"].as_array().unwrap().len() == 1));
}

#[test]
fn polemap_and_effective_calibration() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bicwg(tmp.path(), &["polemap", "--cavities", "1", "--re-points", "5", "--im-points", "4", "--out", "o"]);
    assert!(out.status.success());
    let (_, grid) = rows(&tmp.path().join("o/polemap_single.csv"));
    assert_eq!(grid.len(), 20);
    let (_, poles) = rows(&tmp.path().join("o/poles_single.csv"));
    assert_eq!(poles.len(), 1);
    assert!((col(&poles, 3)[0] - 0.2444).abs() < 0.01);

    let out = bicwg(
        tmp.path(),
        &["effective", "--calibrate-from", "o/single_cavity_pole.json", "--predict-bic", "3..6", "--out", "e"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (head, body) = rows(&tmp.path().join("e/effective_bic.csv"));
    assert_eq!(head, ["level", "n", "d", "E_internal", "E_eV"]);
    let find = |level: &str, n: &str| {
        body.iter()
            .find(|r| r[0] == level && r[1] == n)
            .map(|r| r[2].parse::<f64>().unwrap())
            .unwrap()
    };
    assert!((find("plus", "4") - 6.0).abs() < 0.05);
    assert!((find("minus", "5") - 6.67).abs() < 0.05);
    let (head, body) = rows(&tmp.path().join("e/effective_poles.csv"));
    assert_eq!(head.last().unwrap(), "source");
    assert!(body.iter().all(|r| r[7] == "effective"));
}

#[test]
fn zero_coupling_pins_effective_pole() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bicwg(tmp.path(), &["effective", "--v0", "0", "--d", "6.3", "--out", "o"]);
    assert!(out.status.success());
    let (_, body) = rows(&tmp.path().join("o/effective_poles.csv"));
    let e_c0 = 3.25 * std::f64::consts::PI.powi(2);
    for r in &body {
        assert!((r[1].parse::<f64>().unwrap() - e_c0).abs() < 1e-12);
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn empty_region_has_no_poles() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bicwg(
        tmp.path(),
        &[
            "polemap", "--units", "internal", "--emin", "15", "--emax", "17", "--im-min", "-0.5",
            "--re-points", "3", "--im-points", "3", "--out", "o",
        ],
    );
    assert!(out.status.success());
    let (_, body) = rows(&tmp.path().join("o/poles_d5.6.csv"));
    assert!(body.is_empty());
}

#[test]
fn single_cavity_survival_starts_at_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bicwg(tmp.path(), &["survival", "--cavities", "1", "--t-max", "5", "--samples", "6", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (head, body) = rows(&tmp.path().join("o/survival_single.csv"));
    assert_eq!(head, ["t_internal", "P"]);
    let p = col(&body, 1);
    assert!((p[0] - 1.0).abs() < 1e-9);
    assert!(p[5] < p[0]);
    let w: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("o/weights_single.json")).unwrap()).unwrap();
    assert!(w["deficit"].as_f64().unwrap().abs() < 1e-3);
}
