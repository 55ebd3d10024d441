use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nodalcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nodalcert"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn without_metadata(mut v: serde_json::Value) -> serde_json::Value {
    v.as_object_mut().unwrap().remove("metadata");
    v
}

#[test]
fn verify_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nodalcert(&[
        "verify",
        "--n",
        "3",
        "--ell",
        "1",
        "--m",
        "1..2",
        "--tasks",
        "frequency,regularity,holes,topology,regularized",
        "--rigorous",
        "--out",
        out,
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let r = report(dir.path());
    assert_eq!(r["overall"], "pass");
    assert_eq!(r["results"].as_array().unwrap().len(), 2);
    let claims = r["results"][1]["claims"].as_array().unwrap();
    let ids: Vec<&str> = claims.iter().map(|c| c["id"].as_str().unwrap()).collect();
    for id in [
        "frequency.n1",
        "regularity.certificate",
        "holes.count",
        "topology.independence",
        "regularized.independence",
    ] {
        assert!(ids.contains(&id), "{id} missing from {ids:?}");
    }
    assert!(r["metadata"]["runtimes"].as_object().unwrap().len() > 5);
}

#[test]
fn same_seed_gives_identical_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let o = nodalcert(&[
            "verify",
            "--m",
            "2",
            "--tasks",
            "holes,topology",
            "--seed",
            "11",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        runs.push(serde_json::to_string_pretty(&without_metadata(report(dir.path()))).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn config_errors_exit_with_two() {
    let o = nodalcert(&["verify", "--n", "3", "--ell", "2", "--m", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
    let o = nodalcert(&["verify", "--tasks", "plots"]);
    assert_eq!(o.status.code(), Some(2));
    let o = nodalcert(&["verify", "--m", "3..1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failing_claim_exits_with_one() {
    let o = nodalcert(&["verify", "--m", "1", "--tasks", "frequency", "--tol", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn inconclusive_only_exits_with_three() {
    // sqrt(eta) underflows at m = 60, so the rescaled certificate cannot run.
    let o = nodalcert(&["verify", "--m", "60", "--tasks", "regularity", "--rigorous"]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"n": [4], "ell": [1], "m": [1, 2], "tasks": ["holes"], "seed": 5}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = nodalcert(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--m",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["config"]["n"], serde_json::json!([4]));
    assert_eq!(r["config"]["m"], serde_json::json!([3]));
    assert_eq!(r["config"]["seed"], 5);
}

#[test]
fn figures_for_surface_case() {
    let dir = tempfile::tempdir().unwrap();
    let o = nodalcert(&[
        "figures",
        "--n",
        "3",
        "--ell",
        "1",
        "--m",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let obj = fs::read_to_string(dir.path().join("meshes/nodal_n3_l1_m4.obj")).unwrap();
    assert!(obj.lines().filter(|l| l.starts_with("f ")).count() > 1000);
    assert!(dir.path().join("meshes/nodal_n3_l1_m4.smplx").exists());

    let csv = fs::read_to_string(dir.path().join("curves/holes_n3_l1_m4.csv")).unwrap();
    let mut curves: std::collections::BTreeMap<i64, Vec<(f64, f64)>> = Default::default();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        curves
            .entry(f[0].parse().unwrap())
            .or_default()
            .push((f[2].parse().unwrap(), f[3].parse().unwrap()));
    }
    assert_eq!(curves.len(), 8);
    for pts in curves.values() {
        assert!(pts.len() > 4);
        assert_eq!(pts.first(), pts.last());
    }
    let freq = fs::read_to_string(dir.path().join("frequency.csv")).unwrap();
    assert_eq!(freq.lines().count(), 2);
}

#[test]
fn figures_for_solid_case_write_simplicial_text_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = nodalcert(&[
        "figures",
        "--n",
        "4",
        "--ell",
        "2",
        "--m",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("meshes/nodal_n4_l2_m2.smplx").exists());
    assert!(!dir.path().join("meshes/nodal_n4_l2_m2.obj").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("OBJ skipped"));
}
