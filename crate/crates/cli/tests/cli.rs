use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn load(name: &str) -> Value {
    serde_json::from_slice(&std::fs::read(config(name)).unwrap()).unwrap()
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ultralap"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("ULTRALAP_THREADS")
        .output()
        .unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn validate_accepts_reference_configs() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["tate.json", "genus2.json", "tate_coupled.json"] {
        let out = dir.path().join(name);
        let o = run("validate", &config(name), &out, &[]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert_eq!(json(&out.join("validation.json"))["valid"], true);
    }
}

#[test]
fn validate_warns_on_coarse_bound_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load("tate.json");
    c["components"][0]["alpha"] = 1.into();
    let o = run(
        "validate",
        &write_config(dir.path(), &c),
        &dir.path().join("out"),
        &[],
    );
    assert_eq!(o.status.code(), Some(0));
    let report = json(&dir.path().join("out/validation.json"));
    assert_eq!(report["components"][0]["convergence"]["coarse"], false);
    assert_eq!(report["components"][0]["convergence"]["sharp"], true);
    assert_eq!(report["warnings"].as_array().unwrap().len(), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn asymmetric_weights_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load("tate_coupled.json");
    c["coupling"]["weights"][1][0] = "1/3".into();
    let path = write_config(dir.path(), &c);
    let o = run("validate", &path, &dir.path().join("v"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let report = json(&dir.path().join("v/validation.json"));
    assert_eq!(report["failures"][0]["check"], "coupling");
    assert_eq!(
        run("spectrum", &path, &dir.path().join("s"), &[])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn divergent_series_is_a_precondition_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load("genus2.json");
    c["components"][0]["alpha"] = "1/2".into();
    let path = write_config(dir.path(), &c);
    assert_eq!(
        run("validate", &path, &dir.path().join("v"), &[])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        run("spectrum", &path, &dir.path().join("s"), &[])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn malformed_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load("tate.json");
    c["components"][0]["alpha"] = "two".into();
    assert_eq!(
        run(
            "spectrum",
            &write_config(dir.path(), &c),
            &dir.path().join("a"),
            &[]
        )
        .status
        .code(),
        Some(2)
    );
    c["components"][0]["alpha"] = 2.into();
    c["unknown"] = true.into();
    assert_eq!(
        run(
            "spectrum",
            &write_config(dir.path(), &c),
            &dir.path().join("b"),
            &[]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run(
            "spectrum",
            &dir.path().join("missing.json"),
            &dir.path().join("c"),
            &[]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn spectrum_is_sorted_with_one_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    assert_eq!(
        run("spectrum", &config("tate.json"), &out, &[])
            .status
            .code(),
        Some(0)
    );
    let header = std::fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert!(header.starts_with("component,anchor_id,depth,eigenvalue,multiplicity,tail_bound\n"));
    let rows = csv_rows(&out.join("spectrum.csv"));
    let lambda: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(lambda.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(lambda.iter().filter(|&&l| l == 0.0).count(), 1);
    assert!(lambda[1..].iter().all(|&l| l < 0.0));
    assert!(rows.iter().all(|r| r[5].parse::<f64>().unwrap() >= 0.0));
    let total: usize = rows.iter().map(|r| r[4].parse::<usize>().unwrap()).sum();
    assert_eq!(total, csv_rows(&out.join("leaves.csv")).len());
}

#[test]
fn manifest_lists_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h");
    assert_eq!(
        run("heat", &config("tate.json"), &out, &[]).status.code(),
        Some(0)
    );
    let m = json(&out.join("manifest.json"));
    let files = m["files"].as_array().unwrap();
    let mut on_disk: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut listed: Vec<String> = files
        .iter()
        .map(|f| f["path"].as_str().unwrap().to_string())
        .collect();
    listed.sort();
    assert_eq!(listed, on_disk);
    for f in files {
        let bytes = std::fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(
            f["sha256"].as_str().unwrap(),
            hex::encode(Sha256::digest(&bytes))
        );
    }
    let raw = std::fs::read(config("tate.json")).unwrap();
    assert_eq!(
        m["context"]["config_sha256"].as_str().unwrap(),
        hex::encode(Sha256::digest(&raw))
    );
    assert_eq!(m["context"]["config"], load("tate.json"));
    assert_eq!(m["context"]["resolved_config"]["numerics"]["l_max"], 6);
}

#[test]
fn heat_conserves_mass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h");
    assert_eq!(
        run("heat", &config("tate_coupled.json"), &out, &[])
            .status
            .code(),
        Some(0)
    );
    let s = json(&out.join("heat_summary.json"));
    for t in s["times"].as_array().unwrap() {
        assert!(t["mass_defect"].as_f64().unwrap() <= 1e-10);
        assert!(t["row_sum_defect"].as_f64().unwrap() <= 1e-8);
        assert!(t["detailed_balance_defect"].as_f64().unwrap() <= 1e-8);
    }
    let rows = csv_rows(&out.join("heat.csv"));
    let first: Vec<f64> = rows
        .iter()
        .filter(|r| r[0].parse::<f64>().unwrap() == 0.0)
        .map(|r| r[2].parse().unwrap())
        .collect();
    assert_eq!(first[0], 1.0);
    assert!(first[1..].iter().all(|&x| x == 0.0));
}

#[test]
fn sampling_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    assert_eq!(
        run("sample", &config("tate.json"), &a, &[]).status.code(),
        Some(0)
    );
    assert_eq!(
        run("sample", &config("tate.json"), &b, &["--threads", "1"])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run("sample", &config("tate.json"), &c, &["--seed", "8"])
            .status
            .code(),
        Some(0)
    );
    for f in ["paths.csv", "law.csv", "sample_summary.json", "leaves.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        std::fs::read(a.join("paths.csv")).unwrap(),
        std::fs::read(c.join("paths.csv")).unwrap()
    );
    assert!(
        json(&a.join("sample_summary.json"))["total_variation"]
            .as_f64()
            .unwrap()
            <= 0.05
    );
    assert_eq!(json(&c.join("manifest.json"))["context"]["seed"], 8);
    let rows = csv_rows(&a.join("paths.csv"));
    assert_eq!(
        rows[0],
        vec!["0".to_string(), "0.0000000000000000e0".into(), "0".into()]
    );
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = Command::new(env!("CARGO_BIN_EXE_ultralap"))
        .args(["spectrum", "--out"])
        .arg(&out)
        .arg("--config")
        .arg(config("genus2.json"))
        .env("ULTRALAP_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&out.join("manifest.json"))["context"]["threads"], 2);
    let again = dir.path().join("t");
    assert_eq!(
        run("spectrum", &config("genus2.json"), &again, &[])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        std::fs::read(out.join("spectrum.csv")).unwrap(),
        std::fs::read(again.join("spectrum.csv")).unwrap()
    );
}

#[test]
fn bvp_rejects_data_outside_the_region() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load("tate.json");
    c["bvp"]["initial"] = serde_json::json!({"indicator": [0, 5]});
    let out = dir.path().join("b");
    let o = run("bvp", &write_config(dir.path(), &c), &out, &[]);
    assert_eq!(o.status.code(), Some(4));
    let r = json(&out.join("bvp_report.json"));
    assert_eq!(r["supported"], false);
    assert_eq!(r["solution_csv_path"], Value::Null);
    assert_eq!(r["leaves_outside"], serde_json::json!([5]));
    assert!(json(&out.join("manifest.json"))["files"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f["path"] == "bvp_report.json"));
}

#[test]
fn bvp_confines_wavelets() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["tate.json", "tate_coupled.json"] {
        let out = dir.path().join(name);
        assert_eq!(run("bvp", &config(name), &out, &[]).status.code(), Some(0));
        let r = json(&out.join("bvp_report.json"));
        assert_eq!(r["supported"], true, "{name}");
        assert!(
            r["violations"].as_array().unwrap().is_empty(),
            "{name}: {r}"
        );
        let rows = csv_rows(&out.join(r["solution_csv_path"].as_str().unwrap()));
        assert!(rows
            .iter()
            .filter(|r| r[3] == "0")
            .all(|r| r[2].parse::<f64>().unwrap().abs() <= 1e-10));
    }
}

#[test]
fn uncoupled_kernel_vanishes_across_components() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load("tate_coupled.json");
    c.as_object_mut().unwrap().remove("coupling");
    let out = dir.path().join("k");
    assert_eq!(
        run("kernel", &write_config(dir.path(), &c), &out, &[])
            .status
            .code(),
        Some(0)
    );
    let comp: Vec<usize> = csv_rows(&out.join("leaves.csv"))
        .iter()
        .map(|r| r[1].parse().unwrap())
        .collect();
    let rows = csv_rows(&out.join("kernel.csv"));
    let cross: Vec<&Vec<String>> = rows
        .iter()
        .filter(|r| comp[r[1].parse::<usize>().unwrap()] != comp[r[2].parse::<usize>().unwrap()])
        .collect();
    assert!(!cross.is_empty());
    assert!(cross.iter().all(|r| r[3].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn kernel_matches_transition_entries() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k");
    assert_eq!(
        run("kernel", &config("tate_coupled.json"), &out, &[])
            .status
            .code(),
        Some(0)
    );
    let mass: Vec<f64> = csv_rows(&out.join("leaves.csv"))
        .iter()
        .map(|r| r[6].parse().unwrap())
        .collect();
    for r in csv_rows(&out.join("kernel.csv"))
        .iter()
        .filter(|r| r[1] != r[2])
    {
        let (value, p): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(
            (value * mass[r[2].parse::<usize>().unwrap()] - p).abs() <= 1e-6,
            "{r:?}"
        );
    }
}
