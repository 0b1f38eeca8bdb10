use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ecl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecl"))
        .args(args)
        .current_dir(dir)
        .env_remove("ECL_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const WIDTHS: &str =
    r#""widths": {"channels": [4, 8], "feature": 16, "motor_hidden": 8, "hidden": 16, "mlp_hidden": 16, "classes": 10}"#;

fn with_data(dir: &Path) {
    ok(&ecl(dir, &["gen-data", "--seed", "3", "--out", "data", "--image-size", "16", "--total", "300"]));
    assert!(dir.join("data/manifest.json").is_file());
}

#[test]
fn train_then_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    with_data(dir);
    fs::write(
        dir.join("run.json"),
        format!(r#"{{"id": "one", "epochs": 2, "batch_size": 16, "dataset": "data", "output_root": "out", {WIDTHS}}}"#),
    )
    .unwrap();
    ok(&ecl(dir, &["train", "--config", "run.json"]));
    let run = dir.join("out/one");
    for f in ["config.json", "learning_curve.csv", "per_number.csv", "checkpoint_best.bin", "checkpoint_final.bin"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    ok(&ecl(dir, &["analyze", "--run", "out/one", "--layer", "2", "--checkpoint", "best"]));
    for f in ["rdm.csv", "rsa.csv", "tuning.csv", "jpca.csv", "pca_coords.csv", "summary.json"] {
        assert!(run.join("analysis").join(f).is_file(), "{f} missing");
    }
    let pgms = fs::read_dir(run.join("analysis/gradcam")).unwrap().count();
    assert_eq!(pgms, 10 * 2);
    let rdm = fs::read_to_string(run.join("analysis/rdm.csv")).unwrap();
    assert_eq!(rdm.lines().count(), 11);

    assert!(!ecl(dir, &["analyze", "--run", "out/one", "--layer", "3"]).status.success());
    assert!(!ecl(dir, &["analyze", "--run", "out/missing"]).status.success());
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    with_data(dir);
    fs::write(
        dir.join("run.json"),
        format!(r#"{{"id": "env", "model": "vision-pool", "epochs": 1, "dataset": "data", "output_root": "ignored", {WIDTHS}}}"#),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ecl"))
        .args(["train", "--config", "run.json"])
        .current_dir(dir)
        .env("ECL_OUT", dir.join("elsewhere"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.join("elsewhere/env/checkpoint_final.bin").is_file());
    assert!(!dir.join("ignored").exists());
}

#[test]
fn grid_resumes_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    with_data(dir);
    let grid = format!(
        r#"{{
  "dataset": "data",
  "output_root": "grid",
  "defaults": {{"epochs": 2, "batch_size": 16, {WIDTHS}}},
  "axes": {{"model": ["embodied", "vision-single"]}}
}}"#
    );
    fs::write(dir.join("grid.json"), grid).unwrap();
    ok(&ecl(dir, &["grid", "--config", "grid.json", "--report"]));
    for id in ["embodied", "vision-single"] {
        assert!(dir.join("grid").join(id).join("checkpoint_final.bin").is_file());
    }
    let report = fs::read_to_string(dir.join("grid/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    let curve = fs::read(dir.join("grid/embodied/learning_curve.csv")).unwrap();

    let again = ecl(dir, &["grid", "--config", "grid.json"]);
    ok(&again);
    assert!(String::from_utf8_lossy(&again.stdout).contains("0 trained, 2 skipped"));
    assert_eq!(fs::read(dir.join("grid/embodied/learning_curve.csv")).unwrap(), curve);

    ok(&ecl(dir, &["report", "--root", "grid"]));
    assert_eq!(fs::read_to_string(dir.join("grid/report.csv")).unwrap(), report);
}

#[test]
fn invalid_inputs_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("dup.json"), r#"{"dataset": "data", "runs": [{"id": "a"}, {"id": "a"}]}"#).unwrap();
    let out = ecl(dir, &["grid", "--config", "dup.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate"));
    assert!(!dir.join("runs").exists());

    fs::write(dir.join("nodata.json"), r#"{"dataset": "nowhere", "runs": [{"id": "a"}]}"#).unwrap();
    let out = ecl(dir, &["grid", "--config", "nodata.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));

    fs::write(dir.join("bad.json"), "{\n  \"id\": \"x\",\n  \"epochs\": \"many\"\n}").unwrap();
    let out = ecl(dir, &["train", "--config", "bad.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    fs::create_dir(dir.join("empty")).unwrap();
    assert!(!ecl(dir, &["report", "--root", "empty"]).status.success());
    assert!(!ecl(dir, &["gen-data", "--out", "d", "--total", "3"]).status.success());
}
