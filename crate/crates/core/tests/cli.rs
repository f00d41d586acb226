use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_aligned-xai");

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .args(["--threads", "1"])
        .output()
        .unwrap()
}

const SMALL: [&str; 6] = ["--subjects", "150", "--epochs", "1", "--image-size", "32"];

#[test]
fn peppr_without_aggregate_is_a_prerequisite_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["peppr"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("aggregate/overall.axf"));
}

#[test]
fn unknown_label_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["generate-data", "--labels", "cataract_like"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_image_size_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["generate-data", "--image-size", "8"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_all_writes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(d, &[&["run-all"][..], &SMALL].concat());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "data/manifest.csv",
        "data/dataset.json",
        "train/model.axm",
        "train/history.csv",
        "explain/index.csv",
        "aggregate/overall.axf",
        "peppr/curves.csv",
        "report/summary.txt",
        "report/mean_val_flipped.pgm",
    ] {
        assert!(d.join(f).is_file(), "missing {f}");
    }
    let label_maps = std::fs::read_dir(d.join("aggregate"))
        .unwrap()
        .filter(|e| {
            let n = e.as_ref().unwrap().file_name().into_string().unwrap();
            n.starts_with("label_") && n.ends_with(".axf")
        })
        .count();
    assert_eq!(label_maps, 3);
    let history = std::fs::read_to_string(d.join("train/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
    let curves = std::fs::read_to_string(d.join("peppr/curves.csv")).unwrap();
    // header + 2 directions x 21 quantiles x 3 labels
    assert_eq!(curves.lines().count(), 1 + 2 * 21 * 3);
}

#[test]
fn label_subset_flows_through_stages() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(
        d,
        &[&["run-all", "--labels", "dr_like"][..], &SMALL].concat(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(d.join("aggregate/label_dr_like.axf").is_file());
    assert!(!d.join("aggregate/label_glaucoma_like.axf").exists());
    let header = std::fs::read_to_string(d.join("train/history.csv")).unwrap();
    assert!(header.starts_with("epoch,train_loss,val_loss,val_auc_dr_like\n"));
}
