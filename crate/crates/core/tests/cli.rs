use std::fs;
use std::path::Path;

use hrm3d::cli::{self, CliError, EXIT_OK, EXIT_USAGE, EXIT_VERIFICATION};
use hrm3d::io::config::RunConfig;
use hrm3d::io::kitti;
use tempfile::TempDir;

fn run(args: &[&str]) -> i32 {
    cli::main_with_args(std::iter::once("hrm3d").chain(args.iter().copied()))
}

fn out_arg(dir: &TempDir) -> String {
    dir.path().to_str().unwrap().to_string()
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for sub in ["", "gt", "pred"] {
        let d = dir.join(sub);
        let mut names: Vec<_> = fs::read_dir(&d).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_file()).collect();
        names.sort();
        for p in names {
            files.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
        }
    }
    files
}

#[test]
fn simulate_is_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        assert_eq!(run(&["simulate", "--seed", "3", "--frames", "5", "--out", &out_arg(d)]), EXIT_OK);
    }
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert_eq!(ta.len(), 1 + 1 + 5 + 5);
    assert_eq!(ta, tb);
    let manifest = fs::read_to_string(a.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 3"));
    assert!(manifest.contains("config_hash"));
}

#[test]
fn simulate_zero_frames_writes_manifest_only() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["simulate", "--frames", "0", "--out", &out_arg(&dir)]), EXIT_OK);
    let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries, vec!["manifest.toml"]);
}

#[test]
fn ground_truth_labels_round_trip() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["simulate", "--frames", "3", "--out", &out_arg(&dir)]), EXIT_OK);
    for entry in fs::read_dir(dir.path().join("gt")).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let labels = kitti::read_label_file(&path).unwrap();
        assert_eq!(kitti::format_labels(&labels), text);
    }
}

#[test]
fn eval_of_raised_source_detector_has_negative_mde() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir);
    assert_eq!(run(&["simulate", "--frames", "20", "--delta-h", "0.76", "--out", &out]), EXIT_OK);
    let r = cli::cmd_eval(&dir.path().join("gt"), &dir.path().join("pred"), Some(0.76), dir.path()).unwrap();
    assert!(r.mde.unwrap() < 0.0, "{r:?}");
    assert!(dir.path().join("eval.csv").exists());
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["simulate", "--frames", "10", "--out", &out_arg(&dir)]), EXIT_OK);
    let gt = dir.path().join("gt");
    let r = cli::cmd_eval(&gt, &gt, None, dir.path()).unwrap();
    assert_eq!(r.ap3d_70, 100.0);
    assert_eq!(r.mde, Some(0.0));
}

#[test]
fn eval_with_empty_predictions_reports_zero_ap_and_no_mde() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["simulate", "--frames", "4", "--out", &out_arg(&dir)]), EXIT_OK);
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let r = cli::cmd_eval(&dir.path().join("gt"), &empty, None, dir.path()).unwrap();
    assert_eq!(r.ap3d_70, 0.0);
    assert_eq!(r.mde, None);
    let csv = fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert!(csv.contains("NA"), "{csv}");
}

#[test]
fn eval_reports_mismatched_frames() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["simulate", "--frames", "3", "--out", &out_arg(&dir)]), EXIT_OK);
    fs::remove_file(dir.path().join("pred/000001.txt")).unwrap();
    let err = cli::cmd_eval(&dir.path().join("gt"), &dir.path().join("pred"), None, dir.path()).unwrap_err();
    match err {
        CliError::FrameMismatch { missing_pred, missing_gt } => {
            assert_eq!(missing_pred, vec!["000001".to_string()]);
            assert!(missing_gt.is_empty());
        }
        other => panic!("unexpected {other}"),
    }
    let code = run(&["eval", "--gt", dir.path().join("gt").to_str().unwrap(), "--pred", dir.path().join("pred").to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn sweep_default_passes_verification() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["sweep", "--frames", "60", "--out", &out_arg(&dir)]), EXIT_OK);
    for f in ["trend.csv", "trend.svg", "trend.txt", "verification.txt", "params.toml"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn sweep_at_training_height_only_fails_verification() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["sweep", "--grid", "0", "--frames", "10", "--out", &out_arg(&dir)]), EXIT_VERIFICATION);
    let v = fs::read_to_string(dir.path().join("verification.txt")).unwrap();
    assert!(v.contains("FAIL"));
}

#[test]
fn sweep_of_one_model_has_one_section() {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::default();
    cfg.run.out = dir.path().to_path_buf();
    cfg.sweep.models = vec!["ground".into()];
    cfg.sweep.frames = 20;
    let (report, _) = cli::cmd_sweep(&cfg).unwrap();
    assert_eq!(report.models.len(), 1);
    let csv = fs::read_to_string(dir.path().join("trend.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("ground,")), "{csv}");
}

#[test]
fn oracle_rows_follow_masks() {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::default();
    cfg.run.out = dir.path().to_path_buf();
    cfg.sweep.frames = 20;
    cfg.run.masks = vec!["z".into(), "xyz".into(), "lwh".into()];
    let table = cli::cmd_oracle(&cfg).unwrap();
    let masks: Vec<String> = table.rows.iter().map(|r| r.mask.to_string()).collect();
    assert_eq!(masks, ["none", "z", "xyz", "lwh"]);

    cfg.run.masks = vec!["none".into()];
    assert_eq!(cli::cmd_oracle(&cfg).unwrap().rows.len(), 1);

    assert_eq!(run(&["oracle", "--masks", "q", "--frames", "2", "--out", &out_arg(&dir)]), EXIT_USAGE);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["bogus"]), EXIT_USAGE);
    assert_eq!(run(&["sweep", "--relu", "maybe"]), EXIT_USAGE);
    assert_eq!(run(&["--help"]), EXIT_OK);
}
