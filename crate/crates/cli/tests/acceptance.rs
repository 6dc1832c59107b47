//! CLI acceptance: end-to-end determinism (criterion 7 of the shipping
//! checklist) plus the golden preprocessing fixture and the command-line
//! contract (exit codes, error lines, flag handling).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nextpoi::fixtures;

fn nextpoi_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nextpoi"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = nextpoi_bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str]) -> Output {
    let out = nextpoi_bin().args(args).output().expect("binary runs");
    assert!(!out.status.success(), "command {args:?} unexpectedly succeeded");
    out
}

fn write_gps_fixture(dir: &Path) -> PathBuf {
    let path = dir.join("gps.csv");
    std::fs::write(&path, fixtures::write_gps_csv(&fixtures::gps_fixture())).unwrap();
    path
}

struct PipelineArtifacts {
    dataset: PathBuf,
    checkpoint_best: Vec<u8>,
    checkpoint_final: Vec<u8>,
    metrics: Vec<u8>,
    per_sample: Vec<u8>,
    stats: String,
}

/// preprocess -> train -> evaluate, returning every artifact's bytes.
fn full_pipeline(root: &Path, tag: &str) -> PipelineArtifacts {
    let dir = root.join(tag);
    std::fs::create_dir_all(&dir).unwrap();
    let gps = write_gps_fixture(&dir);
    let dataset = dir.join("dataset.json");
    run_ok(&[
        "preprocess",
        "--input",
        gps.to_str().unwrap(),
        "--format",
        "gps",
        "--out",
        dataset.to_str().unwrap(),
    ]);
    let train_dir = dir.join("train");
    run_ok(&[
        "train",
        "--data",
        dataset.to_str().unwrap(),
        "--out",
        train_dir.to_str().unwrap(),
        "--epochs",
        "3",
        "--seed",
        "11",
    ]);
    let eval_dir = dir.join("eval");
    run_ok(&[
        "evaluate",
        "--data",
        dataset.to_str().unwrap(),
        "--model",
        train_dir.join("checkpoint_final.json").to_str().unwrap(),
        "--split",
        "test",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    PipelineArtifacts {
        checkpoint_best: std::fs::read(train_dir.join("checkpoint_best.json")).unwrap(),
        checkpoint_final: std::fs::read(train_dir.join("checkpoint_final.json")).unwrap(),
        metrics: std::fs::read(eval_dir.join("metrics.csv")).unwrap(),
        per_sample: std::fs::read(eval_dir.join("per_sample.csv")).unwrap(),
        stats: std::fs::read_to_string(dataset.with_extension("stats.txt")).unwrap(),
        dataset,
    }
}

/// Criterion 7: two end-to-end runs with the same seed produce
/// byte-identical checkpoints and metrics CSVs.
#[test]
fn criterion_7_end_to_end_determinism() {
    let root = tempfile::tempdir().unwrap();
    let first = full_pipeline(root.path(), "a");
    let second = full_pipeline(root.path(), "b");
    assert_eq!(
        std::fs::read(&first.dataset).unwrap(),
        std::fs::read(&second.dataset).unwrap(),
        "datasets differ"
    );
    assert_eq!(first.checkpoint_best, second.checkpoint_best, "best checkpoints differ");
    assert_eq!(first.checkpoint_final, second.checkpoint_final, "final checkpoints differ");
    assert_eq!(first.metrics, second.metrics, "metrics differ");
    assert_eq!(first.per_sample, second.per_sample, "per-sample dumps differ");
    println!("ACCEPTANCE 7 (end-to-end determinism): PASS");
}

/// The bundled GPS fixture reduces to frozen preprocessing stats: the rare
/// thirteenth venue is clustered and then filtered away.
#[test]
fn preprocess_stats_match_the_golden_fixture() {
    let root = tempfile::tempdir().unwrap();
    let artifacts = full_pipeline(root.path(), "golden");
    let expected = "stay-point stage: run\n\
                    raw records: 19632\n\
                    users: 50 -> 50\n\
                    locations: 13 -> 12\n\
                    check-ins: 1992 -> 1898\n";
    assert_eq!(artifacts.stats, expected);
}

#[test]
fn checkin_format_skips_the_stay_point_stage() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("checkins.tsv");
    std::fs::write(&tsv, fixtures::checkin_tsv_fixture()).unwrap();
    let out = dir.path().join("dataset.json");
    let output = run_ok(&[
        "preprocess",
        "--input",
        tsv.to_str().unwrap(),
        "--format",
        "checkin",
        "--out",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("stay-point stage: skipped"), "stdout: {stdout}");
    assert!(out.exists());
}

#[test]
fn bad_header_fails_with_a_line_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "user,latitude,lon,timestamp\nu1,1.0,2.0,3\n").unwrap();
    let out = run_err(&[
        "preprocess",
        "--input",
        bad.to_str().unwrap(),
        "--format",
        "gps",
        "--out",
        dir.path().join("x.json").to_str().unwrap(),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let error_lines: Vec<&str> =
        stderr.lines().filter(|l| l.starts_with("error: ")).collect();
    assert_eq!(error_lines.len(), 1, "one machine-parsable line: {stderr}");
    assert!(error_lines[0].contains("line 1"), "stderr: {stderr}");
}

#[test]
fn malformed_row_reports_its_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "user_id,lat,lon,timestamp\nu1,40.0,-74.0,100\nu1,oops,-74.0,200\n",
    )
    .unwrap();
    let out = run_err(&[
        "preprocess",
        "--input",
        bad.to_str().unwrap(),
        "--format",
        "gps",
        "--out",
        dir.path().join("x.json").to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn missing_checkpoint_fails_cleanly() {
    let root = tempfile::tempdir().unwrap();
    let gps = write_gps_fixture(root.path());
    let dataset = root.path().join("dataset.json");
    run_ok(&[
        "preprocess",
        "--input",
        gps.to_str().unwrap(),
        "--format",
        "gps",
        "--out",
        dataset.to_str().unwrap(),
    ]);
    let out = run_err(&[
        "evaluate",
        "--data",
        dataset.to_str().unwrap(),
        "--model",
        root.path().join("nope.json").to_str().unwrap(),
        "--out",
        root.path().join("eval").to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

/// Frozen baseline metrics on the bundled fixture: the schedule is regular
/// enough that the frequency baseline nails the test split, with NDCG
/// capped by in-user ties.
#[test]
fn userpop_metrics_match_the_golden_run() {
    let root = tempfile::tempdir().unwrap();
    let gps = write_gps_fixture(root.path());
    let dataset = root.path().join("dataset.json");
    run_ok(&[
        "preprocess",
        "--input",
        gps.to_str().unwrap(),
        "--format",
        "gps",
        "--out",
        dataset.to_str().unwrap(),
    ]);
    let eval_dir = root.path().join("eval");
    run_ok(&[
        "evaluate",
        "--data",
        dataset.to_str().unwrap(),
        "--baseline",
        "userpop",
        "--split",
        "test",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    let metrics = std::fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    let expected = "metric,K,value\n\
                    recall,5,1\n\
                    recall,10,1\n\
                    ndcg,5,0.849753306357154\n\
                    ndcg,10,0.849753306357154\n";
    assert_eq!(metrics, expected);
}

#[test]
fn k_equal_one_is_accepted() {
    let root = tempfile::tempdir().unwrap();
    let gps = write_gps_fixture(root.path());
    let dataset = root.path().join("dataset.json");
    run_ok(&[
        "preprocess",
        "--input",
        gps.to_str().unwrap(),
        "--format",
        "gps",
        "--out",
        dataset.to_str().unwrap(),
    ]);
    let out = run_ok(&[
        "evaluate",
        "--data",
        dataset.to_str().unwrap(),
        "--baseline",
        "userpop",
        "--k",
        "1",
        "--out",
        root.path().join("eval").to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("recall@1"));
}

#[test]
fn ablation_flags_are_recorded_in_the_checkpoint() {
    let root = tempfile::tempdir().unwrap();
    let gps = write_gps_fixture(root.path());
    let dataset = root.path().join("dataset.json");
    run_ok(&[
        "preprocess",
        "--input",
        gps.to_str().unwrap(),
        "--format",
        "gps",
        "--out",
        dataset.to_str().unwrap(),
    ]);
    let train_dir = root.path().join("train");
    run_ok(&[
        "train",
        "--data",
        dataset.to_str().unwrap(),
        "--out",
        train_dir.to_str().unwrap(),
        "--epochs",
        "1",
        "--no-duration",
        "--no-longshort",
    ]);
    let ck =
        nextpoi::checkpoint::Checkpoint::load(&train_dir.join("checkpoint_final.json")).unwrap();
    assert!(!ck.config.use_duration);
    assert!(!ck.config.use_long_short);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[train]\nlearning_rate = 0.01\nmystery_knob = 3\n").unwrap();
    let out = run_err(&[
        "--config",
        cfg.to_str().unwrap(),
        "train",
        "--data",
        dir.path().join("none.json").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery_knob"));
}

#[test]
fn predictions_are_sorted_and_config_echoed() {
    let root = tempfile::tempdir().unwrap();
    let gps = write_gps_fixture(root.path());
    let dataset = root.path().join("dataset.json");
    run_ok(&[
        "preprocess",
        "--input",
        gps.to_str().unwrap(),
        "--format",
        "gps",
        "--out",
        dataset.to_str().unwrap(),
    ]);
    let train_dir = root.path().join("train");
    run_ok(&[
        "train",
        "--data",
        dataset.to_str().unwrap(),
        "--out",
        train_dir.to_str().unwrap(),
        "--epochs",
        "1",
    ]);
    let echoed =
        std::fs::read_to_string(train_dir.join("effective-config.toml")).unwrap();
    assert!(echoed.contains("dim = 50"), "default dim echoed: {echoed}");

    let out = run_ok(&[
        "predict",
        "--model",
        train_dir.join("checkpoint_final.json").to_str().unwrap(),
        "--data",
        dataset.to_str().unwrap(),
        "--user",
        "u003",
        "--topk",
        "5",
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let scores: Vec<f64> = stdout
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(scores.len(), 5);
    for pair in scores.windows(2) {
        assert!(pair[0] >= pair[1], "scores must be non-increasing: {scores:?}");
    }

    let err = run_err(&[
        "predict",
        "--model",
        train_dir.join("checkpoint_final.json").to_str().unwrap(),
        "--data",
        dataset.to_str().unwrap(),
        "--user",
        "ghost",
    ]);
    assert!(String::from_utf8_lossy(&err.stderr).contains("unknown user"));
}
