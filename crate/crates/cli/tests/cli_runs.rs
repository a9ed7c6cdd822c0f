use std::path::Path;
use std::process::Command;

use pta_cli::app::run;
use pta_cli::config::{load_config, AttackMethod, ExperimentConfig};
use pta_cli::error::CliError;
use pta_cli::experiment::ResultRow;
use pta_cli::report::run_experiment;

fn args(list: &[&str]) -> Vec<String> {
    std::iter::once("pta").chain(list.iter().copied()).map(String::from).collect()
}

/// A small but complete experiment: 3 clusters, 40 sources, few PGD steps.
fn small_overrides(out: &Path) -> Vec<String> {
    [
        "--world.n_clusters=3",
        "--world.source_count=40",
        "--world.target_count=20",
        "--world.input_dim=48",
        "--proxies.n_c=5",
        "--proxies.n_s=5",
        "--evaluation.references=20",
        "--evaluation.detection_k=10",
        "--attack.iterations=10",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([format!("--output_dir={}", out.display())])
    .collect()
}

fn run_small(sub: &str, out: &Path, extra: &[&str]) -> Result<String, CliError> {
    let mut a = vec!["pta".to_string(), sub.to_string()];
    a.extend(small_overrides(out));
    a.extend(extra.iter().map(|s| s.to_string()));
    run(&a, None)
}

fn rows(dir: &Path) -> Vec<ResultRow> {
    csv::Reader::from_path(dir.join("results.csv"))
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn one_trial_without_sweep_gives_one_row_per_attack() {
    let dir = tempfile::tempdir().unwrap();
    run_small("eval", dir.path(), &[]).unwrap();
    let r = rows(dir.path());
    assert_eq!(r.len(), 2);
    assert_eq!(r[0].attack, "pta");
    assert_eq!(r[1].attack, "illusion");
    assert!(r.iter().all(|x| x.schema_version == 1 && x.config_hash.len() == 64));
    assert_eq!(r[0].n_total, 3 * 2 * 10, "2 AEs per cluster, 10 true targets each");
    for f in ["results.csv", "results.json", "summary.csv", "config.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn results_are_byte_identical_across_runs_and_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_small("eval", a.path(), &["--trials=3", "--jobs=1"]).unwrap();
    run_small("eval", b.path(), &["--trials=3", "--jobs=3"]).unwrap();
    let read = |d: &Path| std::fs::read(d.join("results.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn adding_trials_leaves_earlier_trials_unchanged() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_small("eval", a.path(), &["--trials=1"]).unwrap();
    run_small("eval", b.path(), &["--trials=2"]).unwrap();
    let (ra, rb) = (rows(a.path()), rows(b.path()));
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!((x.seed, x.asr, x.mean_rank), (y.seed, y.asr, y.mean_rank));
    }
}

#[test]
fn sweep_rows_carry_their_point() {
    let dir = tempfile::tempdir().unwrap();
    run_small(
        "sweep",
        dir.path(),
        &["--methods=[\"pta\"]", "--sweep.parameter=alpha", "--sweep.values=[0,0.5]"],
    )
    .unwrap();
    let r = rows(dir.path());
    assert_eq!(r.len(), 2);
    assert_eq!(r[0].sweep_parameter, "alpha");
    assert_eq!((r[0].alpha, r[1].alpha), (Some(0.0), Some(0.5)));
    assert_eq!((r[0].sweep_value, r[1].sweep_value), (Some(0.0), Some(0.5)));
}

#[test]
fn sweep_subcommand_requires_a_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_small("sweep", dir.path(), &[]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn poison_reports_recall_and_attack_keeps_records() {
    let dir = tempfile::tempdir().unwrap();
    run_small("poison", dir.path(), &["--evaluation.injection_ratio=0.1", "--methods=[\"pta\",\"same_modal\"]"]).unwrap();
    let r = rows(dir.path());
    assert_eq!(r[1].attack, "samemodal");
    assert!(r.iter().all(|x| x.task == "poisoning" && x.recall_drop.is_some()));
    // 10% of 3·20 gallery items
    assert_eq!(r[0].injection_ratio, Some(0.1));

    let dir = tempfile::tempdir().unwrap();
    run_small("attack", dir.path(), &["--methods=[\"illusion\"]"]).unwrap();
    let text = std::fs::read_to_string(dir.path().join("attacks.json")).unwrap();
    let records: Vec<serde_json::Value> = serde_json::from_str(&text).unwrap();
    assert_eq!(records.len(), 6);
    assert_eq!(records[0]["record"]["objective_trace"].as_array().unwrap().len(), 11);
}

#[test]
fn invalid_config_lists_every_problem() {
    let err = run(
        &args(&["eval", "--trials=0", "--attack.epsilon=-1", "--proxies.n_c=0", "--detection.anomaly_ratio=2"]),
        None,
    )
    .unwrap_err();
    match &err {
        CliError::Validation(v) => {
            for field in ["trials", "attack.epsilon", "proxies.n_c", "detection.anomaly_ratio"] {
                assert!(v.iter().any(|m| m.starts_with(field)), "missing {field} in {v:?}");
            }
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn unknown_field_is_a_validation_error() {
    let err = run(&args(&["eval", "--attack.stepsize=0.1"]), None).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn env_seed_overrides_master_seed() {
    let cfg = load_config(None, &[], Some("42")).unwrap();
    assert_eq!(cfg.seed, 42);
    assert!(load_config(None, &[], Some("x")).is_err());
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"name": "demo", "attack": {"alpha": 0.2}, "methods": ["pta"]}"#).unwrap();
    let cfg = load_config(Some(&path), &[("attack.alpha".into(), "0.6".into())], None).unwrap();
    assert_eq!(cfg.name, "demo");
    assert_eq!(cfg.attack.alpha, 0.6);
    assert_eq!(cfg.methods, vec![AttackMethod::Pta]);
}

#[test]
fn library_entry_point_matches_cli() {
    let dir = tempfile::tempdir().unwrap();
    let overrides: Vec<(String, String)> = small_overrides(dir.path())
        .iter()
        .map(|s| {
            let (k, v) = s.trim_start_matches("--").split_once('=').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect();
    let cfg: ExperimentConfig = load_config(None, &overrides, None).unwrap();
    let run = run_experiment(&cfg, 1, "eval", false).unwrap();
    assert_eq!(run.rows, rows(dir.path()));
    assert_eq!(run.manifest.trial_seeds.len(), 1);
}

#[test]
fn import_and_detect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("emb.csv");
    let mut text = String::new();
    for i in 0..12 {
        let x = if i == 11 { 9.0 } else { i as f64 * 0.01 };
        text.push_str(&format!("p{i},{x},{},0.5\n", 1.0 - x));
    }
    std::fs::write(&file, &text).unwrap();
    let out = dir.path().join("imp");
    let msg = run(
        &args(&["import", "--file", file.to_str().unwrap(), "--role", "reference", "--out", out.to_str().unwrap()]),
        None,
    )
    .unwrap();
    assert!(msg.contains("imported 12"));
    let read = |p: &Path| pta_cli::app::import_embeddings(p, false).unwrap();
    assert_eq!(read(&out.join("reference.csv")), read(&file));

    let det = dir.path().join("det");
    run(
        &args(&[
            "detect",
            "--file",
            file.to_str().unwrap(),
            "--out",
            det.to_str().unwrap(),
            "--detection.anomaly_ratio=0.1",
            "--detection.neighbors_k=2",
        ]),
        None,
    )
    .unwrap();
    let scores = std::fs::read_to_string(det.join("detection.csv")).unwrap();
    assert!(scores.lines().nth(12).unwrap().ends_with("true"));
    assert_eq!(scores.matches("true").count(), 1);
}

#[test]
fn import_rejects_bad_cell_with_row_number() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.csv");
    std::fs::write(&file, "a,1,2\nb,abc,3\n").unwrap();
    let err = run(&args(&["import", "--file", file.to_str().unwrap(), "--role", "target"]), None).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("row 2"), "{err}");
}

#[test]
fn import_normalizes_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("e.csv");
    std::fs::write(&file, "a,3,4\n").unwrap();
    let rows = pta_cli::app::import_embeddings(&file, true).unwrap();
    assert_eq!(rows[0].1.values(), &[0.6, 0.8]);
}

#[test]
fn theory_suite_and_replay_via_cli() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let msg = run(&args(&["theory", "--count", "30", "--polytope-count", "40", "--out", out]), None).unwrap();
    assert!(msg.contains("0 violations"), "{msg}");
    let replay = dir.path().join("replay.json");
    let msg = run(&args(&["theory", "--replay", replay.to_str().unwrap()]), None).unwrap();
    assert!(msg.starts_with("gap"), "{msg}");
    let csv = std::fs::read_to_string(dir.path().join("theory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_pta");
    let status = Command::new(bin)
        .args(["eval", "--trials=0"])
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let status = Command::new(bin)
        .args(["detect", "--file", missing.to_str().unwrap()])
        .current_dir(dir.path())
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let out = Command::new(bin).arg("--help").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("theory"));
}

#[test]
fn binary_honours_env_seed() {
    let bin = env!("CARGO_BIN_EXE_pta");
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(bin)
        .arg("eval")
        .args(small_overrides(dir.path()))
        .env("PTA_SEED", "99")
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 99);
    assert!(manifest["conventions"]["mean_rank"].is_string());
}
