use std::fs;
use std::path::{Path, PathBuf};

use nrt_core::run::{run, Command, RunConfig, RunError};

fn config(dir: &Path, extra: &str) -> RunConfig {
    let text = format!(
        "seed = 3\n[paths]\ninput_dir = {:?}\noutput_dir = {:?}\n[synth]\nn_participants = 3\ndays = 6\n\
         [models]\nregressors = [\"mean_baseline\", \"median_baseline\", \"ols\"]\n{extra}",
        dir.join("data").to_string_lossy(),
        dir.join("out").to_string_lossy(),
    );
    RunConfig::from_toml_str(&text, &[]).unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn stages_run_one_by_one_and_tag_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "");
    run(Command::Simulate, &cfg).unwrap();
    assert!(tmp.path().join("data/synth_manifest.json").is_file());
    let mut run_dir = PathBuf::new();
    for stage in Command::STAGES {
        run_dir = run(stage, &cfg).unwrap();
        let manifest = run_dir.join("manifests").join(format!("{}.json", stage.name()));
        assert!(manifest.is_file(), "{} wrote no manifest", stage.name());
    }
    assert_eq!(run_dir, cfg.run_dir());
    let hash = cfg.hash();
    let all = files(&run_dir);
    assert!(all.iter().any(|p| p.starts_with(run_dir.join("models"))));
    for path in all {
        let text = fs::read_to_string(&path).unwrap();
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let v: serde_json::Value = serde_json::from_str(&text).unwrap();
                assert_eq!(v["config_hash"], hash.as_str(), "{}", path.display());
            }
            Some("csv") => assert!(
                text.starts_with(&format!("# config_hash={hash}\n")),
                "{}",
                path.display()
            ),
            _ => panic!("unexpected artifact {}", path.display()),
        }
    }

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["regressors"].as_array().unwrap().len(), 3);

    // a stage output from another config poisons the report
    let eval_path = run_dir.join("evaluation.json");
    let original = fs::read_to_string(&eval_path).unwrap();
    fs::write(&eval_path, original.replace(&hash, &"0".repeat(64))).unwrap();
    let err = run(Command::Report, &cfg).unwrap_err();
    assert!(matches!(err, RunError::Data(_)), "{err}");
    fs::write(&eval_path, &original).unwrap();

    let m = run_dir.join("manifests/label.json");
    let text = fs::read_to_string(&m).unwrap();
    fs::write(&m, text.replace(&hash, &"f".repeat(64))).unwrap();
    let err = run(Command::Report, &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
    fs::write(&m, text).unwrap();
    run(Command::Report, &cfg).unwrap();
}

#[test]
fn later_stages_need_earlier_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "");
    run(Command::Simulate, &cfg).unwrap();
    let err = run(Command::Train, &cfg).unwrap_err();
    assert!(matches!(err, RunError::Data(_)), "{err}");
}

#[test]
fn config_problems_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(RunConfig::from_toml_str("jobs = 2\n", &[]), Err(RunError::Config(_))));
    assert!(matches!(RunConfig::from_toml_str("seed = 1\nbogus = 2\n", &[]), Err(RunError::Config(_))));
    let bad_k = RunConfig::from_toml_str("seed = 1\n[cv]\nk_outer = 1\n", &[]);
    assert!(matches!(bad_k, Err(RunError::Config(_))));
    let mut cfg = config(tmp.path(), "");
    cfg.jobs = 0;
    assert!(matches!(run(Command::All, &cfg), Err(RunError::Config(_))));
    // input directory does not exist
    let cfg = config(tmp.path(), "");
    let err = run(Command::Ingest, &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(!cfg.run_dir().exists());
}

#[test]
fn overrides_and_seed_propagation() {
    let cfg = RunConfig::from_toml_str("seed = 9\n", &[("cv.k_outer".into(), "4".into())]).unwrap();
    assert_eq!(cfg.cv.k_outer, 4);
    assert_eq!(cfg.synth.seed, 9);
    assert_eq!(cfg.cv.seed, 9);
    let jobs = RunConfig::from_toml_str("seed = 9\njobs = 8\n", &[]).unwrap();
    let other = RunConfig::from_toml_str("seed = 10\n", &[]).unwrap();
    assert_eq!(RunConfig::from_toml_str("seed = 9\n", &[]).unwrap().hash(), jobs.hash());
    assert_ne!(jobs.hash(), other.hash());
}
