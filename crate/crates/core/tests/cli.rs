use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adaptive_reach::config::ExperimentConfig;
use adaptive_reach::io::checkpoint::decode_checkpoint;
use adaptive_reach::io::corpus::{decode_corpus, verify_replay};
use adaptive_reach::io::tables::read_provenance;
use adaptive_reach::io::Provenance;

fn small_config(dir: &Path) -> (PathBuf, ExperimentConfig) {
    let mut cfg = ExperimentConfig::desk();
    cfg.network.hidden = 6;
    cfg.training.epochs = 2;
    cfg.cem.population = 16;
    cfg.cem.elite_count = 4;
    cfg.cem.iterations = 1;
    cfg.experiment.blocks = 1;
    cfg.experiment.heldout_walks = 2;
    cfg.experiment.baseline_episodes = 5;
    cfg.experiment.bootstrap_resamples = 20;
    let path = dir.join("small.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    (path, cfg)
}

fn cli(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptive-reach"))
        .args(args)
        .env("ADAPTIVE_REACH_OUTPUT", root)
        .output()
        .unwrap()
}

fn run_dir(out: &Output) -> PathBuf {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"training": {"epochz": 3}}"#).unwrap();
    let out = cli(tmp.path(), &["--config", bad.to_str().unwrap(), "gradcheck"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("training.epochz"), "{}", stderr(&out));
}

#[test]
fn invalid_config_value_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"geometry": {"dt": -1.0}}"#).unwrap();
    let out = cli(tmp.path(), &["--config", bad.to_str().unwrap(), "baseline"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("geometry.dt"), "{}", stderr(&out));
}

#[test]
fn missing_inputs_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let nowhere = tmp.path().join("nowhere");
    let cases: [&[&str]; 3] = [
        &["--config", nowhere.to_str().unwrap(), "gradcheck"],
        &["train", "--corpus", nowhere.to_str().unwrap()],
        &["test", "--checkpoint", nowhere.to_str().unwrap()],
    ];
    for args in cases {
        let out = cli(tmp.path(), args);
        assert_eq!(out.status.code(), Some(3), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn empty_corpus_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let (config, _) = small_config(tmp.path());
    let config = config.to_str().unwrap();
    let gen = run_dir(&cli(tmp.path(), &["--config", config, "gen-data", "--condition", "rot", "--count", "0"]));
    let out = cli(tmp.path(), &["--config", config, "train", "--corpus", gen.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("empty corpus"));
}

#[test]
fn gradcheck_passes_on_a_fresh_build() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(tmp.path(), &["gradcheck"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let value: f64 = text.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(value < 1e-4, "{text}");
}

#[test]
fn pipeline_artifacts_carry_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let (config, cfg) = small_config(tmp.path());
    let config = config.to_str().unwrap();
    let prov = Provenance::of(&cfg);
    let root = tmp.path().join("runs");

    let gen = run_dir(&cli(&root, &["--config", config, "gen-data", "--condition", "rot", "--seed", "2", "--count", "3"]));
    assert!(gen.starts_with(&root));
    let file = decode_corpus(&std::fs::read(gen.join("corpus.bin")).unwrap()).unwrap();
    assert_eq!(file.provenance, prov);
    assert_eq!(file.corpus.len(), 3);
    verify_replay(&file).unwrap();

    let train = run_dir(&cli(&root, &["--config", config, "train", "--corpus", gen.to_str().unwrap()]));
    let model = decode_checkpoint(&std::fs::read(train.join("checkpoint.bin")).unwrap()).unwrap();
    assert_eq!(model.meta.config_hash, prov.config_hash);
    assert_eq!(model.meta.root_seed, prov.root_seed);
    assert_eq!(model.meta.seed, 2);

    let test = run_dir(&cli(&root, &["--config", config, "test", "--checkpoint", train.to_str().unwrap()]));
    let report = run_dir(&cli(&root, &["--config", config, "report", "--input", train.to_str().unwrap(), test.to_str().unwrap()]));
    for dir in [&gen, &train, &test, &report] {
        let echoed = std::fs::read_to_string(dir.join("config.json")).unwrap();
        assert_eq!(adaptive_reach::config::parse_config(&echoed).unwrap(), cfg);
        let info: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("provenance.json")).unwrap()).unwrap();
        assert_eq!(info["config_hash"], format!("{:016x}", prov.config_hash));
    }
    for name in ["metrics.csv", "trials.csv", "trajectories.csv", "curve.csv"] {
        let text = std::fs::read_to_string(test.join(name)).unwrap();
        assert_eq!(read_provenance(&text), Some(prov), "{name}");
    }
    for k in 3..=8 {
        let text = std::fs::read_to_string(report.join(format!("fig{k}.csv"))).unwrap();
        assert_eq!(read_provenance(&text), Some(prov));
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["provenance"]["root_seed"], cfg.root_seed);
    assert!(summary["conditions"]["rot"].is_object());
}

#[test]
fn reruns_get_fresh_directories_and_out_is_never_reused() {
    let tmp = tempfile::tempdir().unwrap();
    let (config, _) = small_config(tmp.path());
    let config = config.to_str().unwrap();
    let a = run_dir(&cli(tmp.path(), &["--config", config, "baseline"]));
    let b = run_dir(&cli(tmp.path(), &["--config", config, "baseline"]));
    assert_ne!(a, b);
    assert_eq!(std::fs::read(a.join("baseline.csv")).unwrap(), std::fs::read(b.join("baseline.csv")).unwrap());

    let out = cli(tmp.path(), &["--config", config, "--out", a.to_str().unwrap(), "baseline"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("already holds"), "{}", stderr(&out));
}
