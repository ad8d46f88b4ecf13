use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gwevo_cli::config::{Backend, RunConfig};
use gwevo_cli::run::{read_jsonl, LogRecord};
use gwevo_core::datagen::DatasetConfig;
use gwevo_core::scoring::FarRange;
use gwevo_search::evaluator::ExternalExecutor;
use gwevo_search::genclient::{MockRule, MockScript, MUTATE};
use gwevo_search::prompts::{CodeMode, PromptKind};

fn gwevo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwevo")).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn tiny() -> DatasetConfig {
    DatasetConfig { fs: 1024.0, segment_duration: 200.0, train_segments: 1, test_segments: 1, injections_per_segment: 2, ..Default::default() }
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string(cfg).unwrap()).unwrap();
    p
}

fn mock_cfg(dir: &Path, budget: u64) -> RunConfig {
    RunConfig {
        budget,
        backend: Backend::Mock,
        dataset: tiny(),
        far_range: FarRange { min: 1e4, max: 1e6 },
        output: dir.join("run"),
        ..Default::default()
    }
}

#[test]
fn init_config_writes_every_default() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("gwevo.json");
    let o = gwevo(&["init-config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let back: RunConfig = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
    assert_eq!(back, RunConfig::default());
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"t_max": -1}"#).unwrap();
    assert_eq!(code(&gwevo(&["run", "--config", p.to_str().unwrap()])), 2);
    fs::write(&p, "{not json").unwrap();
    assert_eq!(code(&gwevo(&["run", "--config", p.to_str().unwrap()])), 2);
    assert_eq!(code(&gwevo(&["run", "--no-such-flag"])), 2);
}

#[test]
fn zero_budget_records_the_seed_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mock_cfg(dir.path(), 0);
    let path = write_config(dir.path(), &cfg);
    let o = gwevo(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let log: Vec<LogRecord> = read_jsonl(&cfg.output.join("run_log.jsonl")).unwrap();
    assert_eq!(log.len(), 1);
    assert_eq!((log[0].eval, log[0].status.as_str()), (0, "ok"));
    for f in ["best.dsl", "best_eval.json", "tree.json", "analysis.json", "diversity.csv", "best_background.csv"] {
        assert!(cfg.output.join(f).is_file(), "{f}");
    }
    assert!(!cfg.output.join("timings.jsonl").exists());

    // The built-in seed scores exactly what the run recorded.
    let o = gwevo(&["evaluate", "seed", "--config", path.to_str().unwrap(), "--split", "train"]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["auc"].as_f64(), log[0].fitness);

    let out = dir.path().join("figures");
    let o = gwevo(&["report", cfg.output.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trajectory.svg", "diversity.svg", "sensitivity.svg"] {
        assert!(fs::read_to_string(out.join(f)).unwrap().starts_with("<svg"), "{f}");
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("elite lineage") && summary.contains("#0 seed"));

    let o = gwevo(&["export-tree", cfg.output.to_str().unwrap(), "--format", "dot"]);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("digraph"));
}

#[test]
fn report_lists_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tree.json"), "{}").unwrap();
    let o = gwevo(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("analysis.json") && err.contains("run_log.jsonl") && !err.contains("tree.json"), "{err}");
}

#[test]
fn evaluate_reads_a_dataset_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { dataset: tiny(), far_range: FarRange { min: 1e4, max: 1e6 }, ..Default::default() };
    let path = write_config(dir.path(), &cfg);
    let data = dir.path().join("data");
    assert_eq!(code(&gwevo(&["datagen", "--config", path.to_str().unwrap(), "--out", data.to_str().unwrap()])), 0);

    let out = dir.path().join("eval");
    let args = ["evaluate", "elite", "--config", path.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let o = gwevo(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["evaluation.json", "background.csv", "foreground.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let prog = dir.path().join("broken.dsl");
    fs::write(&prog, "detrend_none()\n").unwrap();
    let o = gwevo(&["evaluate", prog.to_str().unwrap(), "--config", path.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(code(&o), 4);

    let truth = fs::read_dir(&data).unwrap().map(|e| e.unwrap().path()).find(|p| p.join("injections.csv").is_file()).unwrap();
    fs::remove_file(truth.join("injections.csv")).unwrap();
    assert_eq!(code(&gwevo(&args)), 2);
}

#[test]
fn generator_outage_keeps_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    // Enough to build the initial variants, nothing for the point mutations.
    let text = |kind, s: &str| MockRule { kind: Some(kind), response: Some(s.into()), ..Default::default() };
    let script = MockScript {
        seed: 0,
        rules: vec![
            text(PromptKind::SeedAnalysis, "{Seed.}"),
            text(PromptKind::Summary, "Variant."),
            text(PromptKind::Init, MUTATE),
        ],
    };
    let script_path = dir.path().join("script.json");
    fs::write(&script_path, serde_json::to_string(&script).unwrap()).unwrap();
    let cfg = RunConfig { mock_script: Some(script_path), ..mock_cfg(dir.path(), 20) };
    let path = write_config(dir.path(), &cfg);
    let o = gwevo(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let log: Vec<LogRecord> = read_jsonl(&cfg.output.join("run_log.jsonl")).unwrap();
    assert_eq!(log.len(), 9);
    assert!(cfg.output.join("tree.json").is_file() && cfg.output.join("best.dsl").is_file());
}

#[test]
fn unreachable_live_endpoint_is_an_outage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = mock_cfg(dir.path(), 5);
    cfg.backend = Backend::Live;
    cfg.generator.base_url = "http://127.0.0.1:9".into();
    cfg.generator.api_key_env = "GWEVO_TEST_KEY".into();
    cfg.generator.max_retries = 1;
    cfg.generator.backoff_ms = 1;
    let path = write_config(dir.path(), &cfg);
    let o = Command::new(env!("CARGO_BIN_EXE_gwevo"))
        .args(["run", "--config", path.to_str().unwrap()])
        .env("GWEVO_TEST_KEY", "k")
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(cfg.output.join("config.json").is_file());
}

#[test]
fn failing_seed_is_an_evaluation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = mock_cfg(dir.path(), 5);
    cfg.code_mode = CodeMode::External;
    cfg.executor = Some(ExternalExecutor { argv: vec!["sh".into(), "-c".into(), "exit 7".into()] });
    let path = write_config(dir.path(), &cfg);
    let o = gwevo(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn rerun_edge_needs_a_recorded_request() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mock_cfg(dir.path(), 2);
    let path = write_config(dir.path(), &cfg);
    assert_eq!(code(&gwevo(&["run", "--config", path.to_str().unwrap()])), 0);
    let run = cfg.output.to_str().unwrap();
    assert_eq!(code(&gwevo(&["rerun-edge", run, "--eval", "99", "--mock"])), 2);
    let o = gwevo(&["rerun-edge", run, "--eval", "1", "--n", "3", "--mock"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stats: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats["n"], 3);
    assert_eq!(stats["samples"].as_array().unwrap().len(), 3);
}
