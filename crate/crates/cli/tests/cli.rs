use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mfg_cli::commands::{self, Summary};
use mfg_cli::config::{ExplorationConfig, InitialConfig, LearnerConfig, ModelSource, Preset, RunConfig};
use mfg_core::io::{self, ModelDoc};
use mfg_core::model::example1;

fn mfg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfg")).args(args).current_dir(dir).env("MFG_LOG", "error").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Example 1 on a coarse grid with few paths, for speed.
fn small_config() -> RunConfig {
    let mut cfg = Preset::Example1.config();
    cfg.trajectory.dt = 1e-3;
    cfg.trajectory.samples = 300;
    cfg.trajectory.exploration = ExplorationConfig::Sinusoid { amplitude: 2.0, frequency: 7.0 };
    cfg.population.agents = 20;
    cfg.population.t_end = 1.0;
    cfg
}

fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> String {
    io::write_json(&dir.join(name), cfg).unwrap();
    name.to_string()
}

#[test]
fn file_pipeline_equals_in_process_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    assert_eq!(code(&mfg(&["collect", "--config", &path, "--out", "run"], tmp.path())), 0);
    let out = mfg(&["learn", "--config", &path, "--data", "run/data.json", "--out", "run"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("relative error K"));
    let from_files: Summary = io::read_json(&tmp.path().join("run/summary.json")).unwrap();

    let res = cfg.resolve().unwrap();
    let collected = commands::collect(&res).unwrap();
    let fused = commands::learn(&res, &collected.data).unwrap();
    assert_eq!(from_files, fused.summary);
    assert!(tmp.path().join("run/history.csv").exists());
}

#[test]
fn same_config_and_seed_give_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "cfg.json", &small_config());
    for dir in ["a", "b"] {
        assert_eq!(code(&mfg(&["collect", "--config", &path, "--out", dir], tmp.path())), 0);
    }
    for file in ["data.json", "trajectory.csv", "trajectory.json"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
    assert_eq!(code(&mfg(&["collect", "--config", &path, "--out", "c", "--seed", "9"], tmp.path())), 0);
    assert_ne!(fs::read(tmp.path().join("a/data.json")).unwrap(), fs::read(tmp.path().join("c/data.json")).unwrap());
}

#[test]
fn mismatched_data_is_a_config_error_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "cfg.json", &small_config());
    assert_eq!(code(&mfg(&["collect", "--config", &path, "--out", "e1"], tmp.path())), 0);
    let out = mfg(&["learn", "--config", "example2-pi", "--data", "e1/data.json", "--out", "e2"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(!tmp.path().join("e2").exists());
}

#[test]
fn degenerate_data_is_a_rank_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.trajectory.samples = 1;
    cfg.trajectory.exploration = ExplorationConfig::None;
    cfg.trajectory.initial = InitialConfig::Fixed(vec![0.0, 0.0]);
    let model = example1::<f64>().model;
    let noiseless = ModelDoc { c: vec![vec![0.0; 2]; 2], ..ModelDoc::from_model(&model) };
    cfg.model = ModelSource::Inline(noiseless);
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    let out = mfg(&["collect", "--config", &path, "--out", "d"], tmp.path());
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("NOT satisfied"), "{}", stdout(&out));
    let out = mfg(&["learn", "--config", &path, "--data", "d/data.json", "--out", "d"], tmp.path());
    assert_eq!(code(&out), 4);
    assert!(!tmp.path().join("d/summary.json").exists());
}

#[test]
fn iteration_budget_exhaustion_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    if let LearnerConfig::Pi { max_iter, .. } = &mut cfg.learner {
        *max_iter = 1;
    }
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    assert_eq!(code(&mfg(&["collect", "--config", &path, "--out", "r"], tmp.path())), 0);
    assert_eq!(code(&mfg(&["learn", "--config", &path, "--data", "r/data.json", "--out", "r"], tmp.path())), 3);
}

#[test]
fn bad_inputs_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&mfg(&["repro", "example3"], tmp.path())), 2);
    assert_eq!(code(&mfg(&["collect", "--config", "missing.json"], tmp.path())), 2);
    fs::write(tmp.path().join("broken.json"), "{\"model\": \"example1\"}").unwrap();
    assert_eq!(code(&mfg(&["collect", "--config", "broken.json"], tmp.path())), 2);
}

#[test]
fn population_reports_gap_and_divergence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    let reference = example1::<f64>().reference.gains();
    io::write_json(&tmp.path().join("gains.json"), &io::GainsDoc::from_gains(&reference)).unwrap();
    let out = mfg(&["population", "--config", &path, "--gains", "gains.json", "--out", "p"], tmp.path());
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("consistency gap"));
    for file in ["average.csv", "agents.csv", "population.json"] {
        assert!(tmp.path().join("p").join(file).exists(), "{file}");
    }
    let agents = fs::read_to_string(tmp.path().join("p/agents.csv")).unwrap();
    // 20 agents, every 10th of 1001 grid points, plus the header.
    assert_eq!(agents.lines().count(), 20 * 101 + 1);

    let zero = io::GainsDoc { k: vec![vec![0.0, 0.0]], k_y: vec![vec![0.0, 0.0]] };
    io::write_json(&tmp.path().join("zero.json"), &zero).unwrap();
    let mut long = cfg.clone();
    long.population.t_end = 5.0;
    let path = write_config(tmp.path(), "long.json", &long);
    assert_eq!(code(&mfg(&["population", "--config", &path, "--gains", "zero.json", "--out", "z"], tmp.path())), 3);
}

#[test]
fn single_noiseless_agent_matches_the_aggregate() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    let ex = example1::<f64>();
    cfg.model = ModelSource::Inline(ModelDoc { c: vec![vec![0.0; 2]; 2], ..ModelDoc::from_model(&ex.model) });
    cfg.population.agents = 1;
    cfg.population.initial = Some(InitialConfig::Fixed(vec![1.0, 1.0]));
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    let k = mfg_core::io::to_rows(&ex.reference.k);
    io::write_json(&tmp.path().join("gains.json"), &io::GainsDoc { k: k.clone(), k_y: k }).unwrap();
    assert_eq!(code(&mfg(&["population", "--config", &path, "--gains", "gains.json", "--out", "p"], tmp.path())), 0);
    let sidecar: serde_json::Value = io::read_json(&tmp.path().join("p/population.json")).unwrap();
    assert!(sidecar["consistency_gap"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn repro_writes_report_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mfg(&["repro", "example1", "--samples", "2000", "--out", "r"], tmp.path());
    let text = stdout(&out);
    assert!(matches!(code(&out), 0 | 1), "{text}");
    assert!(text.contains("ground truth vs published"));
    assert!(text.contains("consistency gap"));
    let cfg: RunConfig = io::read_json(&tmp.path().join("r/config.json")).unwrap();
    assert_eq!(cfg.trajectory.samples, 2000);
    let report: serde_json::Value = io::read_json(&tmp.path().join("r/report.json")).unwrap();
    assert_eq!(report["example"], "example1");
    assert!(report["checks"].as_array().unwrap().len() >= 5);
}
