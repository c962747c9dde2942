use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ucmcf(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ucmcf"))
        .args(args)
        .env("UCMCF_OUT", out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&ucmcf(&["--bogus"], tmp.path())), 2);
    assert_eq!(code(&ucmcf(&["run-regularized", "--init", "square", "--t-end", "0.1"], tmp.path())), 2);
    let o = ucmcf(&["run-normalized", "--init", "circle", "--t-end", "1", "--epsilon", "0.1"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon"));
    let o = ucmcf(&["preset", "nope"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("shrinking-circle"));
}

#[test]
fn self_test_reports_one_event() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ucmcf(&["self-test"], tmp.path());
    assert_eq!(code(&o), 1);
    let events = fs::read_to_string(tmp.path().join("events.jsonl")).unwrap();
    assert_eq!(events.lines().count(), 1);
    assert!(events.contains("mass_slope"));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "init = \"circle:1\"\nn = 64\ndt = 0.01\nt_end = 0.02\n").unwrap();
    let out = tmp.path().join("o");
    let o = ucmcf(&["run-original", "--config", cfg.to_str().unwrap(), "--dt", "0.001", "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["config"]["dt"], 0.001);
    assert_eq!(s["config"]["n"], 64);
    assert_eq!(s["steps"], 20);
    fs::write(&cfg, "init = \"circle\"\nt_end = 0.1\nbogus = 3\n").unwrap();
    assert_eq!(code(&ucmcf(&["run-original", "--config", cfg.to_str().unwrap()], tmp.path())), 2);
}

#[test]
fn identical_configs_write_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |dir: &str| {
        vec![
            "run-normalized".to_string(),
            "--init".into(),
            "perturbed:0.05,3,rand".into(),
            "--seed".into(),
            "7".into(),
            "--n".into(),
            "64".into(),
            "--t-end".into(),
            "0.2".into(),
            "--snapshot-every".into(),
            "50".into(),
            "--out".into(),
            tmp.path().join(dir).to_string_lossy().into_owned(),
        ]
    };
    let run = |a: Vec<String>| {
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        code(&ucmcf(&a, tmp.path()))
    };
    assert_eq!(run(args("a")), 0);
    assert_eq!(run(args("b")), 0);
    let mut seq = args("c");
    seq.insert(0, "--sequential".into());
    assert_eq!(run(seq), 0);
    let a = fs::read(tmp.path().join("a/series.csv")).unwrap();
    assert_eq!(a, fs::read(tmp.path().join("b/series.csv")).unwrap());
    assert_eq!(a, fs::read(tmp.path().join("c/series.csv")).unwrap());
    assert!(tmp.path().join("a/snapshots/step_00000050.json").exists());
    assert_eq!(summary(&tmp.path().join("a"))["config_hash"], summary(&tmp.path().join("c"))["config_hash"]);
}

#[test]
fn env_var_sets_the_default_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ucmcf(&["run-classical", "--init", "ellipse:2,1", "--n", "32", "--dt", "1e-4", "--t-end", "0.001"], tmp.path());
    assert_eq!(code(&o), 0);
    assert!(tmp.path().join("series.csv").exists());
    assert!(tmp.path().join("events.jsonl").exists());
}

#[test]
fn presets_run_as_child_processes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ucmcf(&["preset", "density-contrast", "stationary-rigidity", "--jobs", "2"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    for name in ["density-contrast", "stationary-rigidity"] {
        let s = summary(&tmp.path().join(name));
        assert_eq!(s["passed"], true);
        assert!(!s["checks"].as_array().unwrap().is_empty());
    }
    assert!(tmp.path().join("density-contrast/classical/series.csv").exists());
    assert_eq!(code(&ucmcf(&["list-presets"], tmp.path())), 0);
}

#[test]
fn stationary_check_on_reference_circle() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&ucmcf(&["stationary-check", "--init", "circle", "--n", "128"], tmp.path())), 0);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("stationary.json")).unwrap()).unwrap();
    assert!(r["report"]["residual"].as_f64().unwrap() < 1e-9);
}
