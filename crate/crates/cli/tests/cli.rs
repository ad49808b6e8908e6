use std::path::Path;
use std::process::{Command, Output};

const TRIANGLE: &str = r#"{"n": 3, "edges": [[0, 1, 1.0], [1, 2, 0.5], [0, 2, 2.0]]}"#;

fn vrjp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrjp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("VRJP_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn graph_file(dir: &Path) -> String {
    let path = dir.join("g.json");
    std::fs::write(&path, TRIANGLE).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_graph_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = vrjp(&["sample-beta", "--graph", "no/such/file.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(vrjp(&["simulate", "--process", "teleport"], dir.path()).status.code(), Some(2));
    assert_eq!(vrjp(&["sample-beta"], dir.path()).status.code(), Some(2));
    let g = graph_file(dir.path());
    let both = vrjp(&["simulate", "--process", "vrjp", "--graph", &g, "--horizon", "1", "--steps", "3"], dir.path());
    assert_eq!(both.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let g = graph_file(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = vrjp(&["simulate", "--process", "vrjp", "--graph", &g, "--horizon", "10", "--seed", "1"], out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let x = std::fs::read(a.join("trajectory.csv")).unwrap();
    assert_eq!(x, std::fs::read(b.join("trajectory.csv")).unwrap());
    let text = String::from_utf8(x).unwrap();
    assert!(text.starts_with("step,vertex,entry_time\n0,0,0\n"));

    let ma: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let mb: serde_json::Value = serde_json::from_slice(&std::fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["input_hash"], mb["input_hash"]);
    assert_eq!(ma["seed"], 1);
}

#[test]
fn discrete_processes_leave_entry_time_blank() {
    let dir = tempfile::tempdir().unwrap();
    let g = graph_file(dir.path());
    let o = vrjp(&["simulate", "--process", "errw", "--graph", &g, "--steps", "5", "--a", "1"], dir.path());
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[1..].iter().all(|l| l.ends_with(',')));

    let o = vrjp(&["simulate", "--process", "quenched", "--dim", "2", "--radius", "2", "--steps", "20"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sample_beta_writes_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let o = vrjp(&["sample-beta", "--dim", "2", "--radius", "1", "--n", "25", "--seed", "3"], dir.path());
    assert!(o.status.success());
    let mut r = csv::Reader::from_path(dir.path().join("beta.csv")).unwrap();
    assert_eq!(r.headers().unwrap().len(), 9);
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().flat_map(|r| r.iter()).all(|v| v.parse::<f64>().unwrap() > 0.0));
}

#[test]
fn green_reports_small_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let g = graph_file(dir.path());
    let o = vrjp(&["green", "--graph", &g, "--subset", "0,1", "--seed", "2"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("green.json")).unwrap()).unwrap();
    assert_eq!(v["psi"].as_array().unwrap().len(), 2);
    assert!(v["max_residual"].as_f64().unwrap() <= 1e-9);
    assert!(v["gamma"].as_f64().unwrap() > 0.0);
    assert_eq!(vrjp(&["green", "--graph", &g], dir.path()).status.code(), Some(2));
}

#[test]
fn experiment_runs_from_toml() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.json"), r#"{"n": 2, "edges": [[0, 1, 1.0]]}"#).unwrap();
    let cfg = dir.path().join("cosh.toml");
    std::fs::write(
        &cfg,
        "experiment = \"cosh-moment\"\nseed = 4\n\n[graph]\nfile = \"g.json\"\n\n[params]\neta = 0.3\ni = 0\nj = 1\nn_samples = 500\n",
    )
    .unwrap();
    let o = vrjp(&["experiment", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert!(text.starts_with("name,mean,stderr,n,flag\ncosh-moment/K=1,"));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 4);

    std::fs::write(&cfg, "experiment = \"cosh-moment\"\nsurprise = 1\n").unwrap();
    let o = vrjp(&["experiment", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn quick_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = vrjp(&["verify", "--quick", "--seed", "7"], dir.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("[PASS] C01"));
    assert!(dir.path().join("verify.csv").exists());
}
