use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sphere_minjerk::analysis::EMPTY_MARKER;
use sphere_minjerk::TrialLog;

const SHORT_PROTOCOL: &str = "[protocol]\ntest_pre = 6\ntraining = 12\ntest_post = 6\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sphere-minjerk"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Column `name` of a CSV file, for rows where `filter(row)` holds.
fn column(csv: &str, name: &str, filter: impl Fn(&[&str]) -> bool) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|r| filter(r))
        .map(|r| r[k].parse().unwrap())
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn solve_reports_geodesic_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["solve", "--from", "0", "--to", "1", "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("geodesic deviation"));
    }
    for name in ["solution.csv", "reference.csv", "residuals.json"] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name} differs between runs");
    }
    let res: Value = serde_json::from_str(&std::fs::read_to_string(a.join("residuals.json")).unwrap()).unwrap();
    assert_eq!(res["converged"], Value::Bool(true));
    assert!(res["geodesic_deviation_over_radius"].as_f64().unwrap() < 1e-3);
    let header = std::fs::read_to_string(a.join("solution.csv")).unwrap();
    assert!(header.lines().next().unwrap().ends_with(",speed,lambda"));
}

#[test]
fn equal_or_unknown_targets_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let same = run(&["solve", "--from", "0", "--to", "0", "--out", p(&out)]);
    assert_eq!(same.status.code(), Some(2));
    assert!(stderr(&same).contains("must differ"));
    assert!(!out.exists());
    assert_eq!(run(&["solve", "--from", "0", "--to", "3"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--from", "1"]).status.code(), Some(2));
    assert_eq!(
        run(&["solve", "--from", "0", "--to", "1", "--tol", "-1"]).status.code(),
        Some(2)
    );
}

#[test]
fn unconverged_solve_exits_one_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[solver]\nmax_nodes = 90\nmax_refinements = 1\n");
    let o = run(&[
        "--config",
        p(&cfg),
        "solve",
        "--from",
        "0",
        "--to",
        "2",
        "--tol",
        "1e-12",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("constraint residual"));
    assert!(dir.path().join("residuals.json").exists());
}

#[test]
fn config_problems_are_listed_exhaustively() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[sphere]\nradius_cm = 0\n[servo]\nsample_rate_hz = 300\n[subject]\nlearning_rate = -1\n[protocol]\ntest_edge = [1, 1]\n",
    );
    let o = run(&["--config", p(&cfg), "simulate", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for needle in ["radius", "sample_rate", "learning_rate", "test_edge"] {
        assert!(err.contains(needle), "missing {needle} in {err}");
    }

    let typo = write_config(dir.path(), "[sphere]\nradius = 20\n");
    let o = run(&["--config", p(&typo), "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("radius"));
}

#[test]
fn simulated_log_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT_PROTOCOL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["--config", p(&cfg), "simulate", "--seed", "7", "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("24 movements (test_pre 6, training 12, test_post 6)"));
    }
    let bytes = std::fs::read(a.join("subject-0007.log")).unwrap();
    assert_eq!(bytes, std::fs::read(b.join("subject-0007.log")).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    let log = TrialLog::parse(&text).unwrap();
    assert_eq!(log.header.seed, 7);
    assert_eq!(log.to_text(), text);
}

#[test]
fn default_simulation_has_full_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--seed", "7", "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("420 movements (test_pre 60, training 300, test_post 60)"));
}

#[test]
fn stationary_control_does_not_improve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("[subject]\nlearning_rate = 0.0\n{SHORT_PROTOCOL}"));
    let logs = dir.path().join("logs");
    assert!(run(&["--config", p(&cfg), "simulate", "--out", p(&logs)])
        .status
        .success());
    let out = dir.path().join("a");
    let o = run(&[
        "--config",
        p(&cfg),
        "analyze",
        p(&logs.join("subject-0001.log")),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let pre = median(column(&csv, "apd", |r| r[1] == "test_pre"));
    let post = median(column(&csv, "apd", |r| r[1] == "test_post"));
    assert!((pre - post).abs() < 0.02 * pre, "pre {pre} post {post}");
}

#[test]
fn ideal_subject_metrics_vanish() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "[subject]\npath_bias = 0.0\npenetration_bias_mm = 0.0\ntiming_distortion = 0.0\nmotor_noise_s = 0.0\n{SHORT_PROTOCOL}"
        ),
    );
    let logs = dir.path().join("logs");
    assert!(run(&["--config", p(&cfg), "simulate", "--out", p(&logs)])
        .status
        .success());
    let out = dir.path().join("a");
    let o = run(&[
        "--config",
        p(&cfg),
        "analyze",
        p(&logs.join("subject-0001.log")),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let all = |_: &[&str]| true;
    for name in ["apd", "acf_n", "cfv_n2"] {
        let m = median(column(&csv, name, all));
        assert!(m < 1e-6, "{name} median {m}");
    }
    // A degree-8 fit cannot follow arc motion exactly, so VPE keeps a fit
    // floor of about 1% of the path length on these 105 degree arcs.
    let vpe = median(column(&csv, "vpe_m", all));
    let length = median(column(&csv, "path_length_m", all));
    assert!(vpe < 0.015 * length, "vpe median {vpe}");
}

#[test]
fn empty_log_reports_marker() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT_PROTOCOL);
    let logs = dir.path().join("logs");
    assert!(run(&["--config", p(&cfg), "simulate", "--out", p(&logs)])
        .status
        .success());
    let text = std::fs::read_to_string(logs.join("subject-0001.log")).unwrap();
    let mut log = TrialLog::parse(&text).unwrap();
    log.samples.clear();
    log.header.movements.clear();
    let empty = dir.path().join("empty.log");
    std::fs::write(&empty, log.to_text()).unwrap();

    let out = dir.path().join("a");
    let o = run(&["analyze", p(&empty), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains(EMPTY_MARKER));
    assert!(std::fs::read_to_string(out.join("report.txt"))
        .unwrap()
        .contains(EMPTY_MARKER));
    let again = run(&["report", p(&out)]);
    assert!(stdout(&again).contains(EMPTY_MARKER));
}

#[test]
fn malformed_log_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT_PROTOCOL);
    let logs = dir.path().join("logs");
    assert!(run(&["--config", p(&cfg), "simulate", "--out", p(&logs)])
        .status
        .success());
    let text = std::fs::read_to_string(logs.join("subject-0001.log")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[4] = "0.03,1,2,not-a-number,0,0,0,test_pre,0,forward";
    let bad = dir.path().join("bad.log");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = run(&["analyze", p(&bad), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.log:5:"), "{}", stderr(&o));
}

#[test]
fn population_batch_shows_learning() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("logs");
    let o = run(&["simulate", "--seed", "1", "--count", "20", "--out", p(&logs)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut files: Vec<PathBuf> = std::fs::read_dir(&logs).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 20);

    let out = dir.path().join("a");
    let mut args = vec!["analyze".to_string(), "--out".to_string(), p(&out).to_string()];
    args.extend(files.iter().map(|f| p(f).to_string()));
    let o = bin().args(&args).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));

    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let tests = summary["tests"].as_array().unwrap();
    for metric in ["apd", "acf", "cfv", "vpe"] {
        for comparison in ["training", "test"] {
            let t = tests
                .iter()
                .find(|t| t["metric"] == metric && t["comparison"] == comparison)
                .unwrap();
            let pv = t["wilcoxon"]["p_value"].as_f64().unwrap();
            assert!(pv < 0.05, "{metric} {comparison} p = {pv}");
            assert!(t["post_mean"].as_f64() < t["pre_mean"].as_f64());
        }
    }
    for name in [
        "metrics.csv",
        "plot_metric_trials.csv",
        "plot_velocity.csv",
        "plot_paths.csv",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }

    let report = run(&["report", p(&out.join("summary.json"))]);
    assert!(report.status.success());
    assert_eq!(
        stdout(&report),
        std::fs::read_to_string(out.join("report.txt")).unwrap()
    );
}
