use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn selforg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selforg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios/v1")
        .join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// JSON lines of stdout that carry `key`.
fn json_with(o: &Output, key: &str) -> Vec<serde_json::Value> {
    stdout(o)
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter(|v| v.get(key).is_some())
        .collect()
}

#[test]
fn persistent_signal_golden() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("trace.jsonl");
    let o = selforg(&[
        "run",
        "--config",
        path_str(&scenario("persistent-signal-n8.toml")),
        "--out",
        path_str(&out),
        "--check-invariants",
        "--bound",
        "weak16n",
        "--json",
    ]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let lines = std::fs::read_to_string(&out).unwrap().lines().count();
    assert_eq!(lines, 1 + 300);
    let reports = json_with(&o, "bound_checked");
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["passed"], true);
    assert!(reports[0]["unstable_round_count"].as_u64().unwrap() <= 128);
    assert!(json_with(&o, "rule").is_empty());
}

#[test]
fn silence_golden() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("trace.jsonl");
    let o = selforg(&[
        "run",
        "--config",
        path_str(&scenario("silence-after-signal-n8.toml")),
        "--out",
        path_str(&out),
        "--bound",
        "strong12n",
        "--bound",
        "reset3m",
        "--json",
    ]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let reports = json_with(&o, "bound_checked");
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r["passed"] == true));
    assert_eq!(reports[0]["t0"], 50);
    assert!(reports[0]["stabilized_at"].as_u64().unwrap() <= 50 + 96);
}

#[test]
fn every_bundled_scenario_is_clean() {
    let dir = TempDir::new().unwrap();
    let mut names: Vec<_> = std::fs::read_dir(scenario(""))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    names.sort();
    assert!(names.len() >= 4);
    for path in names {
        let out = dir.path().join("t.jsonl");
        let o = selforg(&[
            "run",
            "--config",
            path_str(&path),
            "--out",
            path_str(&out),
            "--check-invariants",
        ]);
        assert!(
            o.status.success(),
            "{}: {}{}",
            path.display(),
            stdout(&o),
            stderr(&o)
        );
        assert!(stdout(&o).contains("0 hard violations"));
        let r = selforg(&["replay", "--trace", path_str(&out)]);
        assert!(r.status.success(), "{}: {}", path.display(), stdout(&r));
    }
}

#[test]
fn bad_distribution_names_the_field() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(scenario("persistent-signal-n8.toml"))
        .unwrap()
        .replace(r#"1 = ["0", "1"]"#, r#"1 = ["1", "1"]"#);
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, text).unwrap();
    let o = selforg(&[
        "run",
        "--config",
        path_str(&config),
        "--out",
        path_str(&dir.path().join("t")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("instance.response.1: weights sum to 2"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn unsatisfiable_bound_fails_the_run() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(scenario("persistent-signal-n8.toml"))
        .unwrap()
        .replace("horizon = 300", "horizon = 5");
    let config = dir.path().join("short.toml");
    std::fs::write(&config, text).unwrap();
    let o = selforg(&[
        "run",
        "--config",
        path_str(&config),
        "--out",
        path_str(&dir.path().join("t")),
        "--bound",
        "strong12n",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn fuzz_small_run_is_clean() {
    let o = selforg(&[
        "fuzz", "--n-min", "2", "--n-max", "10", "--rounds", "100", "--seeds", "12",
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("hard violations: 0"));
}

#[test]
fn fuzz_rejects_zero_seeds() {
    let o = selforg(&["fuzz", "--seeds", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seeds"));
}

#[test]
fn fuzz_reports_injected_fault() {
    let o = selforg(&[
        "fuzz",
        "--seeds",
        "1",
        "--rounds",
        "100",
        "--inject-fault",
        "skip-ttl-decrement",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stdout(&o).contains("seed 0:") && stdout(&o).contains("L6-recurrence"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn report_is_byte_stable() {
    let dir = TempDir::new().unwrap();
    let config = scenario("randomized-half-n256.toml");
    let mut csvs = Vec::new();
    for i in 0..2 {
        let trace = dir.path().join(format!("t{i}.jsonl"));
        let csv = dir.path().join(format!("r{i}.csv"));
        assert!(selforg(&[
            "run",
            "--config",
            path_str(&config),
            "--out",
            path_str(&trace)
        ])
        .status
        .success());
        let o = selforg(&[
            "report",
            "--trace",
            path_str(&trace),
            "--csv",
            path_str(&csv),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        csvs.push(std::fs::read(&csv).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.pop().unwrap()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("t,signal,witnesses,m_star,e_star,color_1,color_2,stable,locked")
    );
    assert_eq!(lines.count(), 60);
}

#[test]
fn version_mismatch_is_reported() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("t.jsonl");
    assert!(selforg(&[
        "run",
        "--config",
        path_str(&scenario("silence-after-signal-n8.toml")),
        "--out",
        path_str(&trace)
    ])
    .status
    .success());
    let text =
        std::fs::read_to_string(&trace)
            .unwrap()
            .replacen("\"version\":1", "\"version\":2", 1);
    std::fs::write(&trace, text).unwrap();
    let o = selforg(&[
        "report",
        "--trace",
        path_str(&trace),
        "--csv",
        path_str(&dir.path().join("r.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("expected 1, found 2"), "{}", stderr(&o));
}

#[test]
fn replay_detects_tampering() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("t.jsonl");
    assert!(selforg(&[
        "run",
        "--config",
        path_str(&scenario("persistent-signal-n8.toml")),
        "--out",
        path_str(&trace)
    ])
    .status
    .success());
    let o = selforg(&["replay", "--trace", path_str(&trace)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("identical"));

    let mut lines: Vec<String> = std::fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    let mut row: serde_json::Value = serde_json::from_str(&lines[11]).unwrap();
    let flipped = !row["stable"].as_bool().unwrap();
    row["stable"] = flipped.into();
    lines[11] = row.to_string();
    std::fs::write(&trace, lines.join("\n") + "\n").unwrap();
    let o = selforg(&["replay", "--trace", path_str(&trace)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stdout(&o).contains("diverged at round 10"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn hardness_demo_command() {
    let o = selforg(&[
        "hardness",
        "--n",
        "100",
        "--weights",
        "1/2,1/2",
        "--horizon",
        "400",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["max_distinct_states"], 2);
    assert_eq!(v["approximates"], false);
    assert_eq!(v["case_table_bound"], "49/100");
    let o = selforg(&["hardness", "--n", "4", "--weights", "1,0"]);
    assert_eq!(o.status.code(), Some(2));
}
