use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tristage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tristage")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(dir: &Path, extra: &[&str]) -> Value {
    let rp = dir.join("report.json");
    let mut args = vec!["run", "--report", path(&rp)];
    args.extend_from_slice(extra);
    let out = tristage(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_str(&std::fs::read_to_string(rp).unwrap()).unwrap()
}

#[test]
fn hundred_honest_trials() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(dir.path(), &["--trials", "100", "--seed", "42"]);
    assert_eq!(r["recovered"], 100);
    assert_eq!(r["aborted"], 0);
    assert_eq!(r["qber_mean"], 0.0);
    assert_eq!(r["abort_histogram"], serde_json::json!({}));
    assert_eq!(r["schema"], "tristage-report/1");
}

#[test]
fn authenticated_mitm_report() {
    let dir = tempfile::tempdir().unwrap();
    let r = report(dir.path(), &["--trials", "30", "--adversary", "mitm"]);
    let total: u64 = r["abort_histogram"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 30);
    assert_eq!(r["eve_recoveries"], 0);
}

#[test]
fn bare_mode_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let rp = dir.path().join("report.json");
    let out = tristage(&["run", "--auth", "off", "--adversary", "mitm", "--trials", "5", "--report", path(&rp)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("WARNING"));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(rp).unwrap()).unwrap();
    assert_eq!(r["eve_recoveries"], 5);
    assert!(r["warning"].as_str().unwrap().contains("authentication disabled"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tristage(&["run", "--redundancy", "2"]).status.code(), Some(2));
    assert_eq!(tristage(&["run", "--noise", "-0.1"]).status.code(), Some(2));
    assert_eq!(tristage(&["run", "--adversary", "alien"]).status.code(), Some(2));
    assert_eq!(tristage(&["run", "--bits", "01", "--length", "4"]).status.code(), Some(2));
    let missing = dir.path().join("nope.toml");
    assert_eq!(tristage(&["run", "--config", path(&missing)]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "redundancy = 4\n").unwrap();
    assert_eq!(tristage(&["run", "--config", path(&bad)]).status.code(), Some(2));
}

#[test]
fn config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "trials = 6\nseed = 7\nadversary = \"suppress\"\nwindow-ms = 200\ndelay-ms = 900\nbits = \"110\"\n",
    )
    .unwrap();
    let r = report(dir.path(), &["--config", path(&cfg)]);
    assert_eq!(r["trials"], 6);
    assert_eq!(r["abort_histogram"]["StaleTimestamp"], 6);

    // A flag overrides the file: a delay inside the window is harmless.
    let r = report(dir.path(), &["--config", path(&cfg), "--delay-ms", "100"]);
    assert_eq!(r["recovered"], 6);
}

#[test]
fn trace_events_follow_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let tp = dir.path().join("t.jsonl");
    let out = tristage(&["run", "--trials", "3", "--adversary", "replay", "--trace", path(&tp)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&tp).unwrap();
    let mut last = (0, 0);
    for line in text.lines() {
        let e: Value = serde_json::from_str(line).unwrap();
        assert_eq!(e["schema"], "tristage-trace/1");
        for key in ["trial", "hop", "label", "sender", "receiver", "sent_at_ms", "delivered_at_ms", "auth", "payload"] {
            assert!(e.get(key).is_some(), "missing {key} in {line}");
        }
        assert!(e["payload"].get("amplitudes").is_none());
        let key = (e["trial"].as_u64().unwrap(), e["sent_at_ms"].as_u64().unwrap());
        assert!(key >= last, "events out of order");
        last = key;
    }
    // Replays abort, and the abort lands on a hop.
    assert_eq!(text.lines().filter(|l| l.contains("\"abort\":{")).count(), 3);
}

#[test]
fn explain_narrates_a_trial() {
    let dir = tempfile::tempdir().unwrap();
    let tp = dir.path().join("t.jsonl");
    assert!(tristage(&["run", "--trials", "2", "--trace", path(&tp)]).status.success());
    let out = tristage(&["explain", "--trace", path(&tp), "--trial", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in ["hop 1  A → B", "hop 2  B → KDC", "hop 3  KDC → A", "hop 4  A → B", "U_B U_A(X)", "ID_A = "] {
        assert!(text.contains(needle), "missing {needle:?} in\n{text}");
    }

    let missing = tristage(&["explain", "--trace", path(&tp), "--trial", "9"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("trial 9"));
}

#[test]
fn explain_shows_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let tp = dir.path().join("t.jsonl");
    assert!(tristage(&["run", "--adversary", "mitm", "--trace", path(&tp)]).status.success());
    let out = tristage(&["explain", "--trace", path(&tp), "--trial", "0"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("ABORT at step"), "{text}");
    assert!(text.contains("actually"), "{text}");
}
