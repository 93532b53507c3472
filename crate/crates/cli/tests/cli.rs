use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use goalcov::fixtures;
use goalcov::minimize::{traces_to_json, Trace};

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Work {
        let work = Work { dir: tempfile::tempdir().unwrap() };
        std::fs::create_dir(work.path("in")).unwrap();
        std::fs::write(work.path("in/FloatTools.class"), fixtures::float_tools()).unwrap();
        std::fs::write(work.path("in/Helper.class"), fixtures::helper()).unwrap();
        std::fs::write(work.path("goals.json"), fixtures::float_tools_goals_json()).unwrap();
        std::fs::write(work.path("suite.json"), fixtures::float_tools_suite_json(false)).unwrap();
        std::fs::write(work.path("suite-nan.json"), fixtures::float_tools_suite_json(true)).unwrap();
        work
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn goalcov(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_goalcov"))
            .args(args)
            .current_dir(self.dir.path())
            .env_remove("BLUECOV_DB")
            .output()
            .unwrap()
    }

    fn instrument(&self) -> Output {
        self.goalcov(&["instrument", "--goals", "goals.json", "--classes", "in/FloatTools.class", "--out", "out"])
    }
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn counts(out: &Output) -> Vec<u64> {
    json(out).as_array().unwrap().iter().map(|e| e["hitCount"].as_u64().unwrap()).collect()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn full_pipeline_reaches_complete_coverage() {
    let w = Work::new();
    let out = w.instrument();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&out);
    assert_eq!(summary["sites"], 9);
    assert_eq!(summary["classes"][0]["uids"], serde_json::json!([0, 1, 2, 3, 4, 5, 6, 7, 8]));
    assert!(w.path("blueCov.db").exists());
    assert!(w.path("out/FloatTools.class").exists());

    let out = w.goalcov(&["report"]);
    assert_eq!(counts(&out), [0; 9]);

    let out = w.goalcov(&["run", "--classes", "out/FloatTools.class", "--suite", "suite.json"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["results"].as_array().unwrap().len(), 3);
    assert_eq!(counts(&w.goalcov(&["report"])), [3, 3, 2, 1, 2, 1, 1, 1, 0]);

    let out = w.goalcov(&["uncovered"]);
    assert_eq!(json(&out), serde_json::json!(["FloatTools.sign:(F)I.coverage.9"]));

    // A generator trace reaching the NaN branch is the only one worth keeping.
    let report = w.goalcov(&["report", "--out", "report.json"]);
    assert_eq!(code(&report), 0);
    let traces = [
        Trace::new("again", ["FloatTools.sign:(F)I.coverage.1", "FloatTools.sign:(F)I.coverage.2"]),
        Trace::new("nan", ["FloatTools.sign:(F)I.coverage.1", "FloatTools.sign:(F)I.coverage.9"]),
    ];
    std::fs::write(w.path("traces.json"), traces_to_json(&traces)).unwrap();
    let out = w.goalcov(&["minimize", "--traces", "traces.json", "--report", "report.json"]);
    assert_eq!(code(&out), 0);
    let kept = json(&out);
    assert_eq!(kept.as_array().unwrap().len(), 1);
    assert_eq!(kept[0]["id"], "nan");

    let out = w.goalcov(&["run", "--classes", "out/FloatTools.class", "--suite", "suite-nan.json"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&w.goalcov(&["uncovered"])), serde_json::json!([]));
}

#[test]
fn second_run_doubles_counts() {
    let w = Work::new();
    w.instrument();
    for _ in 0..2 {
        w.goalcov(&["run", "--classes", "out/FloatTools.class", "--suite", "suite.json"]);
    }
    assert_eq!(counts(&w.goalcov(&["report"])), [6, 6, 4, 2, 4, 2, 2, 2, 0]);
}

#[test]
fn first_hit_flag_caps_counts() {
    let w = Work::new();
    w.instrument();
    w.goalcov(&["run", "--classes", "out/FloatTools.class", "--suite", "suite.json", "--first-hit"]);
    assert_eq!(counts(&w.goalcov(&["report"])), [1, 1, 1, 1, 1, 1, 1, 1, 0]);
}

#[test]
fn database_path_comes_from_the_environment() {
    let w = Work::new();
    let db = w.path("elsewhere.db");
    let out = Command::new(env!("CARGO_BIN_EXE_goalcov"))
        .args(["instrument", "--goals", "goals.json", "--classes", "in/FloatTools.class", "--out", "out"])
        .current_dir(w.dir.path())
        .env("BLUECOV_DB", &db)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(db.exists());
    assert!(!w.path("blueCov.db").exists());
    // An explicit flag wins over the variable.
    let out = w.goalcov(&["report", "--db", db.to_str().unwrap()]);
    assert_eq!(counts(&out), [0; 9]);
}

#[test]
fn failing_test_exits_with_one() {
    let w = Work::new();
    w.instrument();
    let wrong = fixtures::float_tools_suite_json(false).replace(r#""value":-1}"#, r#""value":5}"#);
    std::fs::write(w.path("wrong.json"), wrong).unwrap();
    let out = w.goalcov(&["run", "--classes", "out/FloatTools.class", "--suite", "wrong.json"]);
    assert_eq!(code(&out), 1);
    assert_eq!(json(&out)["results"][1]["status"], "fail");
    // Hits are still recorded.
    assert_eq!(counts(&w.goalcov(&["report"])), [3, 3, 2, 1, 2, 1, 1, 1, 0]);
}

#[test]
fn missing_goals_file_is_an_input_error() {
    let w = Work::new();
    let out = w.goalcov(&["instrument", "--goals", "nope.json", "--classes", "in/FloatTools.class", "--out", "out"]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["error"]["message"], "goals file not found");
    assert!(!w.path("blueCov.db").exists());
    assert!(!w.path("out").exists());
}

#[test]
fn missing_class_file_leaves_nothing_behind() {
    let w = Work::new();
    let out = w.goalcov(&[
        "instrument", "--goals", "goals.json", "--classes", "in/FloatTools.class", "in/Gone.class", "--out", "out",
    ]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["error"]["message"], "class file not found");
    assert!(!w.path("blueCov.db").exists());
    assert!(!w.path("out").exists());
}

#[test]
fn class_without_goals_is_copied_with_warnings() {
    let w = Work::new();
    let out = w.goalcov(&["instrument", "--goals", "goals.json", "--classes", "in/Helper.class", "--out", "out"]);
    assert_eq!(code(&out), 0);
    let summary = json(&out);
    assert_eq!(summary["warnings"].as_array().unwrap().len(), 9);
    assert_eq!(summary["sites"], 0);
    assert_eq!(std::fs::read(w.path("out/Helper.class")).unwrap(), fixtures::helper());
    // The goals are registered all the same.
    assert_eq!(counts(&w.goalcov(&["report"])), [0; 9]);
}

#[test]
fn corrupt_database_is_reported() {
    let w = Work::new();
    std::fs::write(w.path("blueCov.db"), b"garbage").unwrap();
    for cmd in [&["report"][..], &["uncovered"][..]] {
        let out = w.goalcov(cmd);
        assert_eq!(code(&out), 2);
        assert_eq!(json(&out)["error"]["kind"], "db_corrupt");
    }
    let out = w.goalcov(&["run", "--classes", "in/FloatTools.class", "--suite", "suite.json"]);
    assert_eq!(code(&out), 2);
    assert_eq!(std::fs::read(w.path("blueCov.db")).unwrap(), b"garbage");
}

#[test]
fn report_needs_an_existing_database() {
    let w = Work::new();
    let out = w.goalcov(&["report"]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["error"]["message"], "database not found");
}

#[test]
fn malformed_traces_are_rejected() {
    let w = Work::new();
    std::fs::write(w.path("traces.json"), "{not json").unwrap();
    let out = w.goalcov(&["minimize", "--traces", "traces.json"]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["error"]["kind"], "traces");
}

#[test]
fn minimize_writes_to_out() {
    let w = Work::new();
    let traces = [Trace::new("T1", ["g1", "g2", "g3"]), Trace::new("T2", ["g1"]), Trace::new("T3", ["g4"])];
    std::fs::write(w.path("traces.json"), traces_to_json(&traces)).unwrap();
    let out = w.goalcov(&["minimize", "--traces", "traces.json", "--out", "kept.json"]);
    assert_eq!(code(&out), 0);
    let kept: Value = serde_json::from_str(&std::fs::read_to_string(w.path("kept.json")).unwrap()).unwrap();
    let ids: Vec<_> = kept.as_array().unwrap().iter().map(|t| t["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["T1", "T3"]);
}

#[test]
fn reinstrumenting_keeps_uids() {
    let w = Work::new();
    w.instrument();
    let again = w.goalcov(&["instrument", "--goals", "goals.json", "--classes", "in/FloatTools.class", "--out", "out2"]);
    assert_eq!(json(&again)["classes"][0]["uids"], serde_json::json!([0, 1, 2, 3, 4, 5, 6, 7, 8]));
    assert_eq!(json(&w.goalcov(&["report"])).as_array().unwrap().len(), 9);
}
