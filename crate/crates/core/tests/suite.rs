use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use goalcov::fixtures;
use goalcov::minijvm::{parse_suite, run_suite_with, TestStatus};
use goalcov::{
    assign_uids, generate_report, instrument_class, parse_class, parse_goals, run_suite, uncovered, ClassModel,
    HitCountDb, SessionRecorder, Vm,
};

/// Instruments FloatTools into a fresh database at `db` and returns the class.
fn prepare(db: &Path) -> ClassModel {
    let goals = parse_goals(&fixtures::float_tools_goals_json()).unwrap();
    let mut store = HitCountDb::default();
    let uids = assign_uids(&goals, &mut store);
    store.save(db).unwrap();
    let out = instrument_class(&fixtures::float_tools(), &goals, &uids).unwrap();
    parse_class(&out.bytes).unwrap()
}

fn counts(db: &Path) -> Vec<u64> {
    generate_report(&HitCountDb::load(db).unwrap()).counts()
}

#[test]
fn three_inputs_give_the_listed_counts() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("blueCov.db");
    let class = prepare(&db);
    let tests = parse_suite(&fixtures::float_tools_suite_json(false)).unwrap();
    let report = run_suite(vec![class], &tests, &db, false).unwrap();
    assert!(report.all_passed(), "{report:?}");
    assert_eq!(counts(&db), [3, 3, 2, 1, 2, 1, 1, 1, 0]);
    let report = generate_report(&HitCountDb::load(&db).unwrap());
    assert_eq!(uncovered(&report), ["FloatTools.sign:(F)I.coverage.9"]);
}

#[test]
fn nan_input_covers_the_last_goal() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("blueCov.db");
    let class = prepare(&db);
    let tests = parse_suite(&fixtures::float_tools_suite_json(true)).unwrap();
    let report = run_suite(vec![class], &tests, &db, false).unwrap();
    assert!(report.all_passed());
    assert_eq!(report.results[3].actual, "-2");
    assert_eq!(counts(&db), [4, 4, 3, 1, 3, 1, 2, 1, 1]);
    assert!(uncovered(&generate_report(&HitCountDb::load(&db).unwrap())).is_empty());
}

#[test]
fn second_run_adds_to_the_first() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("blueCov.db");
    let class = prepare(&db);
    let tests = parse_suite(&fixtures::float_tools_suite_json(false)).unwrap();
    run_suite(vec![class.clone()], &tests, &db, false).unwrap();
    run_suite(vec![class], &tests, &db, false).unwrap();
    assert_eq!(counts(&db), [6, 6, 4, 2, 4, 2, 2, 2, 0]);
}

#[test]
fn first_hit_mode_caps_counts() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("blueCov.db");
    let class = prepare(&db);
    let tests = parse_suite(&fixtures::float_tools_suite_json(false)).unwrap();
    run_suite(vec![class], &tests, &db, true).unwrap();
    assert_eq!(counts(&db), [1, 1, 1, 1, 1, 1, 1, 1, 0]);
}

#[test]
fn failing_expectation_does_not_stop_the_suite() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("blueCov.db");
    let class = prepare(&db);
    let text = fixtures::float_tools_suite_json(false).replace(r#""value":-1}"#, r#""value":7}"#);
    let tests = parse_suite(&text).unwrap();
    let report = run_suite(vec![class], &tests, &db, false).unwrap();
    let statuses: Vec<_> = report.results.iter().map(|r| r.status).collect();
    assert_eq!(statuses, [TestStatus::Pass, TestStatus::Fail, TestStatus::Pass]);
    assert_eq!(counts(&db), [3, 3, 2, 1, 2, 1, 1, 1, 0]);
}

#[test]
fn unknown_method_is_an_error_result() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("blueCov.db");
    let class = prepare(&db);
    let text = fixtures::float_tools_suite_json(false).replacen(r#""method":"sign""#, r#""method":"nope""#, 1);
    let tests = parse_suite(&text).unwrap();
    let report = run_suite(vec![class], &tests, &db, false).unwrap();
    assert_eq!(report.results[0].status, TestStatus::Error);
    assert_eq!(report.passed(), 2);
}

/// A panic in the per-test callback after the second test still leaves that
/// test's hits in the database.
#[test]
fn hits_survive_a_panic_mid_suite() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("blueCov.db");
    let class = prepare(&db);
    let tests = parse_suite(&fixtures::float_tools_suite_json(false)).unwrap();
    let mut seen = 0;
    let r = catch_unwind(AssertUnwindSafe(|| {
        run_suite_with(vec![class.clone()], &tests, &db, false, |_| {
            seen += 1;
            if seen == 2 {
                panic!("harness aborted");
            }
        })
    }));
    assert!(r.is_err());

    // Oracle: the same two tests run directly, flushing after each.
    let oracle_db = dir.path().join("oracle.db");
    prepare(&oracle_db);
    let recorder = std::sync::Arc::new(SessionRecorder::new());
    let mut vm = Vm::new(vec![class], recorder.clone()).unwrap();
    for t in &tests[..2] {
        vm.execute(&t.class, &t.method, &t.descriptor, &t.arguments().unwrap()).unwrap();
        recorder.flush(&oracle_db).unwrap();
    }
    assert_eq!(counts(&db), counts(&oracle_db));
    assert_eq!(counts(&db), [2, 2, 1, 1, 1, 1, 0, 0, 0]);
}

#[test]
fn thrown_exception_in_the_last_test_keeps_earlier_hits() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("blueCov.db");
    let bytes = fixtures::thrower();
    let goals = fixtures::site_goals(&bytes).unwrap();
    let mut store = HitCountDb::default();
    let uids = assign_uids(&goals, &mut store);
    store.save(&db).unwrap();
    let out = instrument_class(&bytes, &goals, &uids).unwrap();
    let suite = r#"[
        {"id": "ok", "class": "Thrower", "method": "check", "descriptor": "(I)I",
         "args": [{"kind": "int", "value": 3}], "expect": {"kind": "int", "value": 3}},
        {"id": "boom", "class": "Thrower", "method": "check", "descriptor": "(I)I",
         "args": [{"kind": "int", "value": -3}], "expect": {"kind": "int", "value": 0}}
    ]"#;
    let tests = parse_suite(suite).unwrap();
    let report = run_suite(vec![parse_class(&out.bytes).unwrap()], &tests, &db, false).unwrap();
    assert_eq!(report.results[1].status, TestStatus::Fail);
    assert_eq!(report.results[1].actual, "throws java/lang/IllegalArgumentException");
    let hit: BTreeMap<_, _> = HitCountDb::load(&db).unwrap().counts;
    // The throwing path runs through `new` and `athrow` which the passing
    // test never reaches.
    assert!(hit.len() > 3);
}
