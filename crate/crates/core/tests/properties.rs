mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use goalcov::fixtures::{self, Target};
use goalcov::minijvm::{Outcome, Value, Vm};
use goalcov::minimize::Trace;
use goalcov::{
    assign_uids, generate_report, greedy_minimize, instrument_class, minimize_against_existing, parse_class,
    parse_goals, serialize_goals, uncovered, CoverageGoal, GoalKey, GoalMeta, HitCountDb, SessionRecorder,
};

fn corpus() -> &'static common::Corpus {
    static C: OnceLock<common::Corpus> = OnceLock::new();
    C.get_or_init(common::instrument_corpus)
}

fn targets() -> &'static [Target] {
    static T: OnceLock<Vec<Target>> = OnceLock::new();
    T.get_or_init(fixtures::executable_targets)
}

fn target_and_args() -> impl Strategy<Value = (usize, Vec<u64>)> {
    (0..targets().len(), prop::collection::vec(any::<u64>(), 1..4))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn instrumentation_preserves_behavior((t, seeds) in target_and_args()) {
        let target = &targets()[t];
        let args = common::args_from(target, &seeds);
        if let Err(e) = common::preserved(corpus(), target, &args) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn recorded_uids_are_exactly_the_executed_sites((t, seeds) in target_and_args()) {
        let target = &targets()[t];
        let args = common::args_from(target, &seeds);
        if let Err(e) = common::exact(corpus(), target, &args) {
            prop_assert!(false, "{}", e);
        }
    }

    /// Instrumenting an arbitrary subset of sites records exactly the
    /// executed members of that subset.
    #[test]
    fn any_subset_of_sites_is_sound((t, seeds) in target_and_args(), pick in any::<u64>()) {
        let target = &targets()[t];
        let args = common::args_from(target, &seeds);
        let fixture = fixtures::corpus().into_iter().find(|f| f.name == target.class).unwrap();
        let goals: Vec<CoverageGoal> = fixtures::site_goals(&fixture.bytes)
            .unwrap()
            .into_iter()
            .enumerate()
            .filter(|(i, _)| pick.rotate_left(*i as u32) & 1 == 1)
            .map(|(_, g)| g)
            .collect();
        let mut db = HitCountDb::default();
        let uids = assign_uids(&goals, &mut db);
        let out = instrument_class(&fixture.bytes, &goals, &uids).unwrap();
        let patched = Arc::new(parse_class(&out.bytes).unwrap());
        let classes: Vec<_> = corpus()
            .original
            .iter()
            .map(|c| if c.name() == target.class { patched.clone() } else { c.clone() })
            .collect();

        let plain = common::run(&corpus().original, target, &args, true);
        let inst = common::run(&classes, target, &args, false);
        prop_assert_eq!(&plain.outcome.as_ref().ok(), &inst.outcome.as_ref().ok());
        let expected: BTreeSet<u32> = plain
            .trace
            .iter()
            .filter_map(|(c, m, d, o)| uids.get(&GoalKey::new(&format!("{c}.{m}:{d}"), *o)).copied())
            .collect();
        let actual: BTreeSet<u32> = inst.counts.keys().copied().collect();
        prop_assert_eq!(expected, actual);
    }

    /// However the static initializer is reached, it runs once.
    #[test]
    fn static_initializer_runs_once(xs in prop::collection::vec(any::<i32>(), 1..20)) {
        let bytes = fixtures::clinit_holder();
        let goals = fixtures::site_goals(&bytes).unwrap();
        let mut db = HitCountDb::default();
        let uids = assign_uids(&goals, &mut db);
        let out = instrument_class(&bytes, &goals, &uids).unwrap();
        let recorder = Arc::new(SessionRecorder::new());
        let mut vm = Vm::from_bytes(&[out.bytes], recorder.clone()).unwrap();
        for &x in &xs {
            let r = vm.execute("ClinitHolder", "next", "(I)I", &[Value::Int(x)]).unwrap();
            prop_assert_eq!(r, Outcome::Returned(Some(Value::Int(x.wrapping_add(42)))));
        }
        let counts = recorder.snapshot();
        for g in goals.iter().filter(|g| g.function.contains("<clinit>")) {
            prop_assert_eq!(counts.get(&uids[&g.key()]).copied(), Some(1));
        }
        let inits = vm.execute("ClinitHolder", "inits", "()I", &[]).unwrap();
        prop_assert_eq!(inits, Outcome::Returned(Some(Value::Int(1))));
    }
}

fn session() -> impl Strategy<Value = BTreeMap<u32, u64>> {
    prop::collection::btree_map(0u32..16, 0u64..1000, 0..8)
}

fn db_strategy() -> impl Strategy<Value = HitCountDb> {
    (prop::collection::btree_map(0u32..16, "[a-z.:()@]{0,12}", 0..8), session()).prop_map(|(names, counts)| {
        let mut db = HitCountDb::default();
        for (uid, name) in names {
            db.meta.insert(uid, GoalMeta { key: format!("k{uid}"), name });
        }
        db.counts = counts;
        db
    })
}

proptest! {
    #[test]
    fn merging_is_order_independent(a in session(), b in session(), c in session()) {
        let mut left = HitCountDb::default();
        left.merge_counts(&a);
        left.merge_counts(&b);
        left.merge_counts(&c);
        let mut bc = b.clone();
        for (k, v) in &c {
            *bc.entry(*k).or_insert(0) += v;
        }
        let mut right = HitCountDb::default();
        right.merge_counts(&bc);
        right.merge_counts(&a);
        prop_assert_eq!(left, right);
    }

    #[test]
    fn merging_never_lowers_a_count(mut db in db_strategy(), s in session()) {
        let before = db.clone();
        db.merge_counts(&s);
        for (uid, c) in &before.counts {
            prop_assert!(db.count(*uid) >= *c);
        }
        for (uid, n) in &s {
            prop_assert_eq!(db.count(*uid), before.count(*uid) + n);
        }
    }

    #[test]
    fn database_bytes_round_trip(db in db_strategy()) {
        prop_assert_eq!(HitCountDb::from_bytes(&db.to_bytes()).unwrap(), db);
    }

    #[test]
    fn report_splits_goals_into_covered_and_uncovered(db in db_strategy()) {
        let report = generate_report(&db);
        prop_assert_eq!(report.entries.len(), db.meta.len());
        let missing = uncovered(&report);
        let covered = report.entries.iter().filter(|e| e.hit_count > 0).count();
        prop_assert_eq!(missing.len() + covered, report.entries.len());
        for (entry, (uid, meta)) in report.entries.iter().zip(&db.meta) {
            prop_assert_eq!(&entry.name, &meta.name);
            prop_assert_eq!(entry.hit_count, db.count(*uid));
        }
    }

    #[test]
    fn goal_files_round_trip(goals in prop::collection::vec(goal(), 0..10)) {
        let text = serialize_goals(&goals);
        prop_assert_eq!(parse_goals(&text).unwrap(), goals);
    }
}

fn goal() -> impl Strategy<Value = CoverageGoal> {
    (
        "[A-Z][a-z]{0,6}",
        "[a-z]{1,6}",
        "\\((I|F|J|D)*\\)(I|V|F)",
        "[ -~]{0,16}",
        1u32..500,
        0usize..300,
    )
        .prop_map(|(class, method, desc, description, line, index)| {
            let function = format!("{class}.{method}:{desc}");
            CoverageGoal {
                name: format!("{function}.coverage.{}", index + 1),
                description,
                covered_lines: line.to_string(),
                file: format!("{class}.java"),
                function,
                line,
                bytecode_index: index,
            }
        })
}

fn traces() -> impl Strategy<Value = Vec<Trace>> {
    prop::collection::vec(prop::collection::btree_set(0u8..16, 0..8), 0..12).prop_map(|sets| {
        sets.into_iter()
            .enumerate()
            .map(|(i, s)| Trace::new(&format!("t{i}"), s.into_iter().map(|g| format!("g{g}"))))
            .collect()
    })
}

fn union(ts: &[Trace]) -> BTreeSet<String> {
    ts.iter().flat_map(|t| t.goals.iter().cloned()).collect()
}

proptest! {
    #[test]
    fn minimized_suite_covers_everything(ts in traces()) {
        let kept = greedy_minimize(&ts);
        prop_assert_eq!(union(&kept), union(&ts));
        prop_assert!(kept.len() <= ts.len());
    }

    /// Each kept trace added a goal that no earlier kept trace covered.
    #[test]
    fn minimized_suite_has_no_redundant_trace(ts in traces()) {
        let kept = greedy_minimize(&ts);
        let mut seen = BTreeSet::new();
        for t in &kept {
            prop_assert!(t.goals.iter().any(|g| !seen.contains(g)), "{} adds nothing", t.id);
            seen.extend(t.goals.iter().cloned());
        }
    }

    #[test]
    fn minimizing_is_deterministic(ts in traces()) {
        prop_assert_eq!(greedy_minimize(&ts), greedy_minimize(&ts));
    }

    #[test]
    fn existing_coverage_is_subtracted(ts in traces(), done in prop::collection::btree_set(0u8..16, 0..8)) {
        let done: BTreeSet<String> = done.into_iter().map(|g| format!("g{g}")).collect();
        let kept = minimize_against_existing(&ts, &done);
        let want: BTreeSet<String> = union(&ts).difference(&done).cloned().collect();
        prop_assert_eq!(union(&kept), want);
        for t in &kept {
            prop_assert!(t.goals.is_disjoint(&done));
        }
        // Same as minimizing when nothing is covered yet, minus the
        // traces that only reach covered goals.
        if done.is_empty() {
            prop_assert_eq!(kept, greedy_minimize(&ts));
        }
    }
}
