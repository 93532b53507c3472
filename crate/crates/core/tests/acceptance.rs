//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use goalcov::classfile::Constant;
use goalcov::fixtures;
use goalcov::minijvm::{parse_suite, run_suite_with};
use goalcov::minimize::Trace;
use goalcov::{
    assign_uids, emit_class, generate_report, greedy_minimize, instrument_class, parse_class, parse_goals, run_suite,
    uncovered, ClassModel, HitCountDb,
};

const SEED: u64 = 0x5eed_c0de;
const TABLE_BUDGET: Duration = Duration::from_secs(1);
const PRESERVATION_PAIRS: usize = 1000;
const EXACTNESS_RUNS: usize = 200;
const MIN_ROUND_TRIP_CLASSES: usize = 10;
const MINIMIZER_INSTANCES: usize = 100;
const MAX_TRACES: usize = 12;
const MAX_GOALS: u32 = 16;
const MINIMIZER_BUDGET: Duration = Duration::from_secs(10);

const TABLE: [u64; 9] = [3, 3, 2, 1, 2, 1, 1, 1, 0];
const TABLE_TWICE: [u64; 9] = [6, 6, 4, 2, 4, 2, 2, 2, 0];
const FIRST_HIT: [u64; 9] = [1, 1, 1, 1, 1, 1, 1, 1, 0];

type Check = Result<String, String>;
type Named<'a> = (&'static str, Box<dyn FnOnce() -> Check + 'a>);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn prepare(db: &Path) -> ClassModel {
    let goals = parse_goals(&fixtures::float_tools_goals_json()).unwrap();
    let mut store = HitCountDb::default();
    let uids = assign_uids(&goals, &mut store);
    store.save(db).unwrap();
    parse_class(&instrument_class(&fixtures::float_tools(), &goals, &uids).unwrap().bytes).unwrap()
}

fn counts(db: &Path) -> Vec<u64> {
    generate_report(&HitCountDb::load(db).unwrap()).counts()
}

fn run_float_tools(db: &Path, class: ClassModel, with_nan: bool, first_hit: bool) -> Result<(), String> {
    let tests = parse_suite(&fixtures::float_tools_suite_json(with_nan)).unwrap();
    let report = run_suite(vec![class], &tests, db, first_hit).map_err(|e| e.to_string())?;
    ensure(report.all_passed(), || format!("suite results {:?}", report.results))
}

fn table_counts() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("blueCov.db");
    let start = Instant::now();
    let class = prepare(&db);
    run_float_tools(&db, class, false, false)?;
    let got = counts(&db);
    let took = start.elapsed();
    ensure(got == TABLE, || format!("counts {got:?}, want {TABLE:?}"))?;
    ensure(took < TABLE_BUDGET, || format!("took {took:?}, budget {TABLE_BUDGET:?}"))?;
    Ok(format!("counts {got:?} in {took:?} (< {TABLE_BUDGET:?})"))
}

fn uncovered_then_nan() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("blueCov.db");
    let class = prepare(&db);
    run_float_tools(&db, class.clone(), false, false)?;
    let missing = uncovered(&generate_report(&HitCountDb::load(&db).unwrap()));
    let want = ["FloatTools.sign:(F)I.coverage.9"];
    ensure(missing == want, || format!("uncovered {missing:?}, want {want:?}"))?;

    let db2 = dir.path().join("nan.db");
    let class = prepare(&db2);
    run_float_tools(&db2, class, true, false)?;
    let after = uncovered(&generate_report(&HitCountDb::load(&db2).unwrap()));
    ensure(after.is_empty(), || format!("with NaN still uncovered: {after:?}"))?;
    Ok(format!("uncovered {missing:?}; none after adding NaN"))
}

fn round_trip() -> Check {
    let corpus = fixtures::corpus();
    let (mut clinit, mut handlers, mut big) = (false, false, false);
    for f in &corpus {
        let model = parse_class(&f.bytes).map_err(|e| format!("{}: {e}", f.name))?;
        let back = emit_class(&model).map_err(|e| format!("{}: {e}", f.name))?;
        ensure(back == f.bytes, || format!("{} differs after round trip", f.name))?;
        clinit |= model.find_method("<clinit>", "()V").is_some();
        handlers |= model.methods.iter().filter_map(|m| m.code()).any(|c| !c.exception_table.is_empty());
        big |= model.pool.count() > 256 && model.pool.iter().any(|(_, c)| matches!(c, Constant::Integer(_)));
    }
    ensure(corpus.len() >= MIN_ROUND_TRIP_CLASSES, || format!("only {} classes", corpus.len()))?;
    ensure(clinit && handlers && big, || format!("clinit {clinit}, handlers {handlers}, >255 entries {big}"))?;
    Ok(format!("{} classes byte-identical (clinit, handlers, >255 pool entries present)", corpus.len()))
}

fn preservation(corpus: &common::Corpus) -> Check {
    let targets = fixtures::executable_targets();
    let mut rng = StdRng::seed_from_u64(SEED);
    for _ in 0..PRESERVATION_PAIRS {
        let target = &targets[rng.gen_range(0..targets.len())];
        let seeds: Vec<u64> = (0..3).map(|_| rng.gen()).collect();
        common::preserved(corpus, target, &common::args_from(target, &seeds))?;
    }
    Ok(format!("{PRESERVATION_PAIRS} pairs over {} methods, seed {SEED:#x}", targets.len()))
}

fn exactness(corpus: &common::Corpus) -> Check {
    let targets = fixtures::executable_targets();
    let mut rng = StdRng::seed_from_u64(SEED ^ 1);
    for _ in 0..EXACTNESS_RUNS {
        let target = &targets[rng.gen_range(0..targets.len())];
        let seeds: Vec<u64> = (0..3).map(|_| rng.gen()).collect();
        common::exact(corpus, target, &common::args_from(target, &seeds))?;
    }
    Ok(format!("{EXACTNESS_RUNS} runs, recorded UIDs equal executed sites"))
}

fn accumulation() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("twice.db");
    let class = prepare(&db);
    run_float_tools(&db, class.clone(), false, false)?;
    run_float_tools(&db, class.clone(), false, false)?;
    let twice = counts(&db);
    ensure(twice == TABLE_TWICE, || format!("after two runs {twice:?}, want {TABLE_TWICE:?}"))?;

    let db = dir.path().join("first.db");
    prepare(&db);
    run_float_tools(&db, class, false, true)?;
    let first = counts(&db);
    ensure(first == FIRST_HIT, || format!("first-hit {first:?}, want {FIRST_HIT:?}"))?;
    Ok(format!("twice {twice:?}; first-hit {first:?}"))
}

fn minimizer() -> Check {
    let mut rng = StdRng::seed_from_u64(SEED ^ 2);
    let bound = 1.0 + f64::from(MAX_GOALS).ln();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut over = Vec::new();
    for instance in 0..MINIMIZER_INSTANCES {
        let n = rng.gen_range(1..=MAX_TRACES);
        let sets: Vec<BTreeSet<u32>> = (0..n)
            .map(|_| (0..MAX_GOALS).filter(|_| rng.gen_bool(0.25)).collect())
            .collect();
        let traces: Vec<Trace> = sets
            .iter()
            .enumerate()
            .map(|(i, s)| Trace::new(&format!("t{i}"), s.iter().map(|g| format!("g{g}"))))
            .collect();
        let kept = greedy_minimize(&traces);
        let all: BTreeSet<&String> = traces.iter().flat_map(|t| &t.goals).collect();
        let got: BTreeSet<&String> = kept.iter().flat_map(|t| &t.goals).collect();
        ensure(all == got, || format!("instance {instance}: union not covered"))?;
        let mut seen = BTreeSet::new();
        for t in &kept {
            ensure(t.goals.iter().any(|g| !seen.contains(g)), || format!("instance {instance}: {} redundant", t.id))?;
            seen.extend(t.goals.iter());
        }
        let opt = common::optimum_cover(&sets);
        if opt > 0 {
            let ratio = kept.len() as f64 / opt as f64;
            worst = worst.max(ratio);
            if ratio > bound {
                over.push(instance);
            }
        }
    }
    let took = start.elapsed();
    ensure(over.is_empty(), || format!("size above opt x {bound:.3} in instances {over:?}"))?;
    ensure(took < MINIMIZER_BUDGET, || format!("took {took:?}, budget {MINIMIZER_BUDGET:?}"))?;
    Ok(format!("{MINIMIZER_INSTANCES} instances, worst size/opt {worst:.3} <= {bound:.3}, {took:?}"))
}

fn abnormal_termination() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("blueCov.db");
    let class = prepare(&db);
    let tests = parse_suite(&fixtures::float_tools_suite_json(false)).unwrap();
    let mut done = 0;
    let prev = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let r = catch_unwind(AssertUnwindSafe(|| {
        run_suite_with(vec![class], &tests, &db, false, |_| {
            done += 1;
            if done == 2 {
                panic!("aborted after second test");
            }
        })
    }));
    std::panic::set_hook(prev);
    ensure(r.is_err(), || "run was not interrupted".into())?;
    // Hits of the two completed tests, derived from the method's branches:
    // -1e-10 takes the first return, -10 the second.
    let want = [2, 2, 1, 1, 1, 1, 0, 0, 0];
    let got = counts(&db);
    ensure(got == want, || format!("after abort {got:?}, want {want:?}"))?;
    Ok(format!("interrupted run left {got:?}"))
}

fn main() -> ExitCode {
    let corpus = common::instrument_corpus();
    let checks: Vec<Named> = vec![
        ("table-counts", Box::new(table_counts)),
        ("uncovered-and-nan", Box::new(uncovered_then_nan)),
        ("round-trip", Box::new(round_trip)),
        ("behavior-preservation", Box::new(|| preservation(&corpus))),
        ("exactness", Box::new(|| exactness(&corpus))),
        ("accumulation-and-first-hit", Box::new(accumulation)),
        ("minimizer", Box::new(minimizer)),
        ("abnormal-termination-flush", Box::new(abnormal_termination)),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<&str>().map_or("panicked".into(), |s| format!("panicked: {s}"))));
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
