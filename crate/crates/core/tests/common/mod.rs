//! Shared helpers for the integration tests and the acceptance run.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use goalcov::classfile::{parse_class, ClassModel, FieldType};
use goalcov::fixtures::{self, Target};
use goalcov::minijvm::{Outcome, Value, Vm, VmError};
use goalcov::{assign_uids, instrument_class, HitCountDb, SessionRecorder};

pub type SiteKey = (String, String, String, usize);

/// The whole corpus, once as built and once with a goal on every
/// instruction of every method.
pub struct Corpus {
    pub original: Vec<Arc<ClassModel>>,
    pub instrumented: Vec<Arc<ClassModel>>,
    pub uid_of: HashMap<SiteKey, u32>,
    pub db: HitCountDb,
}

pub fn instrument_corpus() -> Corpus {
    let mut db = HitCountDb::default();
    let mut original = Vec::new();
    let mut instrumented = Vec::new();
    let mut uid_of = HashMap::new();
    for f in fixtures::corpus() {
        let goals = fixtures::site_goals(&f.bytes).unwrap();
        let uids = assign_uids(&goals, &mut db);
        for g in &goals {
            let sig = g.signature().unwrap();
            uid_of.insert((sig.class_name, sig.method, sig.descriptor, g.bytecode_index), uids[&g.key()]);
        }
        let out = instrument_class(&f.bytes, &goals, &uids).unwrap();
        original.push(Arc::new(parse_class(&f.bytes).unwrap()));
        instrumented.push(Arc::new(parse_class(&out.bytes).unwrap()));
    }
    Corpus { original, instrumented, uid_of, db }
}

fn int_from(s: u64) -> i32 {
    match s % 8 {
        0 => 0,
        1 => -1,
        2 => i32::MIN,
        3 => i32::MAX,
        4 | 5 => ((s >> 8) % 300) as i32 - 100,
        _ => (s >> 16) as i32,
    }
}

fn float_from(s: u64) -> f32 {
    let sign = if (s >> 3) & 1 == 1 { -1.0 } else { 1.0 };
    match s % 8 {
        0 => f32::NAN,
        1 => sign * 0.0,
        2 => sign * f32::INFINITY,
        3 => sign * 1e-10 * ((s >> 8) % 100) as f32,
        4 | 5 => ((s >> 8) % 20_000) as f32 / 100.0 - 100.0,
        _ => f32::from_bits((s >> 16) as u32),
    }
}

fn long_from(s: u64) -> i64 {
    match s % 6 {
        0 => 0,
        1 => i64::MIN,
        2 => i64::MAX,
        3 => ((s >> 8) % 1000) as i64 - 500,
        _ => (s >> 4) as i64 ^ (s << 60) as i64,
    }
}

/// Arguments for `target` derived from random words, biased towards edge
/// cases (NaN, signed zeros, extremes).
pub fn args_from(target: &Target, seeds: &[u64]) -> Vec<Value> {
    target
        .params()
        .params
        .iter()
        .enumerate()
        .map(|(i, ty)| {
            let s = seeds[i % seeds.len()].rotate_left(17 * i as u32);
            match ty {
                FieldType::Float => Value::Float(float_from(s)),
                FieldType::Double => Value::Double(f64::from(float_from(s))),
                FieldType::Long => Value::Long(long_from(s)),
                _ => Value::Int(int_from(s)),
            }
        })
        .collect()
}

pub struct Run {
    pub outcome: Result<Outcome, VmError>,
    pub counts: BTreeMap<u32, u64>,
    pub trace: BTreeSet<SiteKey>,
}

/// Executes `target` in a fresh interpreter.
pub fn run(classes: &[Arc<ClassModel>], target: &Target, args: &[Value], trace: bool) -> Run {
    let recorder = Arc::new(SessionRecorder::new());
    let mut vm = Vm::with_shared(classes.to_vec(), recorder.clone()).unwrap();
    if trace {
        vm.enable_trace();
    }
    let outcome = vm.execute(target.class, target.method, target.descriptor, args);
    let trace = vm.take_trace().into_iter().map(|s| (s.class, s.method, s.descriptor, s.ordinal)).collect();
    Run { outcome, counts: recorder.snapshot(), trace }
}

/// Compares UIDs with a nonzero count against the executed goal sites.
pub fn exact(corpus: &Corpus, target: &Target, args: &[Value]) -> Result<(), String> {
    let plain = run(&corpus.original, target, args, true);
    let inst = run(&corpus.instrumented, target, args, false);
    let expected: BTreeSet<u32> = plain.trace.iter().filter_map(|k| corpus.uid_of.get(k).copied()).collect();
    let actual: BTreeSet<u32> = inst.counts.iter().filter(|(_, &c)| c > 0).map(|(&u, _)| u).collect();
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{target:?} {args:?}: trace uids {expected:?}, recorded {actual:?}"))
    }
}

/// Compares instrumented and plain outcomes.
pub fn preserved(corpus: &Corpus, target: &Target, args: &[Value]) -> Result<(), String> {
    let plain = run(&corpus.original, target, args, false);
    let inst = run(&corpus.instrumented, target, args, false);
    match (&plain.outcome, &inst.outcome) {
        (Ok(a), Ok(b)) if a == b => Ok(()),
        (a, b) => Err(format!("{target:?} {args:?}: plain {a:?}, instrumented {b:?}")),
    }
}

/// Smallest number of traces covering the union, by exhaustive search.
pub fn optimum_cover(sets: &[BTreeSet<u32>]) -> usize {
    let union: BTreeSet<u32> = sets.iter().flatten().copied().collect();
    if union.is_empty() {
        return 0;
    }
    let masks: Vec<u32> = sets.iter().map(|s| s.iter().fold(0u32, |m, g| m | 1 << g)).collect();
    let full = union.iter().fold(0u32, |m, g| m | 1 << g);
    (1u32..1 << sets.len())
        .filter(|pick| masks.iter().enumerate().filter(|(i, _)| pick >> i & 1 == 1).fold(0, |m, (_, s)| m | s) == full)
        .map(|pick| pick.count_ones() as usize)
        .min()
        .expect("the full set always covers")
}
