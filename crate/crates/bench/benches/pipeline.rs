use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use goalcov::fixtures;
use goalcov::minijvm::Value;
use goalcov::{emit_class, greedy_minimize, instrument_class, parse_class, SessionRecorder, Vm};
use goalcov_bench::{corpus_with_goals, random_traces};

fn classfile(c: &mut Criterion) {
    let corpus = fixtures::corpus();
    c.bench_function("parse+emit corpus", |b| {
        b.iter(|| {
            for f in &corpus {
                let model = parse_class(black_box(&f.bytes)).unwrap();
                black_box(emit_class(&model).unwrap());
            }
        })
    });
}

fn instrument(c: &mut Criterion) {
    let inputs = corpus_with_goals();
    c.bench_function("instrument corpus, every site", |b| {
        b.iter(|| {
            for (bytes, goals, uids) in &inputs {
                black_box(instrument_class(black_box(bytes), goals, uids).unwrap());
            }
        })
    });
}

fn minimize(c: &mut Criterion) {
    let mut group = c.benchmark_group("greedy_minimize");
    for (n, goals) in [(12, 16), (200, 500), (2000, 5000)] {
        let traces = random_traces(42, n, goals);
        group.bench_function(format!("{n} traces x {goals} goals"), |b| {
            b.iter(|| black_box(greedy_minimize(black_box(&traces))))
        });
    }
    group.finish();
}

fn interpreter(c: &mut Criterion) {
    let inputs = corpus_with_goals();
    let (bytes, goals, uids) = &inputs[0];
    let plain = parse_class(bytes).unwrap();
    let instrumented = parse_class(&instrument_class(bytes, goals, uids).unwrap().bytes).unwrap();
    let loops = parse_class(&fixtures::loops()).unwrap();
    let mut group = c.benchmark_group("interpreter");
    for (name, class) in [("sign plain", plain), ("sign instrumented", instrumented)] {
        let mut vm = Vm::new(vec![class], Arc::new(SessionRecorder::new())).unwrap();
        group.bench_function(name, |b| {
            b.iter(|| vm.execute("FloatTools", "sign", "(F)I", &[Value::Float(black_box(-10.0))]).unwrap())
        });
    }
    let mut vm = Vm::new(vec![loops], Arc::new(SessionRecorder::new())).unwrap();
    group.bench_function("sumTo 255", |b| {
        b.iter(|| vm.execute("Loops", "sumTo", "(I)I", &[Value::Int(black_box(255))]).unwrap())
    });
    group.finish();
}

criterion_group!(benches, classfile, instrument, minimize, interpreter);
criterion_main!(benches);
