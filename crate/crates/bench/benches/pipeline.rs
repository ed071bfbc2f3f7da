use criterion::{criterion_group, criterion_main, Criterion};
use spanlink::autograd::Graph;
use spanlink::eval::evaluate;
use spanlink::preprocess::make_windows;
use spanlink::train::{document_step, StepKind};
use spanlink_bench::{desk_fixture, round_robin};

fn metrics(c: &mut Criterion) {
    let gold = round_robin(400, 20);
    let pred = round_robin(400, 25);
    c.bench_function("evaluate 400 mentions", |b| b.iter(|| evaluate(&gold, &pred)));
}

fn windows(c: &mut Criterion) {
    c.bench_function("make_windows 10k/512", |b| {
        b.iter(|| make_windows(10_000, 512).unwrap())
    });
}

fn model(c: &mut Criterion) {
    let (model, docs) = desk_fixture(4);
    let doc = &docs[0];
    c.bench_function("encode document", |b| {
        b.iter(|| {
            let mut g = Graph::new(&model.params);
            model.encode_document(&mut g, doc).unwrap()
        })
    });
    c.bench_function("predict document", |b| b.iter(|| model.predict(doc).unwrap()));
    c.bench_function("joint training step", |b| {
        b.iter(|| document_step(&model, doc, StepKind::Joint { alpha: 0.1 }, 1, 0).unwrap())
    });
}

criterion_group!(benches, metrics, windows, model);
criterion_main!(benches);
