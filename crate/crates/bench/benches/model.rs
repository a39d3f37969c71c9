use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use depsrl::autodiff::Tape;
use depsrl::conll::extract_all;
use depsrl::encoder::encode;
use depsrl::train::{loss_and_gradients, predict_corpus};
use depsrl_bench::{corpus, model};

fn encoder(c: &mut Criterion) {
    let sents = corpus(50);
    let mut group = c.benchmark_group("encode");
    for d_hidden in [32, 128] {
        let m = model(d_hidden, 2, &sents);
        let feats = m.features(&extract_all(&sents)[0]);
        group.bench_with_input(BenchmarkId::from_parameter(d_hidden), &feats, |b, feats| {
            b.iter(|| {
                let mut tape = Tape::with_params(&m.params);
                encode(&mut tape, &m, feats, None).unwrap().states.len()
            })
        });
    }
    group.finish();
}

fn backward(c: &mut Criterion) {
    let sents = corpus(50);
    let mut group = c.benchmark_group("loss_and_gradients");
    for d_hidden in [32, 128] {
        let m = model(d_hidden, 2, &sents);
        let feats = m.features(&extract_all(&sents)[0]);
        group.bench_with_input(BenchmarkId::from_parameter(d_hidden), &feats, |b, feats| {
            b.iter(|| loss_and_gradients(&m, feats, None).unwrap().0)
        });
    }
    group.finish();
}

fn predict(c: &mut Criterion) {
    let sents = corpus(50);
    let m = model(32, 2, &sents);
    c.bench_function("predict_corpus/50", |b| {
        b.iter(|| predict_corpus(&m, &sents).unwrap().len())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = encoder, backward, predict
}
criterion_main!(benches);
