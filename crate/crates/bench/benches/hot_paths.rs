use std::hint::black_box;

use atnb_bench::{image, network, paired_scores};
use atnb_core::metrics::{perturbation_test, ssim, PerturbDirection, Ranking};
use atnb_core::saliency::{explain, tmme};
use atnb_core::stats::{bootstrap_ci, delong_test, roc_auc, LabeledScores};
use atnb_core::{HeadMerge, MapMethod, Tensor};
use criterion::{criterion_group, criterion_main, Criterion};

fn model(c: &mut Criterion) {
    let net = network(1);
    let img = image(2);
    let size = (img.shape()[0], img.shape()[1]);
    let capture = net.forward(&img).unwrap();
    let grads = net.backward(&capture, 0).unwrap();
    c.bench_function("forward", |b| {
        b.iter(|| net.forward(black_box(&img)).unwrap())
    });
    c.bench_function("backward", |b| {
        b.iter(|| net.backward(black_box(&capture), 0).unwrap())
    });
    c.bench_function("tmme_from_capture", |b| {
        b.iter(|| tmme(&capture, &grads, HeadMerge::Mean, 0, size).unwrap())
    });
    c.bench_function("explain_tmme", |b| {
        b.iter(|| explain(&net, black_box(&img), 0, MapMethod::Tmme(HeadMerge::Mean)).unwrap())
    });
    let reference = Tensor::zeros(&[size.0, size.1]);
    let mut group = c.benchmark_group("perturbation");
    group.sample_size(10);
    group.bench_function("tmme_recompute", |b| {
        b.iter(|| {
            perturbation_test(
                &net,
                &img,
                0,
                Ranking::Model(MapMethod::Tmme(HeadMerge::Mean)),
                PerturbDirection::Positive,
                &reference,
                true,
            )
            .unwrap()
        })
    });
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let a = image(3);
    let b = image(4);
    c.bench_function("ssim_64", |bn| {
        bn.iter(|| ssim(black_box(&a), black_box(&b)).unwrap())
    });
}

fn stats(c: &mut Criterion) {
    let (a, b, labels) = paired_scores(1000, 5);
    let a = LabeledScores::new(a, labels.clone()).unwrap();
    let b = LabeledScores::new(b, labels).unwrap();
    c.bench_function("roc_auc_1000", |bn| {
        bn.iter(|| roc_auc(black_box(&a)).unwrap())
    });
    c.bench_function("delong_1000", |bn| {
        bn.iter(|| delong_test(black_box(&a), black_box(&b)).unwrap())
    });
    let mut group = c.benchmark_group("bootstrap");
    group.sample_size(10);
    group.bench_function("auc_1000x1000", |bn| {
        bn.iter(|| {
            bootstrap_ci(
                a.len(),
                |idx| roc_auc(&a.select(idx)).ok().map(|r| r.auc),
                1000,
                7,
                true,
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, model, metrics, stats);
criterion_main!(benches);
