use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use itl_core::alexandroff::{find_countermodel, MAX_EVALUATIONS};
use itl_core::moments::enumerate_irreducibles;
use itl_core::{decide, Caps, DecideOptions, Formula, SigmaContext};

fn decide_formulas(c: &mut Criterion) {
    let mut group = c.benchmark_group("decide");
    for text in [
        "A(~p | <>p) -> ~<>p | <>p",
        "Xp -> p",
        "Ep -> <>p",
        "X(p -> q) -> (Xp -> Xq)",
        "~~Xp -> X~~p",
    ] {
        let phi = Formula::parse(text).unwrap();
        group.bench_function(text, |b| {
            b.iter(|| decide(black_box(&phi), &DecideOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn enumerate(c: &mut Criterion) {
    let mut group = c.benchmark_group("enumerate_irreducibles");
    for text in ["Xp", "p -> q", "Xp -> p"] {
        let sigma = SigmaContext::new(&Formula::parse(text).unwrap()).unwrap();
        group.bench_function(text, |b| {
            b.iter(|| enumerate_irreducibles(black_box(&sigma), &Caps::default()))
        });
    }
    group.finish();
}

fn countermodel(c: &mut Criterion) {
    let phi = Formula::parse("A(~p | <>p) -> ~<>p | <>p").unwrap();
    c.bench_function("countermodel/flagship/3 points", |b| {
        b.iter(|| find_countermodel(black_box(&phi), 3, MAX_EVALUATIONS).unwrap())
    });
}

criterion_group!(benches, decide_formulas, enumerate, countermodel);
criterion_main!(benches);
