use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use piecegen::decoder::{CountScorer, CountScorerConfig};
use piecegen::pipeline::Generator;
use piecegen::retrieval::IndexOptions;
use piecegen::{build_index, DecodeConfig};
use piecegen_bench::{corpus, toy_grammar};

fn bench_generate(c: &mut Criterion) {
    let g = toy_grammar();
    let train = corpus(&g, 300, 7);
    let index = build_index(g.clone(), train.clone(), IndexOptions::default()).unwrap();
    let scorer = CountScorer::train(&g, &train, CountScorerConfig::default());
    let q = &train[0].nl;
    let mut group = c.benchmark_group("generate");
    group.sample_size(20);
    for beam in [1, 5, 15] {
        let guided = Generator {
            grammar: &g,
            index: Some(&index),
            scorer: &scorer,
            m: 3,
            decode: DecodeConfig {
                beam,
                ..DecodeConfig::default()
            },
        };
        group.bench_with_input(BenchmarkId::new("guided", beam), &guided, |b, gen| {
            b.iter(|| gen.generate(q).unwrap())
        });
        let plain = Generator {
            index: None,
            ..guided
        };
        group.bench_with_input(BenchmarkId::new("base", beam), &plain, |b, gen| {
            b.iter(|| gen.generate(q))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_generate);
criterion_main!(benches);
