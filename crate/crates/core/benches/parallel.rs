use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qepnl::corpus::{build_corpus, CorpusConfig};
use qepnl::par::Execution;
use qepnl::pipeline::{corpus_vocabs, encode_samples, generate_trees};
use qepnl::plan::SchemaSpec;
use qepnl::poem::PoemStore;
use qepnl::rules::translate_batch;
use qepnl::seq2seq::{teacher_forcing_accuracy, ModelDims, Qep2SeqModel};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn schema() -> SchemaSpec {
    SchemaSpec::from_json(include_str!("../fixtures/toy_schema.json")).unwrap()
}

fn bench_modes(c: &mut Criterion) {
    let store = PoemStore::seeded();
    let small = generate_trees(&schema(), 40, 30, 0).unwrap();
    let large = generate_trees(&schema(), 200, 100, 0).unwrap();
    let corpus = build_corpus(Execution::Sequential, &small, &store, 0, &CorpusConfig::default()).unwrap();
    let (vin, vout) = corpus_vocabs(&corpus);
    let samples = encode_samples(&corpus.samples.iter().collect::<Vec<_>>(), &vin, &vout);
    let model = Qep2SeqModel::new(vin, vout, ModelDims { hidden: 64, enc_embed: 16, dec_embed: 32 }, 0.1, 0);

    let mut g = c.benchmark_group("translate_batch");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(translate_batch(exec, &large, &store)))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("build_corpus");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(build_corpus(exec, &small, &store, 0, &CorpusConfig::default()).unwrap()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("corpus_stats");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| b.iter(|| black_box(corpus.stats(exec))));
    }
    g.finish();

    let mut g = c.benchmark_group("teacher_forcing_accuracy");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(teacher_forcing_accuracy(&model, &samples, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_modes);
criterion_main!(benches);
