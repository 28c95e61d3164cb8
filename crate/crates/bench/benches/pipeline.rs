use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use rumorstance_core::corpus::make_fixture_corpus;
use rumorstance_core::features::{embedding_vocabulary, extract_thread, EmbeddingTable, LexiconSet};
use rumorstance_core::tensor::{sliding_window_mha, MhaParams};
use rumorstance_core::training::{feature_matrices, prepare_split, train, TrainData, TrainRunConfig};
use rumorstance_core::{EncoderConfig, EncoderKind, Graph, Model, Tensor, Vocabulary};

/// Deterministic filler values in [-1, 1].
fn filled(rows: usize, cols: usize, phase: f64) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|i| (i as f64 * 0.37 + phase).sin()).collect())
}

fn features(c: &mut Criterion) {
    let ds = make_fixture_corpus(3, 16, 8);
    let words = embedding_vocabulary([&ds]);
    let emb = EmbeddingTable::synthetic(words.iter().map(String::as_str));
    let lex = LexiconSet::fixture();
    c.bench_function("extract_thread", |b| {
        b.iter(|| {
            for t in &ds.threads {
                black_box(extract_thread(t, &lex, &emb));
            }
        })
    });
}

fn attention(c: &mut Criterion) {
    let (seq, d) = (128, 32);
    let x = filled(seq, d, 0.0);
    let ws: Vec<Tensor> =
        (0..8).map(|i| if i % 2 == 0 { filled(d, d, i as f64) } else { filled(1, d, i as f64) }).collect();
    for window in [8, 32] {
        c.bench_function(&format!("sliding_window_mha/seq{seq}/w{window}"), |b| {
            b.iter(|| {
                let mut g = Graph::new(false);
                let xv = g.input(x.clone());
                let v: Vec<_> = ws.iter().enumerate().map(|(i, t)| g.param(&format!("a{i}"), t)).collect();
                let p = MhaParams { wq: v[0], bq: v[1], wk: v[2], bk: v[3], wv: v[4], bv: v[5], wo: v[6], bo: v[7] };
                black_box(sliding_window_mha(&mut g, xv, &p, 2, window, &[]).unwrap());
            })
        });
    }
}

fn model(c: &mut Criterion) {
    let ds = make_fixture_corpus(5, 8, 6);
    let vocab = Vocabulary::from_dataset(&ds, 1, 10_000);
    let words = embedding_vocabulary([&ds]);
    let emb = EmbeddingTable::synthetic(words.iter().map(String::as_str));
    let feats = feature_matrices(&ds, &LexiconSet::fixture(), &emb);
    let split = prepare_split(&ds, &vocab, &feats, 512).unwrap();
    let example = &split.threads[0].windows[0];

    for kind in [EncoderKind::Identity, EncoderKind::InterSentenceTransformer, EncoderKind::Bilstm] {
        let cfg = EncoderConfig { encoder_kind: kind, ..EncoderConfig::toy(vocab.len()) };
        let m = Model::new(cfg, 1).unwrap();
        c.bench_function(&format!("forward/{}", kind.name()), |b| {
            b.iter(|| black_box(m.scores(&example.window, &example.features).unwrap()))
        });
    }

    let hash = vocab.hash();
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("identity/8_steps", |b| {
        b.iter_batched(
            || TrainRunConfig { max_steps: Some(8), batch_size: 4, ..TrainRunConfig::new(1, EncoderKind::Identity) },
            |run| {
                let data = TrainData { train: &split, dev: &split, vocab_size: vocab.len(), vocab_hash: &hash };
                black_box(train(&run, data).unwrap())
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, features, attention, model);
criterion_main!(benches);
