use rumorstance_core::corpus::{case_study_thread, make_fixture_corpus};
use rumorstance_core::features::{embedding_vocabulary, EmbeddingTable, LexiconSet};
use rumorstance_core::training::{
    accuracy, feature_matrices, prepare_split, score_split, train, ParamGroup, PreparedSplit, ScheduleConfig,
    TrainData, TrainRunConfig,
};
use rumorstance_core::{Dataset, EncoderKind, Model, Veracity, Vocabulary};

fn prepared(ds: &Dataset) -> (Vocabulary, PreparedSplit) {
    let vocab = Vocabulary::from_dataset(ds, 1, 10_000);
    let words = embedding_vocabulary([ds]);
    let emb = EmbeddingTable::synthetic(words.iter().map(String::as_str));
    let feats = feature_matrices(ds, &LexiconSet::fixture(), &emb);
    let split = prepare_split(ds, &vocab, &feats, 512).unwrap();
    (vocab, split)
}

fn overfit_run(kind: EncoderKind) -> TrainRunConfig {
    TrainRunConfig {
        epochs: 300,
        batch_size: 8,
        max_steps: Some(300),
        lambda: 0.7,
        schedule_p: ScheduleConfig { base_lr: 0.01, warmup_steps: 30, group: ParamGroup::PretrainedP },
        schedule_oc: ScheduleConfig { base_lr: 0.01, warmup_steps: 30, group: ParamGroup::OtherComponentsOc },
        ..TrainRunConfig::new(1, kind)
    }
}

#[test]
fn tiny_corpus_overfits_with_every_encoder() {
    let ds = make_fixture_corpus(7, 8, 6);
    let (vocab, split) = prepared(&ds);
    for kind in [EncoderKind::Identity, EncoderKind::InterSentenceTransformer, EncoderKind::Bilstm] {
        let out = train(
            &overfit_run(kind),
            TrainData { train: &split, dev: &split, vocab_size: vocab.len(), vocab_hash: &vocab.hash() },
        )
        .unwrap();
        assert_eq!(out.steps.len(), 300);
        let (st, ve) = accuracy(&out.final_model, &split).unwrap();
        assert!(st >= 0.95, "{kind:?}: stance accuracy {st}");
        assert!(ve >= 0.9, "{kind:?}: veracity accuracy {ve}");
    }
}

#[test]
fn case_study_thread_is_called_false() {
    let mut ds = make_fixture_corpus(11, 6, 5);
    ds.threads.push(case_study_thread("cs"));
    let (vocab, split) = prepared(&ds);
    let out = train(
        &overfit_run(EncoderKind::Bilstm),
        TrainData { train: &split, dev: &split, vocab_size: vocab.len(), vocab_hash: &vocab.hash() },
    )
    .unwrap();
    let scores = score_split(&out.final_model, &split).unwrap();
    let last = *scores.veracity_predictions().last().unwrap();
    assert_eq!(Veracity::from_index(last), Some(Veracity::False));
}

#[test]
fn saved_checkpoint_scores_identically() {
    let ds = make_fixture_corpus(3, 4, 4);
    let (vocab, split) = prepared(&ds);
    let mut run = overfit_run(EncoderKind::InterSentenceTransformer);
    run.max_steps = Some(5);
    let dir = tempfile::tempdir().unwrap();
    run.checkpoint_dir = Some(dir.path().to_path_buf());
    let hash = vocab.hash();
    let out =
        train(&run, TrainData { train: &split, dev: &split, vocab_size: vocab.len(), vocab_hash: &hash }).unwrap();
    let ck = out.checkpoints.last().unwrap();
    let (loaded, manifest) = Model::load(ck.path.as_ref().unwrap()).unwrap();
    assert_eq!(manifest.vocab_hash, hash);
    assert_eq!(score_split(&loaded, &split).unwrap(), ck.dev_scores);
}
