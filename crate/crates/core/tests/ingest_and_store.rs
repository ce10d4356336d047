use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use sentiment_core::balance::{smote_resample, FeatureMatrix};
use sentiment_core::corpus::{
    class_counts, ingest, manifest, read_review_table, write_review_table, CorpusDescriptor, CorpusError, CorpusLayout,
    ReferenceCheck,
};
use sentiment_core::embedding::{load_store, separated_clusters, synthetic_store, synthetic_token_store, StoreMode};
use sentiment_core::schemes::{ScoreScale, SentimentScheme};

fn reviews() -> CorpusDescriptor {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/reviews.tsv");
    CorpusDescriptor::new("fixture", CorpusLayout::Delimited, path, ScoreScale::Imdb)
}

fn ids(reviews: &[sentiment_core::corpus::LabeledReview]) -> BTreeSet<String> {
    reviews.iter().map(|r| r.id.clone()).collect()
}

#[test]
fn fixture_ingest_drops_invalid_and_empty_reviews() {
    for scheme in [SentimentScheme::Binary, SentimentScheme::Three, SentimentScheme::Four] {
        let (split, stats, check) = ingest(&reviews(), scheme, 7).unwrap();
        assert_eq!(stats.raw, 22);
        assert_eq!(stats.empty_removed, 1);
        assert_eq!(stats.dropped, 2);
        assert_eq!(stats.rejected, 2);
        assert_eq!(stats.ingested, 19);
        assert_eq!(check, ReferenceCheck::Unknown);
        assert_eq!(split.train.len(), 12);
        assert_eq!(split.test.len(), 7);
        let all: BTreeSet<String> = ids(&split.train).union(&ids(&split.test)).cloned().collect();
        for gone in ["r013", "r014", "r019"] {
            assert!(!all.contains(gone), "{gone} survived under {scheme}");
        }
    }
    let (split, _, _) = ingest(&reviews(), SentimentScheme::Binary, 7).unwrap();
    let counts = class_counts(&split.train, SentimentScheme::Binary).unwrap();
    assert_eq!(counts.as_slice(), &[6, 6]);
}

#[test]
fn fixture_ingest_is_seed_deterministic() {
    let a = ingest(&reviews(), SentimentScheme::Four, 3).unwrap().0;
    let b = ingest(&reviews(), SentimentScheme::Four, 3).unwrap().0;
    let c = ingest(&reviews(), SentimentScheme::Four, 4).unwrap().0;
    assert_eq!(a, b);
    assert_eq!(ids(&a.train), ids(&c.train));
    assert_eq!(ids(&a.test), ids(&c.test));
}

#[test]
fn imdb_scores_have_no_five_class_variant() {
    assert!(ingest(&reviews(), SentimentScheme::Five, 1).is_err());
}

#[test]
fn missing_corpus_is_an_error() {
    let missing = CorpusDescriptor::new("x", CorpusLayout::Delimited, "/nonexistent/reviews.tsv", ScoreScale::Imdb);
    assert!(matches!(ingest(&missing, SentimentScheme::Binary, 1), Err(CorpusError::Io { .. })));
}

#[test]
fn review_table_round_trip_keeps_unicode() {
    let dir = tempfile::tempdir().unwrap();
    let (split, stats, check) = ingest(&reviews(), SentimentScheme::Three, 9).unwrap();
    let path = dir.path().join("test.tsv");
    write_review_table(&path, &split.test).unwrap();
    let back = read_review_table(&path, SentimentScheme::Three).unwrap();
    assert_eq!(back.len(), split.test.len());
    for (a, b) in split.test.iter().zip(&back) {
        assert_eq!((&a.id, &a.text, a.label), (&b.id, &b.text, b.label));
    }
    assert!(back.iter().any(|r| r.text.contains("Café")));

    let kv = manifest(&split, &stats, &check, 9).unwrap();
    assert_eq!(kv.get("records.rejected"), Some("2"));
    assert_eq!(kv.get("train.count"), Some("12"));
    assert_eq!(kv.get("reference_check"), Some("unknown"));
}

#[test]
fn stores_round_trip_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let pooled = synthetic_store(1, 6, &separated_clusters(6, 3, 10, 4.0)).unwrap();
    let tokens = synthetic_token_store(2, 4, 3, &separated_clusters(4, 2, 5, 4.0)).unwrap();
    for (name, store) in [("pooled", &pooled), ("tokens", &tokens)] {
        let bin = dir.path().join(format!("{name}.emb"));
        let txt = dir.path().join(format!("{name}.txt"));
        store.write(&bin).unwrap();
        store.write_text(&txt).unwrap();
        assert_eq!(&load_store(&bin).unwrap(), store);
        assert_eq!(&load_store(&txt).unwrap(), store);
    }
    assert_eq!(load_store(&dir.path().join("tokens.emb")).unwrap().mode(), StoreMode::Tokens);
}

#[test]
fn corrupted_store_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.emb");
    synthetic_store(1, 4, &separated_clusters(4, 2, 4, 4.0)).unwrap().write(&path).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    fs::write(&path, &bytes).unwrap();
    assert!(load_store(&path).is_err());
    bytes.truncate(last);
    fs::write(&path, &bytes).unwrap();
    assert!(load_store(&path).is_err());
}

#[test]
fn smote_output_survives_a_store_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut specs = separated_clusters(5, 2, 30, 6.0);
    specs[0].count = 8;
    let store = synthetic_store(4, 5, &specs).unwrap();
    let features = FeatureMatrix::from_store(&store, SentimentScheme::Binary).unwrap();
    let balanced = smote_resample(&features, 5, features.majority_count(), 4).unwrap();
    let out = balanced.to_store(&store).unwrap();
    assert_eq!(out.len(), 60);
    assert!(out.get("smote-0-000001").is_some());
    let path = dir.path().join("balanced.emb");
    out.write(&path).unwrap();
    assert_eq!(load_store(&path).unwrap(), out);
}
