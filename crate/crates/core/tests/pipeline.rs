//! End-to-end checks on the bundled toy collection.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use tretr_core::cluster::{KMeansConfig, Representation};
use tretr_core::engine::{generate_synthetic_queries, tokenize, InvertedIndex};
use tretr_core::fairness::{sweep_k, SweepOptions};
use tretr_core::io::{parse_corpus, parse_qrels, parse_queries, read_embeddings};
use tretr_core::metrics::{map_at_100, ndcg_at_10};
use tretr_core::model::{
    Bm25Params, ClusterAssignment, DocId, LogBase, QuerySet, RunTable, Universe,
};
use tretr_core::retrievability::{
    retrievability_global, retrievability_indicator, retrievability_local, Weighting,
};

fn open(name: &str) -> BufReader<File> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name);
    BufReader::new(File::open(path).unwrap())
}

fn toy() -> (Vec<(DocId, String)>, InvertedIndex, QuerySet, RunTable) {
    let corpus = parse_corpus(open("toy_corpus.tsv")).unwrap();
    let index = InvertedIndex::build(&corpus).unwrap();
    let queries = parse_queries(open("toy_queries.tsv")).unwrap();
    let run = index
        .search_all(&queries, Bm25Params::default(), 100, "bm25")
        .unwrap();
    (corpus, index, queries, run)
}

#[test]
fn synthetic_bigrams_are_adjacent_in_some_document() {
    let (corpus, index, _, _) = toy();
    let adjacent: BTreeSet<(String, String)> = corpus
        .iter()
        .flat_map(|(_, text)| {
            let tokens = tokenize(text);
            tokens
                .windows(2)
                .map(|w| (w[0].clone(), w[1].clone()))
                .collect::<Vec<_>>()
        })
        .collect();
    let queries = generate_synthetic_queries(&index, 4, 0.5, 17).unwrap();
    let shapes: Vec<Vec<String>> = queries.iter().map(|(_, t)| tokenize(t)).collect();
    assert_eq!(shapes.iter().filter(|t| t.len() == 2).count(), 2);
    for terms in &shapes {
        match terms.as_slice() {
            [a, b] => assert!(adjacent.contains(&(a.clone(), b.clone())), "{a} {b}"),
            [t] => assert!(index.document_frequency(t) > 0),
            other => panic!("unexpected query {other:?}"),
        }
    }
    let ids: Vec<&str> = queries.ids().map(|q| q.as_str()).collect();
    assert_eq!(ids, ["synth-0", "synth-1", "synth-2", "synth-3"]);
}

#[test]
fn single_group_is_bit_identical_to_global() {
    let (_, _, queries, run) = toy();
    let global =
        retrievability_global(&run, &queries, 100, LogBase::E, Universe::PooledRetrieved).unwrap();
    let one = ClusterAssignment::new(1, queries.ids().map(|q| (q.clone(), 0)).collect()).unwrap();
    let local = retrievability_local(&run, &queries, &one, 100, LogBase::E).unwrap();
    assert_eq!(local[0].as_ref().unwrap().scores(), global.scores());
}

#[test]
fn indicator_counts_top_c_appearances() {
    let (_, _, queries, run) = toy();
    let c = 10;
    let table = retrievability_indicator(&run, &queries, c).unwrap();
    let mut counts: BTreeMap<&DocId, usize> = BTreeMap::new();
    for list in run.lists() {
        for entry in list.top(c) {
            *counts.entry(&entry.doc).or_default() += 1;
        }
    }
    assert_eq!(table.len(), counts.len());
    for (doc, n) in counts {
        assert_eq!(table.score(doc), n as f64 / queries.len() as f64);
    }
}

#[test]
fn log_base_rescales_scores_uniformly() {
    let (_, _, queries, run) = toy();
    let e =
        retrievability_global(&run, &queries, 100, LogBase::E, Universe::PooledRetrieved).unwrap();
    let two = retrievability_global(&run, &queries, 100, LogBase::Two, Universe::PooledRetrieved)
        .unwrap();
    for (doc, s) in e.scores() {
        assert!((two.score(doc) - s * 2f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn topical_groups_are_fairer_than_the_whole_collection() {
    let (_, _, queries, run) = toy();
    let embeddings = read_embeddings(open("toy_queries.emb")).unwrap();
    let options = SweepOptions {
        depth: 100,
        weighting: Weighting::ReciprocalLog(LogBase::E),
        kmeans: KMeansConfig::new(1, 42),
    };
    for repr in [Representation::Tfidf, Representation::Dense(&embeddings)] {
        let reports = sweep_k(&run, &queries, repr, &[1, 12], &options).unwrap();
        let whole = reports[0].1.aggregates();
        let topical = reports[1].1.aggregates();
        assert_eq!(whole.min, whole.max);
        assert!(
            topical.avg < whole.avg,
            "{} {topical:?} vs {whole:?}",
            repr.name()
        );
    }
}

#[test]
fn toy_run_metrics_are_sane() {
    let (_, _, _, run) = toy();
    let qrels = parse_qrels(open("toy_qrels.txt")).unwrap();
    let ndcg = ndcg_at_10(&run, &qrels).unwrap();
    let map = map_at_100(&run, &qrels).unwrap();
    assert_eq!(ndcg.per_query.len(), 150);
    assert!(ndcg.mean > 0.3 && ndcg.mean <= 1.0);
    assert!(map.mean > 0.3 && map.mean <= 1.0);
}
