//! A small in-memory BM25 engine and a simulated-query generator.
//!
//! Enough to produce run files for toy collections so the retrievability
//! pipeline can be driven end to end without an external search system.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Bm25Params, DocId, QueryId, QuerySet, RankedList, RunTable};

/// Lowercases `text` and splits it on every maximal run of
/// non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Posting {
    /// Ordinal of the document in corpus order.
    pub doc: u32,
    pub tf: u32,
}

/// Postings and document statistics for a fixed corpus.
#[derive(Clone, Debug)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_ids: Vec<DocId>,
    doc_lengths: Vec<u32>,
    avgdl: f64,
    bigrams: Vec<(String, String)>,
}

impl InvertedIndex {
    /// Indexes `corpus` in the given order. Document ordinals follow that
    /// order, so identical corpora give identical indexes.
    pub fn build(corpus: &[(DocId, String)]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::invalid("corpus", "no documents"));
        }
        let doc_count = u32::try_from(corpus.len())
            .map_err(|_| Error::invalid("corpus", "more than u32::MAX documents"))?;
        let mut seen = HashSet::with_capacity(corpus.len());
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_ids = Vec::with_capacity(corpus.len());
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        let mut bigrams = BTreeSet::new();

        for ((id, text), ordinal) in corpus.iter().zip(0..doc_count) {
            if !seen.insert(id) {
                return Err(Error::invalid(
                    "corpus",
                    format!("duplicate document id {id}"),
                ));
            }
            let tokens = tokenize(text);
            let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
            for token in &tokens {
                *counts.entry(token.as_str()).or_default() += 1;
            }
            for (term, tf) in counts {
                postings
                    .entry(term.to_owned())
                    .or_default()
                    .push(Posting { doc: ordinal, tf });
            }
            for pair in tokens.windows(2) {
                bigrams.insert((pair[0].clone(), pair[1].clone()));
            }
            doc_ids.push(id.clone());
            doc_lengths.push(tokens.len() as u32);
        }

        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avgdl = total as f64 / doc_lengths.len() as f64;
        if avgdl <= 0.0 {
            return Err(Error::invalid(
                "corpus",
                "average document length is zero (no tokens in any document)",
            ));
        }
        Ok(Self {
            postings,
            doc_ids,
            doc_lengths,
            avgdl,
            bigrams: bigrams.into_iter().collect(),
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_ids(&self) -> &[DocId] {
        &self.doc_ids
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    /// Postings of `term`, sorted by document ordinal.
    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    /// Total occurrences of `term` across the collection.
    pub fn collection_frequency(&self, term: &str) -> u64 {
        self.postings(term).iter().map(|p| u64::from(p.tf)).sum()
    }

    /// Vocabulary in ascending order.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    /// Distinct adjacent term pairs, sorted.
    pub fn bigrams(&self) -> &[(String, String)] {
        &self.bigrams
    }

    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`, positive for every indexed term.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.document_frequency(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Scores every document sharing a term with `query` and returns the top
    /// `depth`, ordered by descending score and then ascending document id.
    pub fn search(
        &self,
        query_id: QueryId,
        query: &str,
        params: Bm25Params,
        depth: usize,
    ) -> Result<RankedList> {
        let mut terms = tokenize(query);
        let mut seen = HashSet::new();
        terms.retain(|t| seen.insert(t.clone()));

        let (k1, b) = (params.k1(), params.b());
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(term);
            for posting in postings {
                let tf = f64::from(posting.tf);
                let dl = f64::from(self.doc_lengths[posting.doc as usize]);
                let norm = k1 * (1.0 - b + b * dl / self.avgdl);
                *scores.entry(posting.doc).or_default() += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }

        let mut hits: Vec<(u32, f64)> = scores.into_iter().filter(|&(_, s)| s > 0.0).collect();
        hits.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.doc_ids[a.0 as usize].cmp(&self.doc_ids[b.0 as usize]))
        });
        hits.truncate(depth);
        let docs = hits
            .into_iter()
            .map(|(doc, score)| (self.doc_ids[doc as usize].clone(), score))
            .collect();
        RankedList::from_ordered(query_id, docs)
    }

    /// Runs every query (in parallel) and collects the results into a run.
    /// Queries without hits are absent from the run.
    pub fn search_all(
        &self,
        queries: &QuerySet,
        params: Bm25Params,
        depth: usize,
        tag: &str,
    ) -> Result<RunTable> {
        if depth == 0 {
            return Err(Error::invalid("search", "depth must be at least 1"));
        }
        let entries: Vec<_> = queries.iter().collect();
        let lists = entries
            .par_iter()
            .map(|(id, text)| self.search((*id).clone(), text, params, depth))
            .collect::<Result<Vec<_>>>()?;
        RunTable::new(tag, lists, depth)
    }
}

/// Free-function form of [`InvertedIndex::search`].
pub fn bm25_search(
    index: &InvertedIndex,
    query_id: QueryId,
    query: &str,
    params: Bm25Params,
    depth: usize,
) -> Result<RankedList> {
    index.search(query_id, query, params, depth)
}

#[derive(Clone, Copy)]
enum QueryShape {
    Unigram,
    Bigram,
}

/// Simulates a query log by sampling from the collection.
///
/// `round(count * bigram_fraction)` queries are adjacent term pairs drawn
/// uniformly from the distinct bigrams of the corpus; the rest are single
/// terms drawn with probability proportional to collection frequency.
/// Query ids are `synth-0`, `synth-1`, ...
pub fn generate_synthetic_queries(
    index: &InvertedIndex,
    count: usize,
    bigram_fraction: f64,
    seed: u64,
) -> Result<QuerySet> {
    if count == 0 {
        return Err(Error::invalid(
            "synthetic queries",
            "count must be positive",
        ));
    }
    if !(0.0..=1.0).contains(&bigram_fraction) {
        return Err(Error::invalid(
            "synthetic queries",
            format!("bigram fraction {bigram_fraction} outside [0, 1]"),
        ));
    }
    if bigram_fraction > 0.0 && index.bigrams().is_empty() {
        return Err(Error::invalid(
            "synthetic queries",
            "bigram queries requested but the corpus has no adjacent term pairs",
        ));
    }
    let bigram_count = ((count as f64) * bigram_fraction).round() as usize;

    let terms: Vec<&str> = index.terms().collect();
    let weights: Vec<u64> = terms
        .iter()
        .map(|t| index.collection_frequency(t))
        .collect();
    let unigram_dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::invalid("synthetic queries", e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shapes = vec![QueryShape::Bigram; bigram_count];
    shapes.resize(count, QueryShape::Unigram);
    shapes.shuffle(&mut rng);

    let mut entries = Vec::with_capacity(count);
    for (i, shape) in shapes.into_iter().enumerate() {
        let text = match shape {
            QueryShape::Unigram => terms[unigram_dist.sample(&mut rng)].to_owned(),
            QueryShape::Bigram => {
                let (a, b) = &index.bigrams()[rng.gen_range(0..index.bigrams().len())];
                format!("{a} {b}")
            }
        };
        entries.push((QueryId::new(&format!("synth-{i}"))?, text));
    }
    QuerySet::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(docs: &[(&str, &str)]) -> Vec<(DocId, String)> {
        docs.iter()
            .map(|(id, text)| (DocId::new(id).unwrap(), (*text).to_owned()))
            .collect()
    }

    fn qid(s: &str) -> QueryId {
        QueryId::new(s).unwrap()
    }

    #[test]
    fn tokenize_cases() {
        assert_eq!(tokenize("The CAT's mat!"), ["the", "cat", "s", "mat"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a1-b2"), ["a1", "b2"]);
        assert_eq!(tokenize("  --Ünïcode  "), ["ünïcode"]);
    }

    #[test]
    fn build_counts() {
        let index = InvertedIndex::build(&corpus(&[("d1", "cat sat"), ("d2", "dog sat")])).unwrap();
        assert_eq!(index.num_docs(), 2);
        assert_eq!(index.document_frequency("sat"), 2);
        assert_eq!(index.document_frequency("cat"), 1);
        assert_eq!(index.avgdl(), 2.0);
        assert_eq!(
            index.postings("sat"),
            [Posting { doc: 0, tf: 1 }, Posting { doc: 1, tf: 1 }]
        );
    }

    #[test]
    fn build_rejects_degenerate_corpora() {
        assert!(InvertedIndex::build(&corpus(&[("d1", "")])).is_err());
        assert!(InvertedIndex::build(&[]).is_err());
        assert!(InvertedIndex::build(&corpus(&[("d1", "a"), ("d1", "b")])).is_err());
    }

    #[test]
    fn search_single_term() {
        let index = InvertedIndex::build(&corpus(&[("d1", "cat sat"), ("d2", "dog sat")])).unwrap();
        let list = index
            .search(qid("q"), "cat", Bm25Params::default(), 100)
            .unwrap();
        assert_eq!(list.len(), 1);
        assert_eq!(list.entries()[0].doc.as_str(), "d1");
        assert!((list.entries()[0].score - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn search_ties_break_by_doc_id() {
        let index = InvertedIndex::build(&corpus(&[("d2", "dog sat"), ("d1", "cat sat")])).unwrap();
        let list = index
            .search(qid("q"), "sat", Bm25Params::default(), 100)
            .unwrap();
        let docs: Vec<_> = list.entries().iter().map(|e| e.doc.as_str()).collect();
        assert_eq!(docs, ["d1", "d2"]);
        assert_eq!(list.entries()[0].score, list.entries()[1].score);
    }

    #[test]
    fn search_out_of_vocabulary_is_empty() {
        let index = InvertedIndex::build(&corpus(&[("d1", "cat sat")])).unwrap();
        assert!(index
            .search(qid("q"), "zebra", Bm25Params::default(), 10)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn search_respects_depth() {
        let index =
            InvertedIndex::build(&corpus(&[("a", "x"), ("b", "x x"), ("c", "x y")])).unwrap();
        let list = index
            .search(qid("q"), "x", Bm25Params::default(), 2)
            .unwrap();
        assert_eq!(list.len(), 2);
    }

    #[test]
    fn synthetic_unigrams_come_from_vocabulary() {
        let index =
            InvertedIndex::build(&corpus(&[("d1", "cat sat on mat"), ("d2", "dog sat")])).unwrap();
        let queries = generate_synthetic_queries(&index, 5, 0.0, 7).unwrap();
        assert_eq!(queries.len(), 5);
        for (id, text) in queries.iter() {
            assert!(id.as_str().starts_with("synth-"));
            assert_eq!(tokenize(text).len(), 1);
            assert!(index.document_frequency(text) > 0);
        }
    }

    #[test]
    fn synthetic_bigram_share_and_adjacency() {
        let docs = corpus(&[("d1", "cat sat on mat"), ("d2", "dog sat")]);
        let index = InvertedIndex::build(&docs).unwrap();
        let queries = generate_synthetic_queries(&index, 4, 0.5, 11).unwrap();
        let bigrams: Vec<_> = queries.iter().filter(|(_, t)| t.contains(' ')).collect();
        assert_eq!(bigrams.len(), 2);
        for (_, text) in bigrams {
            let adjacent = docs.iter().any(|(_, doc)| {
                tokenize(doc)
                    .windows(2)
                    .any(|w| format!("{} {}", w[0], w[1]) == text)
            });
            assert!(adjacent, "{text} is not an adjacent pair");
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_validated() {
        let index = InvertedIndex::build(&corpus(&[("d1", "cat sat on mat")])).unwrap();
        let a = generate_synthetic_queries(&index, 10, 0.3, 5).unwrap();
        let b = generate_synthetic_queries(&index, 10, 0.3, 5).unwrap();
        assert_eq!(a, b);
        let single = InvertedIndex::build(&corpus(&[("d1", "cat"), ("d2", "dog")])).unwrap();
        assert!(generate_synthetic_queries(&single, 3, 0.5, 1).is_err());
        assert!(generate_synthetic_queries(&single, 3, 0.0, 1).is_ok());
        assert!(generate_synthetic_queries(&single, 0, 0.0, 1).is_err());
        assert!(generate_synthetic_queries(&single, 3, 1.5, 1).is_err());
    }
}
