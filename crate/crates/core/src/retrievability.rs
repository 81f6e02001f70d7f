//! Retrievability scores.
//!
//! The retrievability of a document is its rank weight averaged over a query
//! set, where the weight is `1 / log(1 + rank)` inside the top `depth` and 0
//! elsewhere. The older cut-off form, which counts how often a document
//! appears in the top `c`, is available as [`Weighting::Indicator`].
//!
//! Queries that are in the query set but have no results still count in the
//! normalizer. Per-query contributions are merged in ascending query-id
//! order, so results are bit-identical however the work is scheduled.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    ClusterAssignment, DocId, LogBase, QueryId, QuerySet, RetrievabilityTable, RunTable, Universe,
};

/// Weight a document earns from one query given its rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    /// `1 / log_base(1 + rank)`.
    ReciprocalLog(LogBase),
    /// 1 when `rank <= c`, otherwise 0.
    Indicator(usize),
}

impl Default for Weighting {
    fn default() -> Self {
        Weighting::ReciprocalLog(LogBase::E)
    }
}

impl Weighting {
    pub fn weight(self, rank: u32) -> f64 {
        match self {
            Weighting::ReciprocalLog(base) => base.reciprocal_weight(rank),
            Weighting::Indicator(c) => {
                if (rank as usize) <= c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Largest weight any single query can contribute.
    pub fn max_weight(self) -> f64 {
        self.weight(1)
    }

    fn validate(self) -> Result<()> {
        match self {
            Weighting::Indicator(0) => {
                Err(Error::invalid("weighting", "cut-off must be at least 1"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weighting::ReciprocalLog(_) => f.write_str("reciprocal-log"),
            Weighting::Indicator(c) => write!(f, "indicator:{c}"),
        }
    }
}

impl Weighting {
    /// Parses `reciprocal-log` or `indicator:<c>`; the log base applies to
    /// the former.
    pub fn parse(mode: &str, base: LogBase) -> Result<Self> {
        if mode == "reciprocal-log" {
            return Ok(Weighting::ReciprocalLog(base));
        }
        mode.strip_prefix("indicator:")
            .and_then(|c| c.parse::<usize>().ok())
            .filter(|&c| c > 0)
            .map(Weighting::Indicator)
            .ok_or_else(|| {
                Error::invalid(
                    "mode",
                    format!("{mode:?} (expected reciprocal-log or indicator:<c>)"),
                )
            })
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Weighting::parse(s, LogBase::E)
    }
}

fn check_run_queries(run: &RunTable, queries: &QuerySet) -> Result<()> {
    if let Some(stray) = run.query_ids().find(|id| !queries.contains(id)) {
        return Err(Error::invalid(
            "run",
            format!("query {stray} is not in the query set"),
        ));
    }
    Ok(())
}

/// Sums of rank weights per document over `members` (ascending ids).
fn accumulate(
    run: &RunTable,
    members: &[&QueryId],
    depth: usize,
    weighting: Weighting,
) -> HashMap<DocId, f64> {
    let mut sums: HashMap<DocId, f64> = HashMap::new();
    for query in members {
        let Some(list) = run.get(query) else { continue };
        for entry in list.top(depth) {
            let w = weighting.weight(entry.rank);
            if w > 0.0 {
                *sums.entry(entry.doc.clone()).or_default() += w;
            }
        }
    }
    sums
}

fn table_over(
    run: &RunTable,
    members: &[&QueryId],
    depth: usize,
    weighting: Weighting,
    universe: Universe,
) -> Result<RetrievabilityTable> {
    let normalizer = members.len() as f64;
    let scores: BTreeMap<DocId, f64> = accumulate(run, members, depth, weighting)
        .into_iter()
        .map(|(doc, sum)| (doc, sum / normalizer))
        .collect();
    RetrievabilityTable::new(scores, members.len(), universe)
}

/// Retrievability of every retrieved document over the whole query set,
/// under any weighting.
pub fn retrievability_with(
    run: &RunTable,
    queries: &QuerySet,
    depth: usize,
    weighting: Weighting,
    universe: Universe,
) -> Result<RetrievabilityTable> {
    if depth == 0 {
        return Err(Error::invalid("retrievability", "depth must be at least 1"));
    }
    if queries.is_empty() {
        return Err(Error::invalid("retrievability", "query set is empty"));
    }
    weighting.validate()?;
    check_run_queries(run, queries)?;
    table_over(run, &queries.sorted_ids(), depth, weighting, universe)
}

/// Reciprocal-log retrievability over the whole query set.
pub fn retrievability_global(
    run: &RunTable,
    queries: &QuerySet,
    depth: usize,
    log_base: LogBase,
    universe: Universe,
) -> Result<RetrievabilityTable> {
    retrievability_with(
        run,
        queries,
        depth,
        Weighting::ReciprocalLog(log_base),
        universe,
    )
}

/// Fraction of queries that rank each document within the top `c`.
pub fn retrievability_indicator(
    run: &RunTable,
    queries: &QuerySet,
    c: usize,
) -> Result<RetrievabilityTable> {
    if c == 0 {
        return Err(Error::invalid(
            "retrievability",
            "cut-off must be at least 1",
        ));
    }
    retrievability_with(
        run,
        queries,
        run.depth(),
        Weighting::Indicator(c),
        Universe::PooledRetrieved,
    )
}

/// One retrievability table per query group, each normalized by its own
/// group size and ranging over the documents its queries retrieved.
///
/// Groups with no queries yield `None`.
pub fn localized_with(
    run: &RunTable,
    queries: &QuerySet,
    clusters: &ClusterAssignment,
    depth: usize,
    weighting: Weighting,
) -> Result<Vec<Option<RetrievabilityTable>>> {
    if depth == 0 {
        return Err(Error::invalid("retrievability", "depth must be at least 1"));
    }
    weighting.validate()?;
    check_run_queries(run, queries)?;
    clusters.check_covers(queries)?;
    clusters
        .groups()
        .par_iter()
        .map(|members| {
            if members.is_empty() {
                Ok(None)
            } else {
                table_over(run, members, depth, weighting, Universe::PooledRetrieved).map(Some)
            }
        })
        .collect()
}

/// Reciprocal-log retrievability per query group.
pub fn retrievability_local(
    run: &RunTable,
    queries: &QuerySet,
    clusters: &ClusterAssignment,
    depth: usize,
    log_base: LogBase,
) -> Result<Vec<Option<RetrievabilityTable>>> {
    localized_with(
        run,
        queries,
        clusters,
        depth,
        Weighting::ReciprocalLog(log_base),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RankedList;
    use std::f64::consts::LN_2;

    fn qid(s: &str) -> QueryId {
        QueryId::new(s).unwrap()
    }

    fn did(s: &str) -> DocId {
        DocId::new(s).unwrap()
    }

    fn run(lists: &[(&str, &[&str])]) -> RunTable {
        let lists = lists.iter().map(|(q, docs)| {
            let n = docs.len();
            RankedList::from_ordered(
                qid(q),
                docs.iter()
                    .enumerate()
                    .map(|(i, d)| (did(d), (n - i) as f64))
                    .collect(),
            )
            .unwrap()
        });
        RunTable::new("sys", lists, 100).unwrap()
    }

    fn query_set(ids: &[&str]) -> QuerySet {
        QuerySet::new(ids.iter().map(|id| (qid(id), String::new())).collect()).unwrap()
    }

    #[test]
    fn single_query_rank_one() {
        let table = retrievability_global(
            &run(&[("q1", &["A"])]),
            &query_set(&["q1"]),
            100,
            LogBase::E,
            Universe::PooledRetrieved,
        )
        .unwrap();
        assert!((table.score(&did("A")) - 1.0 / LN_2).abs() < 1e-15);
    }

    #[test]
    fn two_queries() {
        let table = retrievability_global(
            &run(&[("q1", &["A", "B"]), ("q2", &["B"])]),
            &query_set(&["q1", "q2"]),
            100,
            LogBase::E,
            Universe::PooledRetrieved,
        )
        .unwrap();
        let a = (1.0 / LN_2) / 2.0;
        let b = (1.0 / 3f64.ln() + 1.0 / LN_2) / 2.0;
        assert!((table.score(&did("A")) - a).abs() < 1e-15);
        assert!((table.score(&did("B")) - b).abs() < 1e-15);
        assert!((table.score(&did("A")) - 0.721_348).abs() < 1e-6);
        assert!((table.score(&did("B")) - 1.176_467).abs() < 1e-6);
        assert!(table.score(&did("B")) <= 1.0 / LN_2);
    }

    #[test]
    fn unretrieved_documents_score_zero() {
        let table = retrievability_global(
            &run(&[("q1", &["A"])]),
            &query_set(&["q1"]),
            100,
            LogBase::E,
            Universe::FullCollection(10),
        )
        .unwrap();
        assert_eq!(table.score(&did("Z")), 0.0);
        assert_eq!(table.universe(), Universe::FullCollection(10));
    }

    #[test]
    fn queries_without_results_count_in_the_normalizer() {
        let table = retrievability_global(
            &run(&[("q1", &["A"])]),
            &query_set(&["q1", "q2", "q3", "q4"]),
            100,
            LogBase::Two,
            Universe::PooledRetrieved,
        )
        .unwrap();
        assert_eq!(table.score(&did("A")), 0.25);
        assert_eq!(table.query_count(), 4);
    }

    #[test]
    fn global_errors() {
        let r = run(&[("q1", &["A"])]);
        assert!(retrievability_global(
            &r,
            &query_set(&["q2"]),
            100,
            LogBase::E,
            Universe::PooledRetrieved
        )
        .is_err());
        assert!(retrievability_global(
            &r,
            &query_set(&["q1"]),
            0,
            LogBase::E,
            Universe::PooledRetrieved
        )
        .is_err());
    }

    #[test]
    fn depth_truncates() {
        let table = retrievability_global(
            &run(&[("q1", &["A", "B", "C"])]),
            &query_set(&["q1"]),
            2,
            LogBase::E,
            Universe::PooledRetrieved,
        )
        .unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.score(&did("C")), 0.0);
    }

    #[test]
    fn indicator_cases() {
        let r = run(&[("q1", &["A", "C"]), ("q2", &["B", "C"])]);
        let set = query_set(&["q1", "q2"]);
        let table = retrievability_indicator(&r, &set, 1).unwrap();
        assert_eq!(table.score(&did("A")), 0.5);
        assert_eq!(table.score(&did("B")), 0.5);
        assert_eq!(table.score(&did("C")), 0.0);
        assert!(retrievability_indicator(&r, &set, 0).is_err());

        let spread = run(&[("q1", &["A"]), ("q2", &["B"]), ("q3", &["C"])]);
        let table =
            retrievability_indicator(&spread, &query_set(&["q1", "q2", "q3"]), 500).unwrap();
        for doc in ["A", "B", "C"] {
            assert_eq!(table.score(&did(doc)), 1.0 / 3.0);
        }
    }

    #[test]
    fn local_single_group_matches_global() {
        let r = run(&[("q1", &["A", "B"]), ("q2", &["B", "C"]), ("q3", &["C"])]);
        let set = query_set(&["q1", "q2", "q3"]);
        let clusters =
            ClusterAssignment::new(1, set.ids().map(|q| (q.clone(), 0)).collect()).unwrap();
        let local = retrievability_local(&r, &set, &clusters, 100, LogBase::E).unwrap();
        let global =
            retrievability_global(&r, &set, 100, LogBase::E, Universe::PooledRetrieved).unwrap();
        assert_eq!(local, vec![Some(global)]);
    }

    #[test]
    fn local_disjoint_singletons() {
        let r = run(&[("q1", &["A", "B"]), ("q2", &["C"])]);
        let set = query_set(&["q1", "q2"]);
        let clusters =
            ClusterAssignment::new(2, [(qid("q1"), 0), (qid("q2"), 1)].into_iter().collect())
                .unwrap();
        let local = retrievability_local(&r, &set, &clusters, 100, LogBase::E).unwrap();
        let g0 = local[0].as_ref().unwrap();
        let g1 = local[1].as_ref().unwrap();
        assert_eq!(g0.score(&did("A")), 1.0 / LN_2);
        assert_eq!(g0.score(&did("B")), 1.0 / 3f64.ln());
        assert_eq!(g1.score(&did("C")), 1.0 / LN_2);
        assert_eq!((g0.len(), g1.len()), (2, 1));
    }

    #[test]
    fn local_flags_empty_groups_and_pools() {
        let r = run(&[("q1", &["A"])]);
        let set = query_set(&["q1", "q2"]);
        let clusters =
            ClusterAssignment::new(3, [(qid("q1"), 0), (qid("q2"), 2)].into_iter().collect())
                .unwrap();
        let local = retrievability_local(&r, &set, &clusters, 100, LogBase::E).unwrap();
        assert!(local[1].is_none());
        let empty_pool = local[2].as_ref().unwrap();
        assert!(empty_pool.is_empty());
        assert_eq!(empty_pool.query_count(), 1);

        let partial = ClusterAssignment::new(1, [(qid("q1"), 0)].into_iter().collect()).unwrap();
        assert!(retrievability_local(&r, &set, &partial, 100, LogBase::E).is_err());
    }

    #[test]
    fn weighting_parse() {
        assert_eq!(
            Weighting::parse("reciprocal-log", LogBase::Two).unwrap(),
            Weighting::ReciprocalLog(LogBase::Two)
        );
        assert_eq!(
            "indicator:10".parse::<Weighting>().unwrap(),
            Weighting::Indicator(10)
        );
        assert!("indicator:0".parse::<Weighting>().is_err());
        assert!("rbp".parse::<Weighting>().is_err());
    }
}
