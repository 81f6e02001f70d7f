//! Shared domain types.
//!
//! Every type validates its invariants when it is constructed and is
//! immutable afterwards, so values can be shared freely between worker
//! threads. Maps are ordered, which makes iteration (and therefore every
//! serialized artifact) deterministic.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

macro_rules! identifier {
    ($(#[$meta:meta])* $name:ident, $what:literal) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Arc<str>);

        impl $name {
            /// Validates that `raw` is a non-empty token without whitespace.
            pub fn new(raw: &str) -> Result<Self> {
                if raw.is_empty() {
                    return Err(Error::invalid($what, "identifier is empty"));
                }
                if raw.chars().any(char::is_whitespace) {
                    return Err(Error::invalid(
                        $what,
                        format!("identifier {raw:?} contains whitespace"),
                    ));
                }
                Ok(Self(Arc::from(raw)))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", &*self.0)
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::new(s)
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

identifier!(
    /// Query identifier. Ordered and compared by raw bytes.
    QueryId,
    "query id"
);
identifier!(
    /// Document identifier. Ordered and compared by raw bytes.
    DocId,
    "document id"
);

/// One retrieved document in a ranked list.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedEntry {
    pub doc: DocId,
    /// 1-based rank.
    pub rank: u32,
    pub score: f64,
}

/// The ranking a system produced for one query.
///
/// Ranks are exactly `1..=n` in order, documents are unique and scores never
/// increase down the list.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    query: QueryId,
    entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn new(query: QueryId, entries: Vec<RankedEntry>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for (i, entry) in entries.iter().enumerate() {
            let expected = i as u64 + 1;
            if u64::from(entry.rank) != expected {
                return Err(Error::invalid(
                    "ranked list",
                    format!(
                        "query {query}: expected rank {expected}, found {}",
                        entry.rank
                    ),
                ));
            }
            if entry.score.is_nan() {
                return Err(Error::invalid(
                    "ranked list",
                    format!("query {query}: NaN score at rank {}", entry.rank),
                ));
            }
            if !seen.insert(&entry.doc) {
                return Err(Error::invalid(
                    "ranked list",
                    format!("query {query}: document {} ranked twice", entry.doc),
                ));
            }
            if i > 0 && entry.score > entries[i - 1].score {
                return Err(Error::invalid(
                    "ranked list",
                    format!(
                        "query {query}: score increases from rank {} to rank {}",
                        entries[i - 1].rank,
                        entry.rank
                    ),
                ));
            }
        }
        Ok(Self { query, entries })
    }

    /// Builds a list from documents already in ranking order, assigning
    /// ranks `1..=n`.
    pub fn from_ordered(query: QueryId, docs: Vec<(DocId, f64)>) -> Result<Self> {
        let entries = docs
            .into_iter()
            .zip(1u32..)
            .map(|((doc, score), rank)| RankedEntry { doc, rank, score })
            .collect();
        Self::new(query, entries)
    }

    pub fn query(&self) -> &QueryId {
        &self.query
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    /// Entries ranked at or above `depth`.
    pub fn top(&self, depth: usize) -> &[RankedEntry] {
        &self.entries[..self.entries.len().min(depth)]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// All ranked lists one system produced, keyed by query.
///
/// Empty lists are not stored: a query without results is simply absent.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTable {
    tag: String,
    lists: BTreeMap<QueryId, RankedList>,
    depth: usize,
}

impl RunTable {
    pub const DEFAULT_DEPTH: usize = 100;

    pub fn new(
        tag: impl Into<String>,
        lists: impl IntoIterator<Item = RankedList>,
        depth: usize,
    ) -> Result<Self> {
        let tag = tag.into();
        if depth == 0 {
            return Err(Error::invalid("run", "depth must be at least 1"));
        }
        if tag.chars().any(char::is_whitespace) {
            return Err(Error::invalid(
                "run",
                format!("tag {tag:?} contains whitespace"),
            ));
        }
        let mut map = BTreeMap::new();
        for list in lists {
            if list.len() > depth {
                return Err(Error::invalid(
                    "run",
                    format!(
                        "query {} has {} entries, more than depth {depth}",
                        list.query(),
                        list.len()
                    ),
                ));
            }
            if list.is_empty() {
                continue;
            }
            let query = list.query().clone();
            if map.insert(query.clone(), list).is_some() {
                return Err(Error::invalid(
                    "run",
                    format!("query {query} appears twice"),
                ));
            }
        }
        if tag.is_empty() && !map.is_empty() {
            return Err(Error::invalid("run", "tag is empty"));
        }
        Ok(Self {
            tag,
            lists: map,
            depth,
        })
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn get(&self, query: &QueryId) -> Option<&RankedList> {
        self.lists.get(query)
    }

    /// Lists in ascending query-id order.
    pub fn lists(&self) -> impl Iterator<Item = &RankedList> {
        self.lists.values()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &QueryId> {
        self.lists.keys()
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

/// An ordered set of queries. File order is preserved.
#[derive(Clone, Debug, PartialEq)]
pub struct QuerySet {
    entries: Vec<(QueryId, String)>,
    positions: HashMap<QueryId, usize>,
}

impl QuerySet {
    pub fn new(entries: Vec<(QueryId, String)>) -> Result<Self> {
        let mut positions = HashMap::with_capacity(entries.len());
        for (i, (id, _)) in entries.iter().enumerate() {
            if positions.insert(id.clone(), i).is_some() {
                return Err(Error::invalid(
                    "query set",
                    format!("duplicate query id {id}"),
                ));
            }
        }
        Ok(Self { entries, positions })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QueryId, &str)> {
        self.entries.iter().map(|(id, text)| (id, text.as_str()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &QueryId> {
        self.entries.iter().map(|(id, _)| id)
    }

    pub fn contains(&self, id: &QueryId) -> bool {
        self.positions.contains_key(id)
    }

    /// Position of `id` in file order.
    pub fn position(&self, id: &QueryId) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn text(&self, id: &QueryId) -> Option<&str> {
        self.position(id).map(|i| self.entries[i].1.as_str())
    }

    /// Query ids in ascending byte order.
    pub fn sorted_ids(&self) -> Vec<&QueryId> {
        let mut ids: Vec<_> = self.ids().collect();
        ids.sort();
        ids
    }
}

/// Graded relevance judgments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Qrels {
    judgments: BTreeMap<QueryId, BTreeMap<DocId, u32>>,
}

impl Qrels {
    pub fn new(triples: impl IntoIterator<Item = (QueryId, DocId, u32)>) -> Result<Self> {
        let mut judgments: BTreeMap<QueryId, BTreeMap<DocId, u32>> = BTreeMap::new();
        for (query, doc, grade) in triples {
            let per_query = judgments.entry(query.clone()).or_default();
            if per_query.insert(doc.clone(), grade).is_some() {
                return Err(Error::invalid(
                    "qrels",
                    format!("pair ({query}, {doc}) judged twice"),
                ));
            }
        }
        Ok(Self { judgments })
    }

    pub fn grade(&self, query: &QueryId, doc: &DocId) -> u32 {
        self.judgments
            .get(query)
            .and_then(|docs| docs.get(doc))
            .copied()
            .unwrap_or(0)
    }

    /// Judgments for one query, by ascending document id.
    pub fn for_query(&self, query: &QueryId) -> Option<&BTreeMap<DocId, u32>> {
        self.judgments.get(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = (&QueryId, &BTreeMap<DocId, u32>)> {
        self.judgments.iter()
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// A partition of a query set into `k` groups with dense 0-based ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterAssignment {
    k: usize,
    assignment: BTreeMap<QueryId, usize>,
}

impl ClusterAssignment {
    pub fn new(k: usize, assignment: BTreeMap<QueryId, usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("cluster assignment", "k must be at least 1"));
        }
        if let Some((query, group)) = assignment.iter().find(|(_, &g)| g >= k) {
            return Err(Error::invalid(
                "cluster assignment",
                format!("query {query} assigned to group {group}, outside [0, {k})"),
            ));
        }
        Ok(Self { k, assignment })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn group_of(&self, query: &QueryId) -> Option<usize> {
        self.assignment.get(query).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QueryId, usize)> {
        self.assignment.iter().map(|(q, &g)| (q, g))
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Members of each group in ascending query-id order.
    pub fn groups(&self) -> Vec<Vec<&QueryId>> {
        let mut groups = vec![Vec::new(); self.k];
        for (query, &group) in &self.assignment {
            groups[group].push(query);
        }
        groups
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &group in self.assignment.values() {
            sizes[group] += 1;
        }
        sizes
    }

    /// Checks that every query of `queries` is assigned and nothing else is.
    pub fn check_covers(&self, queries: &QuerySet) -> Result<()> {
        if let Some(missing) = queries.ids().find(|id| !self.assignment.contains_key(*id)) {
            return Err(Error::invalid(
                "cluster assignment",
                format!("query {missing} has no group"),
            ));
        }
        if let Some(extra) = self.assignment.keys().find(|id| !queries.contains(id)) {
            return Err(Error::invalid(
                "cluster assignment",
                format!("query {extra} is not in the query set"),
            ));
        }
        Ok(())
    }
}

/// Logarithm base used for the reciprocal-log rank weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LogBase {
    #[default]
    E,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::E => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }

    /// `1 / log(1 + rank)`.
    pub fn reciprocal_weight(self, rank: u32) -> f64 {
        1.0 / self.log(1.0 + f64::from(rank))
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogBase::E => "e",
            LogBase::Two => "2",
            LogBase::Ten => "10",
        })
    }
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" => Ok(LogBase::E),
            "2" => Ok(LogBase::Two),
            "10" => Ok(LogBase::Ten),
            other => Err(Error::invalid(
                "log base",
                format!("{other:?} (expected e, 2 or 10)"),
            )),
        }
    }
}

/// The document population a retrievability distribution ranges over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Universe {
    /// Only documents retrieved by at least one query.
    #[default]
    PooledRetrieved,
    /// The whole collection of the given size; unretrieved documents score 0.
    FullCollection(usize),
}

impl fmt::Display for Universe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Universe::PooledRetrieved => f.write_str("pooled"),
            Universe::FullCollection(n) => write!(f, "collection:{n}"),
        }
    }
}

impl FromStr for Universe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "pooled" {
            return Ok(Universe::PooledRetrieved);
        }
        let size = s
            .strip_prefix("collection:")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                Error::invalid(
                    "universe",
                    format!("{s:?} (expected pooled or collection:<N>)"),
                )
            })?;
        Ok(Universe::FullCollection(size))
    }
}

/// Document → retrievability score over a query set or one query group.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievabilityTable {
    scores: BTreeMap<DocId, f64>,
    query_count: usize,
    universe: Universe,
}

impl RetrievabilityTable {
    pub fn new(
        scores: BTreeMap<DocId, f64>,
        query_count: usize,
        universe: Universe,
    ) -> Result<Self> {
        if query_count == 0 {
            return Err(Error::invalid(
                "retrievability table",
                "query count must be positive",
            ));
        }
        if let Some((doc, score)) = scores.iter().find(|(_, s)| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::invalid(
                "retrievability table",
                format!("document {doc} has score {score}"),
            ));
        }
        if let Universe::FullCollection(size) = universe {
            if scores.len() > size {
                return Err(Error::invalid(
                    "retrievability table",
                    format!(
                        "{} scored documents exceed collection size {size}",
                        scores.len()
                    ),
                ));
            }
        }
        Ok(Self {
            scores,
            query_count,
            universe,
        })
    }

    /// Score of `doc`; documents outside the table score 0.
    pub fn score(&self, doc: &DocId) -> f64 {
        self.scores.get(doc).copied().unwrap_or(0.0)
    }

    /// Scored documents in ascending id order.
    pub fn scores(&self) -> &BTreeMap<DocId, f64> {
        &self.scores
    }

    pub fn query_count(&self) -> usize {
        self.query_count
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Same scores, different universe.
    pub fn with_universe(self, universe: Universe) -> Result<Self> {
        Self::new(self.scores, self.query_count, universe)
    }
}

/// Why a group did or did not contribute to the aggregates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupStatus {
    Ok,
    /// No query was assigned to the group.
    EmptyGroup,
    /// The group's queries retrieved no documents.
    EmptyPool,
}

impl GroupStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupStatus::Ok => "ok",
            GroupStatus::EmptyGroup => "empty_group",
            GroupStatus::EmptyPool => "empty_pool",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupGini {
    pub group: usize,
    pub query_count: usize,
    pub pooled_doc_count: usize,
    /// `None` for flagged groups.
    pub gini: Option<f64>,
    pub status: GroupStatus,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregates {
    pub min: f64,
    pub avg: f64,
    pub max: f64,
}

/// Settings a report was computed with, echoed into the serialized report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportConfig {
    pub log_base: LogBase,
    pub depth: usize,
    pub universe: Universe,
    /// Free-form description of how the groups were formed.
    pub clustering: String,
    /// Rank weighting, `reciprocal-log` or `indicator:<c>`.
    pub weighting: String,
}

/// Per-group Ginis and their min/avg/max aggregates.
#[derive(Clone, Debug, PartialEq)]
pub struct FairnessReport {
    k: usize,
    per_group: Vec<GroupGini>,
    aggregates: Aggregates,
    config: ReportConfig,
}

impl FairnessReport {
    pub fn new(
        per_group: Vec<GroupGini>,
        aggregates: Aggregates,
        config: ReportConfig,
    ) -> Result<Self> {
        let k = per_group.len();
        if k == 0 {
            return Err(Error::invalid("fairness report", "no groups"));
        }
        for (i, group) in per_group.iter().enumerate() {
            if group.group != i {
                return Err(Error::invalid(
                    "fairness report",
                    format!("group {} listed at position {i}", group.group),
                ));
            }
            match (group.status, group.gini) {
                (GroupStatus::Ok, Some(g)) if (0.0..1.0).contains(&g) => {}
                (GroupStatus::Ok, g) => {
                    return Err(Error::invalid(
                        "fairness report",
                        format!("group {i} has gini {g:?} outside [0, 1)"),
                    ))
                }
                (_, Some(_)) => {
                    return Err(Error::invalid(
                        "fairness report",
                        format!("flagged group {i} carries a gini"),
                    ))
                }
                (_, None) => {}
            }
        }
        let Aggregates { min, avg, max } = aggregates;
        if !(min <= avg && avg <= max) {
            return Err(Error::invalid(
                "fairness report",
                format!("aggregates out of order: min {min}, avg {avg}, max {max}"),
            ));
        }
        Ok(Self {
            k,
            per_group,
            aggregates,
            config,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn per_group(&self) -> &[GroupGini] {
        &self.per_group
    }

    pub fn aggregates(&self) -> Aggregates {
        self.aggregates
    }

    pub fn config(&self) -> &ReportConfig {
        &self.config
    }

    /// Number of groups that contributed to the aggregates.
    pub fn groups_used(&self) -> usize {
        self.per_group
            .iter()
            .filter(|g| g.status == GroupStatus::Ok)
            .count()
    }
}

/// BM25 free parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bm25Params {
    k1: f64,
    b: f64,
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1.is_finite() && k1 >= 0.0) {
            return Err(Error::invalid("bm25 parameters", format!("k1 = {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::invalid("bm25 parameters", format!("b = {b}")));
        }
        Ok(Self { k1, b })
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}
