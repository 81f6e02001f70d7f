//! Readers and writers for every on-disk artifact.
//!
//! Formats:
//!
//! * run files: `qid Q0 docid rank score tag`, whitespace separated;
//! * qrels: `qid 0 docid grade`;
//! * queries and corpora: `id<TAB>text`;
//! * cluster assignments: CSV `qid,cluster` with a header row;
//! * embedding matrices: the `TRETR-EMB 1` binary layout (see
//!   [`read_embeddings`]);
//! * retrievability tables: CSV `docid,score`;
//! * fairness reports: one JSON document.
//!
//! Writers emit only what the matching parser accepts, so write → read →
//! write is byte-stable for runs, clusters and embedding matrices.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};

use serde::ser::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::model::{
    ClusterAssignment, DocId, FairnessReport, Qrels, QueryId, QuerySet, RankedEntry, RankedList,
    RetrievabilityTable, RunTable,
};

/// Reads `reader` line by line, handing each line (without its terminator)
/// and its 1-based number to `f`.
fn for_each_line<R: BufRead>(
    mut reader: R,
    mut f: impl FnMut(usize, &str) -> Result<()>,
) -> Result<()> {
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            return Ok(());
        }
        line_no += 1;
        let line = buf.strip_suffix('\n').unwrap_or(&buf);
        let line = line.strip_suffix('\r').unwrap_or(line);
        f(line_no, line)?;
    }
}

fn intern(pool: &mut HashSet<DocId>, raw: &str, line: usize) -> Result<DocId> {
    if let Some(doc) = pool.get(raw) {
        return Ok(doc.clone());
    }
    let doc = DocId::new(raw).map_err(|e| Error::parse(line, e.to_string()))?;
    pool.insert(doc.clone());
    Ok(doc)
}

struct PendingEntry {
    line: usize,
    doc: DocId,
    rank: u32,
    score: f64,
}

/// Parses a TREC run, keeping the entries ranked at or above `depth`.
///
/// Lines with a rank beyond `depth` are validated and then dropped. The
/// remaining ranks of every query must be exactly `1..=n` once sorted.
pub fn parse_run<R: BufRead>(reader: R, depth: usize) -> Result<RunTable> {
    if depth == 0 {
        return Err(Error::invalid("run", "depth must be at least 1"));
    }
    let mut pending: BTreeMap<QueryId, Vec<PendingEntry>> = BTreeMap::new();
    let mut docs = HashSet::new();
    let mut tag: Option<String> = None;

    for_each_line(reader, |line_no, line| {
        if line.trim().is_empty() {
            return Ok(());
        }
        let cols: Vec<&str> = line.split_ascii_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::parse(
                line_no,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        let rank: u32 = cols[3].parse().map_err(|_| {
            Error::parse(
                line_no,
                format!("rank {:?} is not a non-negative integer", cols[3]),
            )
        })?;
        if rank == 0 {
            return Err(Error::parse(line_no, "ranks start at 1"));
        }
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("score {:?} is not a number", cols[4])))?;
        if score.is_nan() {
            return Err(Error::parse(line_no, "score is NaN"));
        }
        match &tag {
            None => tag = Some(cols[5].to_owned()),
            Some(t) if t != cols[5] => {
                return Err(Error::parse(
                    line_no,
                    format!("run tag {:?} differs from {t:?}", cols[5]),
                ))
            }
            Some(_) => {}
        }
        if rank as usize > depth {
            return Ok(());
        }
        let query = QueryId::new(cols[0]).map_err(|e| Error::parse(line_no, e.to_string()))?;
        let doc = intern(&mut docs, cols[2], line_no)?;
        pending.entry(query).or_default().push(PendingEntry {
            line: line_no,
            doc,
            rank,
            score,
        });
        Ok(())
    })?;

    let mut lists = Vec::with_capacity(pending.len());
    for (query, mut entries) in pending {
        entries.sort_by_key(|e| e.rank);
        let mut seen = HashSet::with_capacity(entries.len());
        for (i, entry) in entries.iter().enumerate() {
            if entry.rank as usize != i + 1 {
                return Err(Error::parse(
                    entry.line,
                    format!(
                        "query {query}: rank {} found where rank {} was expected",
                        entry.rank,
                        i + 1
                    ),
                ));
            }
            if !seen.insert(&entry.doc) {
                return Err(Error::parse(
                    entry.line,
                    format!("query {query}: document {} listed twice", entry.doc),
                ));
            }
        }
        let entries = entries
            .into_iter()
            .map(|e| RankedEntry {
                doc: e.doc,
                rank: e.rank,
                score: e.score,
            })
            .collect();
        lists.push(RankedList::new(query, entries)?);
    }
    RunTable::new(tag.unwrap_or_default(), lists, depth)
}

/// Writes a run in ascending query order, one line per entry.
pub fn write_run<W: Write>(run: &RunTable, mut writer: W) -> Result<()> {
    for list in run.lists() {
        for entry in list.entries() {
            writeln!(
                writer,
                "{} Q0 {} {} {} {}",
                list.query(),
                entry.doc,
                entry.rank,
                entry.score,
                run.tag()
            )?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Parses `qid 0 docid grade` judgments.
pub fn parse_qrels<R: BufRead>(reader: R) -> Result<Qrels> {
    let mut triples = Vec::new();
    let mut seen = HashSet::new();
    for_each_line(reader, |line_no, line| {
        if line.trim().is_empty() {
            return Ok(());
        }
        let cols: Vec<&str> = line.split_ascii_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                line_no,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let grade: i64 = cols[3]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("grade {:?} is not an integer", cols[3])))?;
        let grade = u32::try_from(grade).map_err(|_| {
            Error::parse(line_no, format!("grade {grade} is negative or too large"))
        })?;
        let query = QueryId::new(cols[0]).map_err(|e| Error::parse(line_no, e.to_string()))?;
        let doc = DocId::new(cols[2]).map_err(|e| Error::parse(line_no, e.to_string()))?;
        if !seen.insert((query.clone(), doc.clone())) {
            return Err(Error::parse(
                line_no,
                format!("pair ({query}, {doc}) judged twice"),
            ));
        }
        triples.push((query, doc, grade));
        Ok(())
    })?;
    Qrels::new(triples)
}

pub fn write_qrels<W: Write>(qrels: &Qrels, mut writer: W) -> Result<()> {
    for (query, docs) in qrels.queries() {
        for (doc, grade) in docs {
            writeln!(writer, "{query} 0 {doc} {grade}")?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn parse_tsv_pairs<R: BufRead>(reader: R) -> Result<Vec<(String, String, usize)>> {
    let mut rows = Vec::new();
    for_each_line(reader, |line_no, line| {
        if line.is_empty() {
            return Ok(());
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(line_no, "missing tab between id and text"))?;
        rows.push((id.to_owned(), text.to_owned(), line_no));
        Ok(())
    })?;
    Ok(rows)
}

/// Parses a `qid<TAB>text` query file. An empty text field is accepted.
pub fn parse_queries<R: BufRead>(reader: R) -> Result<QuerySet> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (id, text, line) in parse_tsv_pairs(reader)? {
        let id = QueryId::new(&id).map_err(|e| Error::parse(line, e.to_string()))?;
        if !seen.insert(id.clone()) {
            return Err(Error::parse(line, format!("duplicate query id {id}")));
        }
        entries.push((id, text));
    }
    QuerySet::new(entries)
}

pub fn write_queries<W: Write>(queries: &QuerySet, mut writer: W) -> Result<()> {
    for (id, text) in queries.iter() {
        writeln!(writer, "{id}\t{text}")?;
    }
    writer.flush()?;
    Ok(())
}

/// Parses a `docid<TAB>text` corpus in file order. Duplicate ids are left
/// for the index builder to reject.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<(DocId, String)>> {
    parse_tsv_pairs(reader)?
        .into_iter()
        .map(|(id, text, line)| {
            let id = DocId::new(&id).map_err(|e| Error::parse(line, e.to_string()))?;
            Ok((id, text))
        })
        .collect()
}

/// A dense row-major matrix of query embeddings.
#[derive(Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<QueryId>,
    dim: usize,
    data: Vec<f32>,
    comment: Option<String>,
}

impl fmt::Debug for EmbeddingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmbeddingMatrix")
            .field("n", &self.ids.len())
            .field("dim", &self.dim)
            .field("comment", &self.comment)
            .finish_non_exhaustive()
    }
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<QueryId>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid(
                "embedding matrix",
                "dimension must be at least 1",
            ));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::invalid(
                "embedding matrix",
                format!(
                    "{} values for {} rows of dimension {dim}",
                    data.len(),
                    ids.len()
                ),
            ));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(*id)) {
            return Err(Error::invalid(
                "embedding matrix",
                format!("duplicate id {dup}"),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "embedding matrix",
                format!("non-finite value in row {} column {}", pos / dim, pos % dim),
            ));
        }
        Ok(Self {
            ids,
            dim,
            data,
            comment: None,
        })
    }

    /// Attaches a free-text note carried at the end of the header line.
    pub fn with_comment(mut self, comment: impl Into<String>) -> Result<Self> {
        let comment = comment.into();
        if comment.contains('\n') || comment.is_empty() {
            return Err(Error::invalid(
                "embedding matrix",
                "header comment must be a non-empty single line",
            ));
        }
        self.comment = Some(comment);
        Ok(self)
    }

    pub fn ids(&self) -> &[QueryId] {
        &self.ids
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn comment(&self) -> Option<&str> {
        self.comment.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

const EMB_MAGIC: &str = "TRETR-EMB";
const EMB_VERSION: &str = "1";

fn parse_canonical_usize(field: &str, what: &str) -> Result<usize> {
    field
        .parse::<usize>()
        .ok()
        .filter(|n| n.to_string() == field)
        .ok_or_else(|| Error::parse(1, format!("{what} {field:?} is not a canonical integer")))
}

/// Reads a `TRETR-EMB 1` matrix.
///
/// Layout: the ASCII header `TRETR-EMB 1 <n> <dim>`, optionally followed by
/// a space and a free-text comment, then `\n`; then `n` newline-terminated
/// UTF-8 ids; then exactly `n * dim` little-endian `f32` values, row-major.
pub fn read_embeddings<R: Read>(mut reader: R) -> Result<EmbeddingMatrix> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;

    let mut cursor = 0usize;
    let mut next_line = |line_no: usize| -> Result<&str> {
        let rest = &bytes[cursor..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(line_no, "unexpected end of file"))?;
        cursor += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| Error::parse(line_no, "line is not UTF-8"))
    };

    let header = next_line(1)?.to_owned();
    let mut fields = header.splitn(5, ' ');
    if fields.next() != Some(EMB_MAGIC) {
        return Err(Error::parse(1, "missing TRETR-EMB magic"));
    }
    match fields.next() {
        Some(EMB_VERSION) => {}
        other => {
            return Err(Error::parse(
                1,
                format!("unsupported version {:?}", other.unwrap_or("")),
            ))
        }
    }
    let n = parse_canonical_usize(fields.next().unwrap_or(""), "row count")?;
    let dim = parse_canonical_usize(fields.next().unwrap_or(""), "dimension")?;
    if dim == 0 {
        return Err(Error::parse(1, "dimension must be at least 1"));
    }
    let comment = match fields.next() {
        Some("") => return Err(Error::parse(1, "empty header comment")),
        other => other.map(str::to_owned),
    };

    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        let line_no = i + 2;
        let raw = next_line(line_no)?;
        ids.push(QueryId::new(raw).map_err(|e| Error::parse(line_no, e.to_string()))?);
    }

    let payload = &bytes[cursor..];
    let expected = n
        .checked_mul(dim)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::parse(1, "matrix size overflows"))?;
    if payload.len() != expected {
        return Err(Error::invalid(
            "embedding matrix",
            format!("payload is {} bytes, expected {expected}", payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let matrix = EmbeddingMatrix::new(ids, dim, data)?;
    match comment {
        Some(c) => matrix.with_comment(c),
        None => Ok(matrix),
    }
}

pub fn write_embeddings<W: Write>(matrix: &EmbeddingMatrix, mut writer: W) -> Result<()> {
    write!(
        writer,
        "{EMB_MAGIC} {EMB_VERSION} {} {}",
        matrix.rows(),
        matrix.dim()
    )?;
    if let Some(comment) = matrix.comment() {
        write!(writer, " {comment}")?;
    }
    writer.write_all(b"\n")?;
    for id in matrix.ids() {
        writeln!(writer, "{id}")?;
    }
    let mut payload = Vec::with_capacity(matrix.data().len() * 4);
    for v in matrix.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&payload)?;
    writer.flush()?;
    Ok(())
}

fn csv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer)
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader)
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(
            1,
            format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                header
            ),
        ));
    }
    Ok(())
}

fn record_line(record: &csv::StringRecord, fallback: usize) -> usize {
    record
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback)
}

/// Parses a `qid,cluster` CSV.
///
/// With `k = Some(k)` every cluster id must lie in `[0, k)`; otherwise `k`
/// is taken as one more than the largest id present.
pub fn parse_clusters<R: Read>(reader: R, k: Option<usize>) -> Result<ClusterAssignment> {
    let mut csv = csv_reader(reader);
    check_header(&mut csv, &["qid", "cluster"])?;
    let mut assignment = BTreeMap::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let line = record_line(&record, i + 2);
        if record.len() != 2 {
            return Err(Error::parse(
                line,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let query = QueryId::new(&record[0]).map_err(|e| Error::parse(line, e.to_string()))?;
        let group: i64 = record[1].parse().map_err(|_| {
            Error::parse(line, format!("cluster {:?} is not an integer", &record[1]))
        })?;
        let group = usize::try_from(group)
            .map_err(|_| Error::parse(line, format!("cluster id {group} is negative")))?;
        if let Some(k) = k {
            if group >= k {
                return Err(Error::parse(
                    line,
                    format!("cluster id {group} is not below k = {k}"),
                ));
            }
        }
        if assignment.insert(query.clone(), group).is_some() {
            return Err(Error::parse(line, format!("query {query} assigned twice")));
        }
    }
    let k = match k {
        Some(k) => k,
        None => assignment
            .values()
            .max()
            .map(|&g| g + 1)
            .ok_or_else(|| Error::invalid("cluster assignment", "no rows"))?,
    };
    ClusterAssignment::new(k, assignment)
}

/// Writes a `qid,cluster` CSV in ascending query order.
pub fn write_clusters<W: Write>(clusters: &ClusterAssignment, writer: W) -> Result<()> {
    let mut csv = csv_writer(writer);
    csv.write_record(["qid", "cluster"])?;
    for (query, group) in clusters.iter() {
        csv.write_record([query.as_str(), &group.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes a retrievability table as `docid,score`, sorted by document id.
pub fn write_table<W: Write>(table: &RetrievabilityTable, writer: W) -> Result<()> {
    let mut csv = csv_writer(writer);
    csv.write_record(["docid", "score"])?;
    for (doc, score) in table.scores() {
        csv.write_record([doc.as_str(), &score.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads a `docid,score` table dump.
pub fn read_table<R: Read>(reader: R) -> Result<BTreeMap<DocId, f64>> {
    let mut csv = csv_reader(reader);
    check_header(&mut csv, &["docid", "score"])?;
    let mut scores = BTreeMap::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let line = record_line(&record, i + 2);
        if record.len() != 2 {
            return Err(Error::parse(
                line,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let doc = DocId::new(&record[0]).map_err(|e| Error::parse(line, e.to_string()))?;
        let score: f64 = record[1]
            .parse()
            .map_err(|_| Error::parse(line, format!("score {:?} is not a number", &record[1])))?;
        if scores.insert(doc.clone(), score).is_some() {
            return Err(Error::parse(line, format!("document {doc} listed twice")));
        }
    }
    Ok(scores)
}

/// Formats a report number: fixed point with six decimals.
pub fn fixed6(value: f64) -> String {
    format!("{value:.6}")
}

struct Fixed6(f64);

impl Serialize for Fixed6 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return serializer.serialize_none();
        }
        let raw = RawValue::from_string(fixed6(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

#[derive(serde::Serialize)]
struct ReportDoc<'a> {
    k: usize,
    per_group: Vec<GroupDoc>,
    aggregates: AggregatesDoc,
    config: ConfigDoc<'a>,
}

#[derive(serde::Serialize)]
struct GroupDoc {
    group: usize,
    query_count: usize,
    pooled_doc_count: usize,
    gini: Option<Fixed6>,
    status: &'static str,
}

#[derive(serde::Serialize)]
struct AggregatesDoc {
    min: Fixed6,
    avg: Fixed6,
    max: Fixed6,
    groups_used: usize,
    groups_flagged: usize,
}

#[derive(serde::Serialize)]
struct ConfigDoc<'a> {
    log_base: String,
    depth: usize,
    universe: String,
    weighting: &'a str,
    clustering: &'a str,
}

/// Serializes a report as pretty-printed JSON followed by a newline.
/// Groups appear in ascending id order; numbers carry six decimals.
pub fn write_report<W: Write>(report: &FairnessReport, mut writer: W) -> Result<()> {
    let aggregates = report.aggregates();
    let config = report.config();
    let used = report.groups_used();
    let doc = ReportDoc {
        k: report.k(),
        per_group: report
            .per_group()
            .iter()
            .map(|g| GroupDoc {
                group: g.group,
                query_count: g.query_count,
                pooled_doc_count: g.pooled_doc_count,
                gini: g.gini.map(Fixed6),
                status: g.status.as_str(),
            })
            .collect(),
        aggregates: AggregatesDoc {
            min: Fixed6(aggregates.min),
            avg: Fixed6(aggregates.avg),
            max: Fixed6(aggregates.max),
            groups_used: used,
            groups_flagged: report.k() - used,
        },
        config: ConfigDoc {
            log_base: config.log_base.to_string(),
            depth: config.depth,
            universe: config.universe.to_string(),
            weighting: &config.weighting,
            clustering: &config.clustering,
        },
    };
    serde_json::to_writer_pretty(&mut writer, &doc)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}
