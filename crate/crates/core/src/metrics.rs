//! nDCG@10 and MAP@100.
//!
//! A query is evaluated when the judgments list at least one relevant
//! (grade > 0) document for it; a judged query missing from the run scores
//! 0. Means are taken over evaluated queries in ascending id order.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::io::fixed6;
use crate::model::{Qrels, QueryId, RankedList, RunTable};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricScores {
    pub per_query: BTreeMap<QueryId, f64>,
    pub mean: f64,
}

fn evaluate(
    run: &RunTable,
    qrels: &Qrels,
    per_query: impl Fn(Option<&RankedList>, &BTreeMap<crate::model::DocId, u32>) -> f64,
) -> Result<MetricScores> {
    let scores: BTreeMap<QueryId, f64> = qrels
        .queries()
        .filter(|(_, judged)| judged.values().any(|&g| g > 0))
        .map(|(query, judged)| (query.clone(), per_query(run.get(query), judged)))
        .collect();
    if scores.is_empty() {
        return Err(Error::NoEvaluableQueries);
    }
    let mean = scores.values().sum::<f64>() / scores.len() as f64;
    Ok(MetricScores {
        per_query: scores,
        mean,
    })
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(rank: usize) -> f64 {
    1.0 / (1.0 + rank as f64).log2()
}

/// nDCG with exponential gain `2^g - 1` and `log2(1 + rank)` discount.
pub fn ndcg_at(run: &RunTable, qrels: &Qrels, cutoff: usize) -> Result<MetricScores> {
    evaluate(run, qrels, |list, judged| {
        let dcg: f64 = list
            .map(|l| l.top(cutoff))
            .unwrap_or(&[])
            .iter()
            .map(|e| gain(judged.get(&e.doc).copied().unwrap_or(0)) * discount(e.rank as usize))
            .sum();
        let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(cutoff)
            .enumerate()
            .map(|(i, &g)| gain(g) * discount(i + 1))
            .sum();
        dcg / idcg
    })
}

/// Average precision over the top `cutoff`, divided by the total number of
/// relevant documents in the judgments.
pub fn map_at(run: &RunTable, qrels: &Qrels, cutoff: usize) -> Result<MetricScores> {
    evaluate(run, qrels, |list, judged| {
        let relevant = judged.values().filter(|&&g| g > 0).count();
        let mut hits = 0usize;
        let mut precision_sum = 0.0;
        for entry in list.map(|l| l.top(cutoff)).unwrap_or(&[]) {
            if judged.get(&entry.doc).is_some_and(|&g| g > 0) {
                hits += 1;
                precision_sum += hits as f64 / entry.rank as f64;
            }
        }
        precision_sum / relevant as f64
    })
}

pub fn ndcg_at_10(run: &RunTable, qrels: &Qrels) -> Result<MetricScores> {
    ndcg_at(run, qrels, 10)
}

pub fn map_at_100(run: &RunTable, qrels: &Qrels) -> Result<MetricScores> {
    map_at(run, qrels, 100)
}

/// Writes `qid,ndcg@10,map@100` rows followed by an `all` summary row.
pub fn write_metrics<W: Write>(
    ndcg: &MetricScores,
    map: &MetricScores,
    mut writer: W,
) -> Result<()> {
    writeln!(writer, "qid,ndcg@10,map@100")?;
    for (query, score) in &ndcg.per_query {
        let ap = map.per_query.get(query).copied().unwrap_or(0.0);
        writeln!(writer, "{query},{},{}", fixed6(*score), fixed6(ap))?;
    }
    writeln!(writer, "all,{},{}", fixed6(ndcg.mean), fixed6(map.mean))?;
    writer.flush()?;
    Ok(())
}
