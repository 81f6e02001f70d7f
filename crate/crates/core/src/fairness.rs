//! Inequality of document exposure.
//!
//! [`gini`] measures how unevenly retrievability is spread over documents.
//! [`group_report`] computes one Gini per query group and summarises
//! them by their minimum (best case), unweighted mean and maximum (worst
//! case). [`sweep_k`] repeats the whole grouping for several group counts.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::cluster::{cluster_queries, KMeansConfig, Representation};
use crate::error::{Error, Result};
use crate::io::fixed6;
use crate::model::{
    Aggregates, FairnessReport, GroupGini, GroupStatus, QuerySet, ReportConfig,
    RetrievabilityTable, RunTable, Universe,
};
use crate::retrievability::{localized_with, Weighting};

/// Gini coefficient of a non-negative distribution, without small-sample
/// correction.
///
/// With `x` sorted ascending, `G = sum_i (2i - n - 1) x_i / (n sum x)`,
/// which equals `2 sum_i i x_i / (n sum x) - (n + 1) / n`.
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("gini input", "no values"));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::invalid(
            "gini input",
            format!("value {v} is negative or not finite"),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let sum: f64 = sorted.iter().sum();
    if sum <= 0.0 {
        return Err(Error::Degenerate("all values are zero".into()));
    }
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
        .sum();
    Ok((weighted / (n * sum)).max(0.0))
}

/// The score distribution a Gini is computed over.
///
/// A pooled table yields the scores of its retrieved documents; a
/// full-collection table of size `N` adds one zero per unretrieved document.
pub fn materialize(table: &RetrievabilityTable) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = table.scores().values().copied().collect();
    if let Universe::FullCollection(size) = table.universe() {
        let retrieved = values.len();
        if size < retrieved {
            return Err(Error::invalid(
                "universe",
                format!("collection size {size} is below the {retrieved} retrieved documents"),
            ));
        }
        values.resize(size, 0.0);
    }
    Ok(values)
}

/// Gini of one table's materialized distribution.
pub fn table_gini(table: &RetrievabilityTable) -> Result<f64> {
    gini(&materialize(table)?)
}

/// Per-group Ginis and their min/avg/max.
///
/// Groups without queries and groups whose queries retrieved nothing are
/// flagged in the report and left out of the aggregates.
pub fn group_report(
    tables: &[Option<RetrievabilityTable>],
    config: ReportConfig,
) -> Result<FairnessReport> {
    let per_group = tables
        .par_iter()
        .enumerate()
        .map(|(group, table)| match table {
            None => Ok(GroupGini {
                group,
                query_count: 0,
                pooled_doc_count: 0,
                gini: None,
                status: GroupStatus::EmptyGroup,
            }),
            Some(t) if t.scores().values().all(|&v| v == 0.0) => Ok(GroupGini {
                group,
                query_count: t.query_count(),
                pooled_doc_count: t.len(),
                gini: None,
                status: GroupStatus::EmptyPool,
            }),
            Some(t) => Ok(GroupGini {
                group,
                query_count: t.query_count(),
                pooled_doc_count: t.len(),
                gini: Some(table_gini(t)?),
                status: GroupStatus::Ok,
            }),
        })
        .collect::<Result<Vec<_>>>()?;

    let ginis: Vec<f64> = per_group.iter().filter_map(|g| g.gini).collect();
    if ginis.is_empty() {
        return Err(Error::invalid(
            "fairness report",
            "every group is empty; nothing to aggregate",
        ));
    }
    FairnessReport::new(per_group, aggregate(&ginis), config)
}

/// min, unweighted mean and max. The mean is clamped into `[min, max]` so
/// rounding can never break the ordering.
pub fn aggregate(values: &[f64]) -> Aggregates {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let avg = values.iter().sum::<f64>() / values.len() as f64;
    Aggregates {
        min,
        avg: avg.clamp(min, max),
        max,
    }
}

/// Options shared by every step of a K sweep.
#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub depth: usize,
    pub weighting: Weighting,
    /// Clustering settings; `k` is overridden by each sweep value.
    pub kmeans: KMeansConfig,
}

/// Clusters, localizes and aggregates once per value of `k_values`.
pub fn sweep_k(
    run: &RunTable,
    queries: &QuerySet,
    representation: Representation<'_>,
    k_values: &[usize],
    options: &SweepOptions,
) -> Result<Vec<(usize, FairnessReport)>> {
    if k_values.is_empty() {
        return Err(Error::invalid("sweep", "no k values"));
    }
    if let Some(&bad) = k_values.iter().find(|&&k| k == 0 || k > queries.len()) {
        return Err(Error::invalid(
            "sweep",
            format!("k = {bad} is outside [1, {}]", queries.len()),
        ));
    }
    k_values
        .iter()
        .map(|&k| {
            let mut kmeans = options.kmeans.clone();
            kmeans.k = k;
            let (clusters, _) = cluster_queries(queries, representation, &kmeans)?;
            let tables = localized_with(run, queries, &clusters, options.depth, options.weighting)?;
            let config = ReportConfig {
                log_base: match options.weighting {
                    Weighting::ReciprocalLog(base) => base,
                    Weighting::Indicator(_) => Default::default(),
                },
                depth: options.depth,
                universe: Universe::PooledRetrieved,
                clustering: format!(
                    "kmeans repr={} k={k} seed={}",
                    representation.name(),
                    kmeans.seed
                ),
                weighting: options.weighting.to_string(),
            };
            Ok((k, group_report(&tables, config)?))
        })
        .collect()
}

/// Plot-ready `k,min,avg,max` CSV, one row per report.
pub fn sweep_csv(reports: &[(usize, FairnessReport)]) -> String {
    let mut out = String::from("k,min,avg,max\n");
    for (k, report) in reports {
        let a = report.aggregates();
        let _ = writeln!(
            out,
            "{k},{},{},{}",
            fixed6(a.min),
            fixed6(a.avg),
            fixed6(a.max)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DocId, LogBase};
    use std::collections::BTreeMap;

    fn table(scores: &[(&str, f64)], universe: Universe) -> RetrievabilityTable {
        let scores: BTreeMap<_, _> = scores
            .iter()
            .map(|(d, s)| (DocId::new(d).unwrap(), *s))
            .collect();
        RetrievabilityTable::new(scores, 1, universe).unwrap()
    }

    fn config() -> ReportConfig {
        ReportConfig {
            log_base: LogBase::E,
            depth: 100,
            universe: Universe::PooledRetrieved,
            clustering: "test".into(),
            weighting: "reciprocal-log".into(),
        }
    }

    #[test]
    fn gini_fixed_cases() {
        assert_eq!(gini(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(gini(&[0.0, 0.0, 0.0, 1.0]).unwrap(), 0.75);
        assert_eq!(gini(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.25);
        assert_eq!(gini(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 0.25);
        assert_eq!(gini(&[7.0]).unwrap(), 0.0);
    }

    #[test]
    fn gini_errors() {
        assert!(gini(&[]).is_err());
        assert!(matches!(gini(&[0.0, 0.0]), Err(Error::Degenerate(_))));
        assert!(gini(&[1.0, -1.0]).is_err());
        assert!(gini(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn materialize_cases() {
        let pooled = table(&[("A", 0.5), ("B", 0.25)], Universe::PooledRetrieved);
        assert_eq!(materialize(&pooled).unwrap(), [0.5, 0.25]);
        let full = pooled
            .clone()
            .with_universe(Universe::FullCollection(4))
            .unwrap();
        assert_eq!(materialize(&full).unwrap(), [0.5, 0.25, 0.0, 0.0]);
        assert!(pooled.with_universe(Universe::FullCollection(1)).is_err());
    }

    #[test]
    fn aggregates_of_two_groups() {
        let equal = table(&[("A", 1.0), ("B", 1.0)], Universe::PooledRetrieved);
        let skewed = table(&[("A", 1.0), ("B", 3.0)], Universe::PooledRetrieved);
        let g2 = gini(&[1.0, 3.0]).unwrap();
        let report = group_report(&[Some(equal), Some(skewed)], config()).unwrap();
        let a = report.aggregates();
        assert_eq!((a.min, a.avg, a.max), (0.0, g2 / 2.0, g2));
    }

    #[test]
    fn flagged_groups_are_excluded() {
        let ok = table(&[("A", 1.0), ("B", 3.0)], Universe::PooledRetrieved);
        let empty_pool = table(&[], Universe::PooledRetrieved);
        let report = group_report(&[Some(ok), None, Some(empty_pool.clone())], config()).unwrap();
        assert_eq!(report.groups_used(), 1);
        assert_eq!(report.per_group()[1].status, GroupStatus::EmptyGroup);
        assert_eq!(report.per_group()[2].status, GroupStatus::EmptyPool);
        let a = report.aggregates();
        assert_eq!(a.min, a.max);
        assert!(group_report(&[None, Some(empty_pool)], config()).is_err());
    }

    #[test]
    fn mean_stays_within_bounds() {
        let values = vec![0.1; 7];
        let a = aggregate(&values);
        assert!(a.min <= a.avg && a.avg <= a.max);
    }

    #[test]
    fn sweep_csv_format() {
        let t = table(&[("A", 1.0), ("B", 3.0)], Universe::PooledRetrieved);
        let report = group_report(&[Some(t)], config()).unwrap();
        assert_eq!(
            sweep_csv(&[(1, report)]),
            "k,min,avg,max\n1,0.250000,0.250000,0.250000\n"
        );
    }
}
