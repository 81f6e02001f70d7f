//! Topical grouping of queries.
//!
//! Queries are represented either by TF-IDF vectors built over the query
//! set itself or by externally computed dense embeddings, L2-normalized, and
//! partitioned with Lloyd's K-means under squared Euclidean distance.
//!
//! Zero vectors (queries sharing no indexed term) have no direction: they are
//! never used as seeds, take no part in the iterations, and are placed in
//! group 0 once the centroids have converged.

use std::collections::{BTreeMap, HashMap};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::tokenize;
use crate::error::{Error, Result};
use crate::io::EmbeddingMatrix;
use crate::model::{ClusterAssignment, QueryId, QuerySet};

/// A sparse vector with strictly ascending indices and positive values.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
    norm: f64,
}

impl SparseVector {
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::invalid(
                "sparse vector",
                "index and value counts differ",
            ));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "sparse vector",
                "indices are not strictly ascending",
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(
                "sparse vector",
                "values must be finite and positive",
            ));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self {
            indices,
            values,
            norm,
        })
    }

    pub fn zero() -> Self {
        Self {
            indices: Vec::new(),
            values: Vec::new(),
            norm: 0.0,
        }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Current L2 norm.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn normalized(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let values: Vec<f64> = self.values.iter().map(|v| v / self.norm).collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self {
            indices: self.indices.clone(),
            values,
            norm,
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut dense = vec![0.0; dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            dense[i as usize] = v;
        }
        dense
    }
}

/// TF-IDF representation of a query set.
#[derive(Clone, Debug)]
pub struct TfidfModel {
    /// Terms by ordinal, in order of first occurrence.
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
    /// One L2-normalized vector per query, in query-set order.
    pub vectors: Vec<SparseVector>,
}

impl TfidfModel {
    pub fn ordinal(&self, term: &str) -> Option<usize> {
        self.vocabulary.iter().position(|t| t == term)
    }
}

/// Vectorizes queries with raw term counts weighted by the smoothed idf
/// `ln((Nq + 1) / (df + 1)) + 1`, then L2-normalizes each vector.
pub fn tfidf_vectorize(queries: &QuerySet) -> Result<TfidfModel> {
    if queries.is_empty() {
        return Err(Error::invalid("tf-idf", "query set is empty"));
    }
    let mut ordinals: HashMap<String, u32> = HashMap::new();
    let mut vocabulary = Vec::new();
    let mut df: Vec<usize> = Vec::new();
    let mut counts: Vec<BTreeMap<u32, u32>> = Vec::with_capacity(queries.len());

    for (_, text) in queries.iter() {
        let mut tf: BTreeMap<u32, u32> = BTreeMap::new();
        for token in tokenize(text) {
            let next = vocabulary.len() as u32;
            let ordinal = *ordinals.entry(token.clone()).or_insert_with(|| {
                vocabulary.push(token);
                df.push(0);
                next
            });
            *tf.entry(ordinal).or_default() += 1;
        }
        for &ordinal in tf.keys() {
            df[ordinal as usize] += 1;
        }
        counts.push(tf);
    }

    let n = queries.len() as f64;
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| ((n + 1.0) / (d as f64 + 1.0)).ln() + 1.0)
        .collect();
    let vectors = counts
        .into_iter()
        .map(|tf| {
            let (indices, values): (Vec<u32>, Vec<f64>) = tf
                .into_iter()
                .map(|(i, c)| (i, f64::from(c) * idf[i as usize]))
                .unzip();
            SparseVector::new(indices, values).map(|v| v.normalized())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TfidfModel {
        vocabulary,
        idf,
        vectors,
    })
}

/// Points to cluster.
#[derive(Clone, Debug)]
pub enum Vectors {
    Sparse { dim: usize, rows: Vec<SparseVector> },
    Dense { dim: usize, rows: Vec<Vec<f64>> },
}

impl Vectors {
    pub fn len(&self) -> usize {
        match self {
            Vectors::Sparse { rows, .. } => rows.len(),
            Vectors::Dense { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Vectors::Sparse { dim, .. } | Vectors::Dense { dim, .. } => *dim,
        }
    }
}

trait Row: Sync {
    fn sq_norm(&self) -> f64;
    fn sq_dist(&self, centroid: &[f64], centroid_sq_norm: f64) -> f64;
    fn add_into(&self, acc: &mut [f64]);
    fn normalized(&self) -> Self;
}

impl Row for SparseVector {
    fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    fn sq_dist(&self, centroid: &[f64], centroid_sq_norm: f64) -> f64 {
        // ||x - c||^2 = ||c||^2 + sum over nonzeros of (x_i^2 - 2 x_i c_i)
        let mut d = centroid_sq_norm;
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            d += v * v - 2.0 * v * centroid[i as usize];
        }
        d.max(0.0)
    }

    fn add_into(&self, acc: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            acc[i as usize] += v;
        }
    }

    fn normalized(&self) -> Self {
        SparseVector::normalized(self)
    }
}

impl Row for Vec<f64> {
    fn sq_norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum()
    }

    fn sq_dist(&self, centroid: &[f64], _: f64) -> f64 {
        self.iter()
            .zip(centroid)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    fn add_into(&self, acc: &mut [f64]) {
        for (a, v) in acc.iter_mut().zip(self) {
            *a += v;
        }
    }

    fn normalized(&self) -> Self {
        let norm = self.sq_norm().sqrt();
        if norm == 0.0 {
            self.clone()
        } else {
            self.iter().map(|v| v / norm).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Init {
    /// k-means++ seeding driven by the configured seed.
    PlusPlus,
    /// Use the points at these row indices as the initial centroids.
    Explicit(Vec<usize>),
}

#[derive(Clone, Debug)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub init: Init,
    pub max_iter: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
    /// L2-normalize inputs first. When off, zero vectors are ordinary points.
    pub normalize: bool,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            init: Init::PlusPlus,
            max_iter: 100,
            tol: 1e-4,
            normalize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CentroidSet {
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances of the clustered points to their centroid.
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct KMeansResult {
    /// Group of each input row.
    pub labels: Vec<usize>,
    pub centroids: CentroidSet,
    /// Objective after the initial assignment and after every iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Lloyd's K-means.
///
/// Ties in the assignment step go to the lowest centroid id. A centroid left
/// without points is re-seeded with the point farthest from its current
/// centroid (taken from a group that keeps at least one member). The result
/// depends only on the inputs, the seed and the init, never on the number of
/// worker threads.
pub fn kmeans(vectors: &Vectors, config: &KMeansConfig) -> Result<KMeansResult> {
    if config.k == 0 {
        return Err(Error::invalid("k-means", "k must be at least 1"));
    }
    if config.k > vectors.len() {
        return Err(Error::invalid(
            "k-means",
            format!(
                "k = {} exceeds the number of points ({})",
                config.k,
                vectors.len()
            ),
        ));
    }
    if config.max_iter == 0 {
        return Err(Error::invalid("k-means", "max_iter must be at least 1"));
    }
    if !(config.tol.is_finite() && config.tol > 0.0) {
        return Err(Error::invalid("k-means", format!("tol = {}", config.tol)));
    }
    match vectors {
        Vectors::Sparse { dim, rows } => {
            for row in rows {
                if row.indices().last().is_some_and(|&i| i as usize >= *dim) {
                    return Err(Error::invalid("k-means", "sparse index beyond dimension"));
                }
            }
            run_kmeans(rows, *dim, config)
        }
        Vectors::Dense { dim, rows } => {
            if rows.iter().any(|r| r.len() != *dim) {
                return Err(Error::invalid("k-means", "rows differ in dimension"));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::invalid("k-means", "non-finite coordinate"));
            }
            run_kmeans(rows, *dim, config)
        }
    }
}

fn run_kmeans<P: Row + Clone>(
    input: &[P],
    dim: usize,
    config: &KMeansConfig,
) -> Result<KMeansResult> {
    let k = config.k;
    let prepared: Vec<P>;
    let rows: &[P] = if config.normalize {
        prepared = input.iter().map(Row::normalized).collect();
        &prepared
    } else {
        input
    };
    let active: Vec<bool> = rows
        .iter()
        .map(|r| !config.normalize || r.sq_norm() > 0.0)
        .collect();
    let active_count = active.iter().filter(|&&a| a).count();
    if active_count < k {
        return Err(Error::invalid(
            "k-means",
            format!("k = {k} exceeds the number of non-zero points ({active_count})"),
        ));
    }

    let mut centroids = match &config.init {
        Init::Explicit(indices) => explicit_init(rows, dim, &active, indices, k)?,
        Init::PlusPlus => plus_plus_init(rows, dim, &active, k, config.seed),
    };

    let (mut labels, mut dists) = assign(rows, &active, &centroids);
    let mut objective = total(&dists);
    let mut history = vec![objective];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iter {
        iterations += 1;
        repair_empty(&mut labels, &dists, &active, k);
        centroids = update(rows, dim, &active, &labels, k, &centroids);
        let (next_labels, next_dists) = assign(rows, &active, &centroids);
        let next_objective = total(&next_dists);
        history.push(next_objective);
        let decrease = objective - next_objective;
        labels = next_labels;
        dists = next_dists;
        objective = next_objective;
        if decrease <= config.tol * (objective + decrease) {
            converged = true;
            break;
        }
    }

    if cluster_sizes(&labels, &active, k).contains(&0) {
        repair_empty(&mut labels, &dists, &active, k);
        centroids = update(rows, dim, &active, &labels, k, &centroids);
        objective = labels
            .iter()
            .zip(rows)
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|((&l, r), _)| r.sq_dist(&centroids[l], sq_norm(&centroids[l])))
            .sum();
    }

    for (label, &a) in labels.iter_mut().zip(&active) {
        if !a {
            *label = 0;
        }
    }

    Ok(KMeansResult {
        labels,
        centroids: CentroidSet {
            dim,
            centroids,
            objective,
        },
        objective_history: history,
        iterations,
        converged,
    })
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn total(dists: &[f64]) -> f64 {
    dists.iter().sum()
}

fn dense_of<P: Row>(row: &P, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    row.add_into(&mut v);
    v
}

fn explicit_init<P: Row>(
    rows: &[P],
    dim: usize,
    active: &[bool],
    indices: &[usize],
    k: usize,
) -> Result<Vec<Vec<f64>>> {
    if indices.len() != k {
        return Err(Error::invalid(
            "k-means",
            format!("explicit init lists {} indices for k = {k}", indices.len()),
        ));
    }
    let mut seen = std::collections::HashSet::new();
    for &i in indices {
        if i >= rows.len() {
            return Err(Error::invalid(
                "k-means",
                format!("init index {i} out of range"),
            ));
        }
        if !seen.insert(i) {
            return Err(Error::invalid(
                "k-means",
                format!("init index {i} repeated"),
            ));
        }
        if !active[i] {
            return Err(Error::invalid(
                "k-means",
                format!("init index {i} is a zero vector"),
            ));
        }
    }
    Ok(indices.iter().map(|&i| dense_of(&rows[i], dim)).collect())
}

fn plus_plus_init<P: Row>(
    rows: &[P],
    dim: usize,
    active: &[bool],
    k: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<usize> = (0..rows.len()).filter(|&i| active[i]).collect();
    let mut chosen = vec![false; rows.len()];

    let first = candidates[rng.gen_range(0..candidates.len())];
    chosen[first] = true;
    let mut centroids = vec![dense_of(&rows[first], dim)];
    let c_norm = sq_norm(&centroids[0]);
    let mut d2: Vec<f64> = rows
        .iter()
        .map(|r| r.sq_dist(&centroids[0], c_norm))
        .collect();

    while centroids.len() < k {
        let weight_total: f64 = candidates
            .iter()
            .filter(|&&i| !chosen[i])
            .map(|&i| d2[i])
            .sum();
        let pick = if weight_total > 0.0 {
            let target = rng.gen::<f64>() * weight_total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_positive = None;
            for &i in candidates.iter().filter(|&&i| !chosen[i]) {
                if d2[i] <= 0.0 {
                    continue;
                }
                last_positive = Some(i);
                acc += d2[i];
                if acc > target {
                    pick = Some(i);
                    break;
                }
            }
            pick.or(last_positive)
                .expect("positive total implies a positive weight")
        } else {
            let remaining: Vec<usize> =
                candidates.iter().copied().filter(|&i| !chosen[i]).collect();
            remaining[rng.gen_range(0..remaining.len())]
        };
        chosen[pick] = true;
        let centroid = dense_of(&rows[pick], dim);
        let c_norm = sq_norm(&centroid);
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(r.sq_dist(&centroid, c_norm));
        }
        centroids.push(centroid);
    }
    centroids
}

/// Nearest centroid (lowest id on ties) and its distance for every active row.
fn assign<P: Row>(rows: &[P], active: &[bool], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let norms: Vec<f64> = centroids.iter().map(|c| sq_norm(c)).collect();
    rows.par_iter()
        .zip(active.par_iter())
        .map(|(row, &a)| {
            if !a {
                return (0, 0.0);
            }
            let mut best = (0, f64::INFINITY);
            for (j, (c, &n)) in centroids.iter().zip(&norms).enumerate() {
                let d = row.sq_dist(c, n);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .unzip()
}

fn cluster_sizes(labels: &[usize], active: &[bool], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for (&l, &a) in labels.iter().zip(active) {
        if a {
            sizes[l] += 1;
        }
    }
    sizes
}

/// Moves, for each empty cluster, the point farthest from its centroid into
/// it. Donor clusters always keep at least one point.
fn repair_empty(labels: &mut [usize], dists: &[f64], active: &[bool], k: usize) {
    let mut sizes = cluster_sizes(labels, active, k);
    let mut moved = vec![false; labels.len()];
    for empty in 0..k {
        if sizes[empty] != 0 {
            continue;
        }
        let mut best: Option<usize> = None;
        for i in 0..labels.len() {
            if !active[i] || moved[i] || sizes[labels[i]] < 2 {
                continue;
            }
            if best.is_none_or(|b| dists[i] > dists[b]) {
                best = Some(i);
            }
        }
        let Some(i) = best else { continue };
        sizes[labels[i]] -= 1;
        labels[i] = empty;
        sizes[empty] += 1;
        moved[i] = true;
    }
}

/// Means of the active members of each cluster, summed in row order.
/// Empty clusters keep their previous centroid.
fn update<P: Row>(
    rows: &[P],
    dim: usize,
    active: &[bool],
    labels: &[usize],
    k: usize,
    previous: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for ((row, &a), &l) in rows.iter().zip(active).zip(labels) {
        if a {
            row.add_into(&mut sums[l]);
            counts[l] += 1;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(previous)
        .map(|((mut sum, count), prev)| {
            if count == 0 {
                prev.clone()
            } else {
                let c = count as f64;
                sum.iter_mut().for_each(|v| *v /= c);
                sum
            }
        })
        .collect()
}

/// How queries are turned into vectors before clustering.
#[derive(Clone, Copy, Debug)]
pub enum Representation<'a> {
    Tfidf,
    Dense(&'a EmbeddingMatrix),
}

impl Representation<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Representation::Tfidf => "tfidf",
            Representation::Dense(_) => "dense",
        }
    }
}

/// Builds the clustering input for `queries`, rows in query-set order.
pub fn query_vectors(queries: &QuerySet, representation: Representation<'_>) -> Result<Vectors> {
    match representation {
        Representation::Tfidf => {
            let model = tfidf_vectorize(queries)?;
            Ok(Vectors::Sparse {
                dim: model.vocabulary.len().max(1),
                rows: model.vectors,
            })
        }
        Representation::Dense(matrix) => {
            let rows_by_id: HashMap<&QueryId, usize> = matrix
                .ids()
                .iter()
                .enumerate()
                .map(|(i, id)| (id, i))
                .collect();
            if let Some(extra) = matrix.ids().iter().find(|id| !queries.contains(id)) {
                return Err(Error::invalid(
                    "embedding matrix",
                    format!("row {extra} is not in the query set"),
                ));
            }
            let rows = queries
                .ids()
                .map(|id| {
                    let &row = rows_by_id.get(id).ok_or_else(|| {
                        Error::invalid("embedding matrix", format!("no row for query {id}"))
                    })?;
                    Ok(matrix.row(row).iter().map(|&v| f64::from(v)).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            Ok(Vectors::Dense {
                dim: matrix.dim(),
                rows,
            })
        }
    }
}

/// Vectorizes and clusters `queries`. Explicit init indices refer to
/// query-set order.
pub fn cluster_queries(
    queries: &QuerySet,
    representation: Representation<'_>,
    config: &KMeansConfig,
) -> Result<(ClusterAssignment, KMeansResult)> {
    let vectors = query_vectors(queries, representation)?;
    let mut config = config.clone();
    config.normalize = true;
    let result = kmeans(&vectors, &config)?;
    let assignment = queries
        .ids()
        .cloned()
        .zip(result.labels.iter().copied())
        .collect();
    Ok((ClusterAssignment::new(config.k, assignment)?, result))
}
