use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use tretr_core::cluster::{cluster_queries, tfidf_vectorize, Init, KMeansConfig, Representation};
use tretr_core::engine::{generate_synthetic_queries, InvertedIndex};
use tretr_core::fairness::{group_report, sweep_csv, sweep_k, table_gini, SweepOptions};
use tretr_core::io::{self as tio, fixed6, EmbeddingMatrix};
use tretr_core::metrics::{map_at_100, ndcg_at_10, write_metrics};
use tretr_core::model::{
    Bm25Params, ClusterAssignment, QuerySet, ReportConfig, RetrievabilityTable, RunTable,
};
use tretr_core::retrievability::{localized_with, retrievability_with, Weighting};

use crate::args::*;

/// Usage errors exit with 1, data errors with 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) | Failure::Data(msg) => f.write_str(msg),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn data(path: &Path) -> impl Fn(tretr_core::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn core(e: tretr_core::Error) -> Failure {
    Failure::Data(e.to_string())
}

fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Data(format!("cannot open {}: {e}", path.display())))
}

/// Collects output in memory so a failed command leaves no partial file.
fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Outcome {
    match out {
        Some(path) => fs::write(path, bytes)
            .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|()| stdout.flush())
                .map_err(|e| Failure::Data(format!("cannot write to standard output: {e}")))
        }
    }
}

fn render(f: impl FnOnce(&mut Vec<u8>) -> tretr_core::Result<()>) -> Outcome<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(core)?;
    Ok(buf)
}

fn load_queries(path: &Path) -> Outcome<QuerySet> {
    tio::parse_queries(open(path)?).map_err(data(path))
}

fn load_run(path: &Path, depth: usize) -> Outcome<RunTable> {
    tio::parse_run(open(path)?, depth).map_err(data(path))
}

fn load_index(path: &Path) -> Outcome<InvertedIndex> {
    let corpus = tio::parse_corpus(open(path)?).map_err(data(path))?;
    InvertedIndex::build(&corpus).map_err(data(path))
}

fn load_embeddings(path: &Path) -> Outcome<EmbeddingMatrix> {
    tio::read_embeddings(open(path)?).map_err(data(path))
}

fn weighting(scoring: &Scoring) -> Outcome<Weighting> {
    Weighting::parse(&scoring.mode, scoring.log_base).map_err(|e| Failure::Usage(e.to_string()))
}

fn embeddings_for(clustering: &Clustering) -> Outcome<Option<EmbeddingMatrix>> {
    match (clustering.repr, &clustering.embeddings) {
        (Repr::Tfidf, _) => Ok(None),
        (Repr::Dense, Some(path)) => load_embeddings(path).map(Some),
        (Repr::Dense, None) => Err(Failure::Usage("--repr dense requires --embeddings".into())),
    }
}

fn representation(matrix: &Option<EmbeddingMatrix>) -> Representation<'_> {
    match matrix {
        Some(m) => Representation::Dense(m),
        None => Representation::Tfidf,
    }
}

fn kmeans_config(k: usize, clustering: &Clustering) -> KMeansConfig {
    let mut config = KMeansConfig::new(k, clustering.seed);
    config.max_iter = clustering.max_iter;
    config.tol = clustering.tol;
    config
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Index(a) => index(a),
        Command::Search(a) => search(a),
        Command::SynthQueries(a) => synth_queries(a),
        Command::Vectorize(a) => vectorize(a),
        Command::Cluster(a) => cluster(a),
        Command::Retrievability(a) => retrievability(a),
        Command::Gini(a) => gini(a),
        Command::Treport(a) => treport(a),
        Command::Sweep(a) => sweep(a),
        Command::Eval(a) => eval(a),
    }
}

fn index(a: IndexArgs) -> Outcome {
    let index = load_index(&a.corpus)?;
    let tokens: u64 = index.doc_lengths().iter().map(|&l| u64::from(l)).sum();
    let stats = json!({
        "documents": index.num_docs(),
        "tokens": tokens,
        "avgdl": index.avgdl(),
        "vocabulary": index.vocabulary_size(),
        "distinct_bigrams": index.bigrams().len(),
    });
    let mut bytes = serde_json::to_vec_pretty(&stats).map_err(|e| Failure::Data(e.to_string()))?;
    bytes.push(b'\n');
    emit(&a.output.out, &bytes)
}

fn search(a: SearchArgs) -> Outcome {
    let params = Bm25Params::new(a.k1, a.b).map_err(|e| Failure::Usage(e.to_string()))?;
    let index = load_index(&a.corpus)?;
    let queries = load_queries(&a.queries)?;
    let run = index
        .search_all(&queries, params, a.depth as usize, &a.tag)
        .map_err(core)?;
    eprintln!(
        "searched {} queries over {} documents; {} returned results",
        queries.len(),
        index.num_docs(),
        run.len()
    );
    emit(&a.output.out, &render(|w| tio::write_run(&run, w))?)
}

fn synth_queries(a: SynthArgs) -> Outcome {
    let index = load_index(&a.corpus)?;
    let queries =
        generate_synthetic_queries(&index, a.count, a.bigram_fraction, a.seed).map_err(core)?;
    emit(&a.output.out, &render(|w| tio::write_queries(&queries, w))?)
}

fn vectorize(a: VectorizeArgs) -> Outcome {
    let queries = load_queries(&a.queries)?;
    let model = tfidf_vectorize(&queries).map_err(data(&a.queries))?;
    let dim = model.vocabulary.len();
    if dim == 0 {
        return Err(Failure::Data(format!(
            "{}: no query has any terms",
            a.queries.display()
        )));
    }
    let values: Vec<f32> = model
        .vectors
        .iter()
        .flat_map(|v| v.to_dense(dim))
        .map(|x| x as f32)
        .collect();
    let matrix = EmbeddingMatrix::new(queries.ids().cloned().collect(), dim, values)
        .and_then(|m| m.with_comment("tfidf"))
        .map_err(core)?;
    emit(
        &a.output.out,
        &render(|w| tio::write_embeddings(&matrix, w))?,
    )
}

fn explicit_init(spec: &str, queries: &QuerySet) -> Outcome<Init> {
    if spec == "plusplus" {
        return Ok(Init::PlusPlus);
    }
    let Some(file) = spec.strip_prefix("explicit:") else {
        return Err(Failure::Usage(format!(
            "invalid --init {spec:?} (expected plusplus or explicit:<file>)"
        )));
    };
    let path = Path::new(file);
    let mut rows = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        let id = line.trim();
        if id.is_empty() {
            continue;
        }
        let row = queries
            .ids()
            .position(|q| q.as_str() == id)
            .ok_or_else(|| {
                Failure::Data(format!(
                    "{}: line {}: unknown query {id}",
                    path.display(),
                    i + 1
                ))
            })?;
        rows.push(row);
    }
    Ok(Init::Explicit(rows))
}

fn cluster(a: ClusterArgs) -> Outcome {
    let matrix = embeddings_for(&a.clustering)?;
    let queries = load_queries(&a.queries)?;
    let mut config = kmeans_config(a.k, &a.clustering);
    config.init = explicit_init(&a.init, &queries)?;
    let (clusters, result) =
        cluster_queries(&queries, representation(&matrix), &config).map_err(core)?;
    eprintln!(
        "k-means: {} iterations, converged: {}, objective {}",
        result.iterations,
        result.converged,
        fixed6(result.centroids.objective)
    );
    emit(
        &a.output.out,
        &render(|w| tio::write_clusters(&clusters, w))?,
    )
}

fn load_clusters(path: &Path, queries: &QuerySet) -> Outcome<ClusterAssignment> {
    let clusters = tio::parse_clusters(open(path)?, None).map_err(data(path))?;
    clusters.check_covers(queries).map_err(data(path))?;
    Ok(clusters)
}

fn retrievability(a: RetrievabilityArgs) -> Outcome {
    let weighting = weighting(&a.scoring)?;
    let depth = a.scoring.depth as usize;
    let queries = load_queries(&a.queries)?;
    let run = load_run(&a.run, depth)?;
    match (a.clusters, a.out_dir) {
        (Some(clusters_path), Some(dir)) => {
            let clusters = load_clusters(&clusters_path, &queries)?;
            let tables =
                localized_with(&run, &queries, &clusters, depth, weighting).map_err(core)?;
            fs::create_dir_all(&dir)
                .map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
            for (group, table) in tables.iter().enumerate() {
                let Some(table) = table else {
                    eprintln!("group {group} has no queries; no table written");
                    continue;
                };
                let bytes = render(|w| tio::write_table(table, w))?;
                emit(&Some(dir.join(format!("group-{group}.csv"))), &bytes)?;
            }
            Ok(())
        }
        _ => {
            let table = retrievability_with(&run, &queries, depth, weighting, Default::default())
                .map_err(core)?;
            emit(&a.output.out, &render(|w| tio::write_table(&table, w))?)
        }
    }
}

fn gini(a: GiniArgs) -> Outcome {
    let scores = tio::read_table(open(&a.table)?).map_err(data(&a.table))?;
    let table = RetrievabilityTable::new(scores, 1, a.universe).map_err(data(&a.table))?;
    let g = table_gini(&table).map_err(data(&a.table))?;
    emit(&a.output.out, format!("{}\n", fixed6(g)).as_bytes())
}

fn treport(a: TreportArgs) -> Outcome {
    let weighting = weighting(&a.scoring)?;
    let depth = a.scoring.depth as usize;
    let queries = load_queries(&a.queries)?;
    let run = load_run(&a.run, depth)?;
    let clusters = load_clusters(&a.clusters, &queries)?;
    let tables = localized_with(&run, &queries, &clusters, depth, weighting)
        .map_err(core)?
        .into_iter()
        .map(|t| t.map(|t| t.with_universe(a.universe)).transpose())
        .collect::<tretr_core::Result<Vec<_>>>()
        .map_err(core)?;
    let config = ReportConfig {
        log_base: a.scoring.log_base,
        depth,
        universe: a.universe,
        clustering: format!("file {}", a.clusters.display()),
        weighting: weighting.to_string(),
    };
    let report = group_report(&tables, config).map_err(core)?;
    let flagged = report.k() - report.groups_used();
    if flagged > 0 {
        eprintln!(
            "{flagged} of {} groups flagged and left out of the aggregates",
            report.k()
        );
    }
    emit(&a.output.out, &render(|w| tio::write_report(&report, w))?)
}

fn sweep(a: SweepArgs) -> Outcome {
    let weighting = weighting(&a.scoring)?;
    let depth = a.scoring.depth as usize;
    let matrix = embeddings_for(&a.clustering)?;
    let queries = load_queries(&a.queries)?;
    let run = load_run(&a.run, depth)?;
    let options = SweepOptions {
        depth,
        weighting,
        kmeans: kmeans_config(1, &a.clustering),
    };
    let reports = sweep_k(&run, &queries, representation(&matrix), &a.k, &options).map_err(core)?;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
        for (k, report) in &reports {
            let bytes = render(|w| tio::write_report(report, w))?;
            emit(&Some(dir.join(format!("report-k{k}.json"))), &bytes)?;
        }
    }
    emit(&a.output.out, sweep_csv(&reports).as_bytes())
}

fn eval(a: EvalArgs) -> Outcome {
    let run = load_run(&a.run, RunTable::DEFAULT_DEPTH)?;
    let qrels = tio::parse_qrels(open(&a.qrels)?).map_err(data(&a.qrels))?;
    let ndcg = ndcg_at_10(&run, &qrels).map_err(data(&a.qrels))?;
    let map = map_at_100(&run, &qrels).map_err(data(&a.qrels))?;
    emit(&a.output.out, &render(|w| write_metrics(&ndcg, &map, w))?)
}
