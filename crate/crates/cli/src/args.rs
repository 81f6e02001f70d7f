use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tretr_core::model::{LogBase, Universe};

#[derive(Parser, Debug)]
#[command(
    name = "tretr",
    version,
    about = "Retrievability and topic-local exposure fairness over TREC runs"
)]
pub struct Cli {
    /// Upper bound on worker threads. Output does not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the BM25 index of a corpus and print its statistics as JSON.
    Index(IndexArgs),
    /// Run BM25 over a query file and write a TREC run.
    Search(SearchArgs),
    /// Sample a simulated query log from a corpus.
    SynthQueries(SynthArgs),
    /// Write TF-IDF query vectors in the binary embedding format.
    Vectorize(VectorizeArgs),
    /// Group queries with K-means.
    Cluster(ClusterArgs),
    /// Per-document retrievability, globally or per query group.
    Retrievability(RetrievabilityArgs),
    /// Gini coefficient of a retrievability table.
    Gini(GiniArgs),
    /// Per-group Ginis and their min/avg/max as a JSON report.
    Treport(TreportArgs),
    /// Repeat clustering and reporting for several group counts.
    Sweep(SweepArgs),
    /// nDCG@10 and MAP@100 of a run against judgments.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct Output {
    /// Output file (standard output when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct Scoring {
    /// Only the top DEPTH results of each query count.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    pub depth: u32,
    #[arg(long, default_value = "e", value_parser = parse_log_base)]
    pub log_base: LogBase,
    /// `reciprocal-log` or `indicator:<c>`.
    #[arg(long, default_value = "reciprocal-log")]
    pub mode: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Repr {
    Tfidf,
    Dense,
}

#[derive(Args, Debug)]
pub struct Clustering {
    #[arg(long, value_enum, default_value = "tfidf")]
    pub repr: Repr,
    /// Query embeddings (required with `--repr dense`).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Args, Debug)]
pub struct IndexArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    pub depth: u32,
    #[arg(long, default_value_t = 1.2)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.75)]
    pub b: f64,
    /// Run tag written in the last column.
    #[arg(long, default_value = "bm25")]
    pub tag: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub count: usize,
    /// Share of queries that are adjacent word pairs.
    #[arg(long, default_value_t = 0.5)]
    pub bigram_fraction: f64,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct VectorizeArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub clustering: Clustering,
    /// `plusplus` or `explicit:<file>` listing one seed query id per line.
    #[arg(long, default_value = "plusplus")]
    pub init: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct RetrievabilityArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[command(flatten)]
    pub scoring: Scoring,
    /// Write one table per group of this assignment into `--out-dir`.
    #[arg(long, requires = "out_dir")]
    pub clusters: Option<PathBuf>,
    #[arg(long, requires = "clusters")]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct GiniArgs {
    /// A `docid,score` table.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, default_value = "pooled", value_parser = parse_universe)]
    pub universe: Universe,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct TreportArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub clusters: PathBuf,
    #[command(flatten)]
    pub scoring: Scoring,
    #[arg(long, default_value = "pooled", value_parser = parse_universe)]
    pub universe: Universe,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// Comma-separated group counts.
    #[arg(long, value_delimiter = ',', required = true)]
    pub k: Vec<usize>,
    #[command(flatten)]
    pub clustering: Clustering,
    #[command(flatten)]
    pub scoring: Scoring,
    /// Also write `report-k<K>.json` for every K into this directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

fn parse_log_base(s: &str) -> Result<LogBase, String> {
    s.parse().map_err(|e: tretr_core::Error| e.to_string())
}

fn parse_universe(s: &str) -> Result<Universe, String> {
    s.parse().map_err(|e: tretr_core::Error| e.to_string())
}
