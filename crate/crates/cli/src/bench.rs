use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Args, ValueEnum};
use serde::Serialize;

use elastic_core::bench::{
    bench_cf, bench_knn, write_bench_csv, CfAlgorithm, CfBench, KnnAlgorithm, KnnBench, KnnMetric,
};
use elastic_core::coding::build_dual_rtrees;
use elastic_core::dataset::{parse_libsvm, parse_ratings_csv};

use crate::code::{load_book, RtreeArgs, Task};
use crate::output::{open, render, Context};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    Accuracy,
    Auc,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// Name written in the dataset column; defaults to the test file stem.
    #[arg(long)]
    pub dataset: Option<String>,
    /// LIBSVM training file (knn).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// LIBSVM test file (knn) or held-out ratings CSV (cf).
    #[arg(long)]
    pub test: PathBuf,
    /// Codebook; for knn it is built from --train when absent.
    #[arg(long)]
    pub book: Option<PathBuf>,
    #[command(flatten)]
    pub rtree: RtreeArgs,
    /// Comma-separated algorithms; all when absent.
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Vec<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "accuracy")]
    pub metrics: Vec<MetricArg>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Children per split of the RectTree baseline.
    #[arg(long, default_value_t = 2)]
    pub branching: usize,
    /// Lloyd iterations of the cluster baselines.
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    /// Record wall-clock milliseconds (makes output machine-dependent).
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: &BenchArgs, ctx: &Context) -> anyhow::Result<()> {
    let dataset = match &a.dataset {
        Some(d) => d.clone(),
        None => a
            .test
            .file_stem()
            .map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned()),
    };
    let rows = match a.task {
        Task::Knn => {
            let train_path = a.train.as_deref().context("kNN benches need --train")?;
            let train = parse_libsvm(open(train_path)?)
                .with_context(|| format!("reading {}", train_path.display()))?;
            let test = parse_libsvm(open(&a.test)?)
                .with_context(|| format!("reading {}", a.test.display()))?;
            let book = match &a.book {
                Some(p) => load_book(p)?,
                None => build_dual_rtrees(&train, &a.rtree.config(), ctx.seed)?,
            };
            let algorithms = if a.algorithms.is_empty() {
                KnnAlgorithm::ALL.to_vec()
            } else {
                a.algorithms
                    .iter()
                    .map(|n| KnnAlgorithm::parse(n))
                    .collect::<Result<_, _>>()?
            };
            let cfg = KnnBench {
                dataset: &dataset,
                book: &book,
                train: &train,
                test: &test,
                k: a.k,
                seed: ctx.seed,
                metrics: a
                    .metrics
                    .iter()
                    .map(|m| match m {
                        MetricArg::Accuracy => KnnMetric::Accuracy,
                        MetricArg::Auc => KnnMetric::Auc,
                    })
                    .collect(),
                timing: a.timing,
            };
            bench_knn(&cfg, &algorithms)?
        }
        Task::Cf => {
            let book = load_book(a.book.as_deref().context("CF benches need --book")?)?;
            let matrix = book.ratings().context("the codebook carries no ratings")?;
            let held = parse_ratings_csv(open(&a.test)?)
                .with_context(|| format!("reading {}", a.test.display()))?;
            let test: Vec<_> = held
                .triples()
                .filter(|&(u, i, _)| u < matrix.num_users() && i < matrix.num_items())
                .collect();
            let algorithms = if a.algorithms.is_empty() {
                CfAlgorithm::ALL.to_vec()
            } else {
                a.algorithms
                    .iter()
                    .map(|n| CfAlgorithm::parse(n))
                    .collect::<Result<_, _>>()?
            };
            let cfg = CfBench {
                dataset: &dataset,
                book: &book,
                test: &test,
                seed: ctx.seed,
                branching: a.branching,
                iterations: a.iterations,
                timing: a.timing,
            };
            bench_cf(&cfg, &algorithms)?
        }
    };
    ctx.emit(
        a.out.as_deref(),
        &[],
        &render(|b| write_bench_csv(&rows, b))?,
    )
}
