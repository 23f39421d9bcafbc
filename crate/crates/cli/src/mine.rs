use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use clap::{Args, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use elastic_core::baselines::{
    anytime_knn_ranking, anytime_knn_rtree, cf_clustering, cf_sampling, rank_training_points,
    UserSample,
};
use elastic_core::bench::{cf_cluster_model, CfAlgorithm, KnnAlgorithm};
use elastic_core::cf::{exact_cf_predict, predict_batch, write_cf_rows, CfQuery, CfRow};
use elastic_core::coding::CodeBook;
use elastic_core::dataset::{parse_libsvm, parse_ratings_csv, LabeledDataset, RatingMatrix};
use elastic_core::knn::{classify_batch, exact_knn, write_knn_rows, KnnQuery, KnnRow};
use elastic_core::planner::{length_budget, ThroughputProfile};

use crate::code::{load_book, Task};
use crate::output::{open, render, Context};

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MineCommand {
    /// Elastic kNN classification of a LIBSVM test file.
    Knn(KnnArgs),
    /// Elastic CF prediction of held-out ratings or a single pair.
    Cf(CfArgs),
    /// An exact or anytime baseline at a fixed node budget.
    Baseline(BaselineArgs),
}

/// Which code to mine with: a depth, a node budget, or a time budget.
#[derive(Debug, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct CodeChoice {
    #[arg(long)]
    pub depth: Option<usize>,
    /// Use the longest code of at most this many nodes.
    #[arg(long)]
    pub budget_nodes: Option<usize>,
    /// Use the longest code processable in this many milliseconds.
    #[arg(long, requires = "profile")]
    pub budget_ms: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct KnnArgs {
    #[arg(long)]
    pub book: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[command(flatten)]
    pub code: CodeChoice,
    /// Throughput profile from `code profile`, for --budget-ms.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Refine from the state of the result at this shallower depth.
    #[arg(long)]
    pub from_state: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CfArgs {
    #[arg(long)]
    pub book: PathBuf,
    /// Held-out `user,item,rating` CSV (1-based ids).
    #[arg(long, conflicts_with_all = ["user", "item"], required_unless_present = "user")]
    pub test: Option<PathBuf>,
    /// Active user (1-based) for a single prediction.
    #[arg(long, requires = "item")]
    pub user: Option<usize>,
    /// Target item (1-based) for a single prediction.
    #[arg(long, requires = "user")]
    pub item: Option<usize>,
    #[command(flatten)]
    pub code: CodeChoice,
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub from_state: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BaselineArgs {
    #[arg(long, value_enum, default_value_t = Task::Knn)]
    pub task: Task,
    /// knn: exact, ranking, rtree-bfs, rtree-dfs, rtree-ofs.
    /// cf: exact, sampling, clustering, recttree.
    #[arg(long)]
    pub algorithm: String,
    /// LIBSVM training file (knn).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Dual R-tree codebook (knn rtree-*) or CF codebook (cf).
    #[arg(long)]
    pub book: Option<PathBuf>,
    /// LIBSVM test file (knn) or held-out ratings CSV (cf).
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Points or nodes scanned per query; not used by exact.
    #[arg(long)]
    pub budget_nodes: Option<usize>,
    /// Children per split of the cluster baselines.
    #[arg(long, default_value_t = 2)]
    pub branching: usize,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cmd: &MineCommand, ctx: &Context) -> anyhow::Result<()> {
    match cmd {
        MineCommand::Knn(a) => knn(a, ctx),
        MineCommand::Cf(a) => cf(a, ctx),
        MineCommand::Baseline(a) => baseline(a, ctx),
    }
}

/// Resolves the code choice to a depth, with a header line explaining it.
fn resolve_depth(
    book: &CodeBook,
    choice: &CodeChoice,
    profile: Option<&Path>,
) -> anyhow::Result<(usize, String)> {
    if let Some(d) = choice.depth {
        let code = book.code_at_depth(d)?;
        return Ok((d, format!("depth: {d} (length {})", code.len())));
    }
    let (budget, unit) = match (choice.budget_nodes, choice.budget_ms) {
        (Some(n), _) => (n, format!("{n} nodes")),
        (None, Some(ms)) => {
            let path = profile.context("--budget-ms needs --profile")?;
            let p = ThroughputProfile::read_json(open(path)?)
                .with_context(|| format!("reading profile {}", path.display()))?;
            let n = length_budget(ms / 1000.0, &p);
            (n, format!("{ms} ms = {n} nodes"))
        }
        (None, None) => bail!("one of --depth, --budget-nodes, --budget-ms is required"),
    };
    let code = book.select_code(budget)?;
    Ok((
        code.depth,
        format!(
            "depth: {} (length {}, budget {unit})",
            code.depth,
            code.len()
        ),
    ))
}

fn read_test(path: &Path) -> anyhow::Result<LabeledDataset> {
    parse_libsvm(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn knn(a: &KnnArgs, ctx: &Context) -> anyhow::Result<()> {
    let book = load_book(&a.book)?;
    let test = read_test(&a.test)?;
    let (depth, chosen) = resolve_depth(&book, &a.code, a.profile.as_deref())?;
    let rows = classify_batch(&book, &test, a.k, depth, a.from_state)?;
    ctx.emit(
        a.out.as_deref(),
        &[chosen],
        &render(|b| write_knn_rows(&rows, b))?,
    )
}

/// `(user, item, rating)` triples plus the count of skipped ones.
type HeldOut = (Vec<(usize, usize, f64)>, usize);

/// Held-out triples inside the training matrix; the rest are skipped since
/// no query can be formed for an unseen user or item.
fn read_held_out(path: &Path, matrix: &RatingMatrix) -> anyhow::Result<HeldOut> {
    let held =
        parse_ratings_csv(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    let all: Vec<_> = held.triples().collect();
    let kept: Vec<_> = all
        .iter()
        .copied()
        .filter(|&(u, i, _)| u < matrix.num_users() && i < matrix.num_items())
        .collect();
    let skipped = all.len() - kept.len();
    if skipped > 0 {
        log::warn!(
            "{skipped} held-out ratings name a user or item unseen in training and are skipped"
        );
    }
    Ok((kept, skipped))
}

fn book_ratings(book: &CodeBook) -> anyhow::Result<&RatingMatrix> {
    book.ratings()
        .context("the codebook carries no ratings; build it with --task cf")
}

fn cf(a: &CfArgs, ctx: &Context) -> anyhow::Result<()> {
    let book = load_book(&a.book)?;
    let matrix = book_ratings(&book)?;
    let (depth, chosen) = resolve_depth(&book, &a.code, a.profile.as_deref())?;
    let mut extra = vec![chosen];
    let test = match (&a.test, a.user, a.item) {
        (Some(path), _, _) => {
            let (kept, skipped) = read_held_out(path, matrix)?;
            extra.push(format!("skipped: {skipped}"));
            kept
        }
        (None, Some(u), Some(i)) => {
            anyhow::ensure!(u >= 1 && i >= 1, "user and item ids are 1-based");
            // the true rating is unknown for a single query
            vec![(u - 1, i - 1, f64::NAN)]
        }
        _ => bail!("give --test, or --user with --item"),
    };
    let rows = predict_batch(&book, depth, a.from_state, &test)?;
    ctx.emit(
        a.out.as_deref(),
        &extra,
        &render(|b| write_cf_rows(&rows, b))?,
    )
}

fn baseline(a: &BaselineArgs, ctx: &Context) -> anyhow::Result<()> {
    let budget = if a.algorithm == "exact" {
        None
    } else {
        Some(
            a.budget_nodes
                .context("--budget-nodes is required for anytime baselines")?,
        )
    };
    let mut extra = vec![format!("algorithm: {}", a.algorithm)];
    if let Some(b) = budget {
        extra.push(format!("budget: {b} nodes"));
    }
    let body = match a.task {
        Task::Knn => {
            let rows = knn_baseline(a, budget)?;
            render(|b| write_knn_rows(&rows, b))?
        }
        Task::Cf => {
            let (rows, skipped) = cf_baseline(a, budget, ctx.seed)?;
            extra.push(format!("skipped: {skipped}"));
            render(|b| write_cf_rows(&rows, b))?
        }
    };
    ctx.emit(a.out.as_deref(), &extra, &body)
}

/// Baseline rows carry depth 0: they come from no code.
fn knn_baseline(a: &BaselineArgs, budget: Option<usize>) -> anyhow::Result<Vec<KnnRow>> {
    let train = read_test(
        a.train
            .as_deref()
            .context("--train is required for kNN baselines")?,
    )?;
    let test = read_test(&a.test)?;
    let algorithm = if a.algorithm == "exact" {
        None
    } else {
        Some(KnnAlgorithm::parse(&a.algorithm)?)
    };
    let book = match algorithm {
        Some(KnnAlgorithm::Rtree(_)) => Some(load_book(
            a.book.as_deref().context("R-tree baselines need --book")?,
        )?),
        _ => None,
    };
    let ranking =
        matches!(algorithm, Some(KnnAlgorithm::Ranking)).then(|| rank_training_points(&train));
    let b = budget.unwrap_or(0);
    test.points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let q = KnnQuery::new(&p.features, a.k);
            let r = match algorithm {
                None => exact_knn(&train, &q)?,
                Some(KnnAlgorithm::Ranking) => {
                    anytime_knn_ranking(&train, ranking.as_ref().expect("ranked"), &q, b)?
                }
                Some(KnnAlgorithm::Rtree(d)) => {
                    anytime_knn_rtree(book.as_ref().expect("loaded"), &train, &q, b, d)?
                }
                Some(KnnAlgorithm::Elastic) => bail!("use `mine knn` for the elastic algorithm"),
            };
            Ok(KnnRow {
                query_id: i + 1,
                depth: 0,
                scanned: r.scanned,
                k_pos: r.k_pos,
                k_neg: r.k_neg,
                predicted: r.predicted,
                actual: p.label,
            })
        })
        .collect()
}

fn cf_baseline(
    a: &BaselineArgs,
    budget: Option<usize>,
    seed: u64,
) -> anyhow::Result<(Vec<CfRow>, usize)> {
    let book = load_book(
        a.book
            .as_deref()
            .context("CF baselines need --book for ratings and features")?,
    )?;
    let matrix = book_ratings(&book)?;
    let features = book
        .features()
        .context("the codebook carries no user features")?;
    let (test, skipped) = read_held_out(&a.test, matrix)?;
    let algorithm = if a.algorithm == "exact" {
        None
    } else {
        Some(CfAlgorithm::parse(&a.algorithm)?)
    };
    let b = budget.unwrap_or(0);
    let model = match algorithm {
        Some(alg) => cf_cluster_model(alg, features, b, a.branching, a.iterations, seed)?,
        None => None,
    };
    let sample = matches!(algorithm, Some(CfAlgorithm::Sampling))
        .then(|| UserSample::new(matrix.num_users(), seed));
    let rows = test
        .par_iter()
        .map(|&(user, item, actual)| {
            let q = CfQuery::from_matrix(matrix, user, item)?;
            let r = match algorithm {
                None => exact_cf_predict(matrix, &q),
                Some(CfAlgorithm::Sampling) => {
                    cf_sampling(matrix, sample.as_ref().expect("sampled"), &q, b)?
                }
                Some(CfAlgorithm::Clustering | CfAlgorithm::RectTree) => {
                    cf_clustering(matrix, features, model.as_ref().expect("clustered"), &q)?
                }
                Some(CfAlgorithm::Elastic) => bail!("use `mine cf` for the elastic algorithm"),
            };
            Ok(CfRow {
                user,
                item,
                depth: 0,
                scanned: r.scanned,
                prediction: r.prediction,
                actual,
                fallback: r.fallback || r.cold_user,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok((rows, skipped))
}
