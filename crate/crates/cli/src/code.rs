use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context as _};
use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use elastic_core::cf::{train_incremental_svd, SvdConfig};
use elastic_core::coding::{
    build_cf_codebook, build_dual_rtrees, build_kmeans_codebook, CodeBook, KmeansConfig,
    RtreeConfig,
};
use elastic_core::dataset::{parse_libsvm, parse_ratings_csv};
use elastic_core::planner::profile_knn;

use crate::output::{open, Context};

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodeCommand {
    /// Build a codebook and print its depth/length/volume table.
    Build(BuildArgs),
    /// Measure kNN throughput for `--budget-ms`. Timing-based, so not
    /// reproducible byte for byte.
    Profile(ProfileArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Knn,
    Cf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coder {
    Rtree,
    Kmeans,
}

/// R-tree shape shared by `code build` and `bench`.
#[derive(Clone, Debug, Args, Serialize)]
pub struct RtreeArgs {
    /// Fan-out of internal nodes.
    #[arg(long, default_value_t = 4)]
    pub max_entries: usize,
    /// Points per leaf; defaults to --max-entries.
    #[arg(long)]
    pub leaf_entries: Option<usize>,
    /// Levels above the leaves; defaults to the smallest height that fits.
    #[arg(long)]
    pub levels: Option<usize>,
}

impl RtreeArgs {
    pub fn config(&self) -> RtreeConfig {
        RtreeConfig {
            max_entries: self.max_entries,
            leaf_entries: self.leaf_entries,
            levels: self.levels,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// LIBSVM training file (knn) or `user,item,rating` CSV (cf).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Coder::Rtree)]
    pub coder: Coder,
    #[command(flatten)]
    pub rtree: RtreeArgs,
    /// Children per k-means split.
    #[arg(long, default_value_t = 2)]
    pub branching: usize,
    /// k-means hierarchy levels, root included.
    #[arg(long, default_value_t = 6)]
    pub depth_limit: usize,
    /// Lloyd iterations per k-means split.
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    /// SVD feature count.
    #[arg(long, default_value_t = 3)]
    pub features: usize,
    /// SVD learning rate.
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// SVD epochs per feature.
    #[arg(long, default_value_t = 120)]
    pub epochs: usize,
    /// Codebook file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ProfileArgs {
    #[arg(long)]
    pub book: PathBuf,
    /// Labelled LIBSVM sample of queries to time.
    #[arg(long)]
    pub sample: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Profile file (JSON); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cmd: &CodeCommand, ctx: &Context) -> anyhow::Result<()> {
    match cmd {
        CodeCommand::Build(a) => build(a, ctx),
        CodeCommand::Profile(a) => profile(a),
    }
}

pub fn load_book(path: &std::path::Path) -> anyhow::Result<CodeBook> {
    CodeBook::read_json(open(path)?).with_context(|| format!("reading codebook {}", path.display()))
}

fn build(a: &BuildArgs, ctx: &Context) -> anyhow::Result<()> {
    let book = match (a.task, a.coder) {
        (Task::Knn, Coder::Rtree) => {
            let train = parse_libsvm(open(&a.input)?)
                .with_context(|| format!("reading {}", a.input.display()))?;
            build_dual_rtrees(&train, &a.rtree.config(), ctx.seed)?
        }
        (Task::Knn, Coder::Kmeans) => bail!("the kNN task needs the rtree coder"),
        (Task::Cf, coder) => {
            let matrix = parse_ratings_csv(open(&a.input)?)
                .with_context(|| format!("reading {}", a.input.display()))?;
            let svd = SvdConfig {
                features: a.features,
                learning_rate: a.lr,
                epochs: a.epochs,
                seed: ctx.seed,
            };
            let model = train_incremental_svd(&matrix, &svd)?;
            match coder {
                Coder::Rtree => {
                    build_cf_codebook(&matrix, &model.users, &a.rtree.config(), ctx.seed)?
                }
                Coder::Kmeans => {
                    let cfg = KmeansConfig {
                        branching: a.branching,
                        depth_limit: a.depth_limit,
                        iterations: a.iterations,
                    };
                    build_kmeans_codebook(&matrix, &model.users, &cfg, ctx.seed)?
                }
            }
        }
    };
    for w in book.warnings() {
        log::warn!("{w}");
    }
    let mut out = BufWriter::new(
        File::create(&a.out).with_context(|| format!("writing {}", a.out.display()))?,
    );
    book.write_json(&mut out)?;
    drop(out);

    let mut table = String::from("depth,length,volume\n");
    for code in book.codes() {
        table.push_str(&format!(
            "{},{},{}\n",
            code.depth,
            code.len(),
            book.total_mbr_volume(code)
        ));
    }
    ctx.emit(
        None,
        &[format!("codebook: {}", a.out.display())],
        table.as_bytes(),
    )
}

fn profile(a: &ProfileArgs) -> anyhow::Result<()> {
    let book = load_book(&a.book)?;
    let sample = parse_libsvm(open(&a.sample)?)
        .with_context(|| format!("reading {}", a.sample.display()))?;
    let p = profile_knn(&book, &sample, a.k)?;
    match &a.out {
        Some(path) => p.write_json(
            File::create(path).with_context(|| format!("writing {}", path.display()))?,
        )?,
        None => p.write_json(std::io::stdout().lock())?,
    }
    Ok(())
}
