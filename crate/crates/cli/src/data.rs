use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use elastic_core::dataset::{
    parse_libsvm, parse_ratings_csv, split_dataset, split_ratings, write_libsvm, write_ratings_csv,
    SplitSpec, TestSize,
};
use elastic_core::synth::{
    colour_cube, four_regions, gaussian_mixture, latent_ratings, RatingShape,
};

use crate::output::{open, render, Context};

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataCommand {
    /// Write a synthetic dataset.
    Synth(SynthArgs),
    /// Split a labelled or rating dataset into train and test files.
    Split(SplitArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Two interleaved classes over four regions of the plane (862 points).
    Fourclass,
    /// Skin-like colour cube in three dimensions.
    ColourCube,
    /// Two-class Gaussian mixture.
    Gaussian,
    /// Integer 1-5 ratings from a latent-factor model.
    Ratings,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    /// Point count for colour-cube and gaussian.
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    /// Dimension of the gaussian mixture.
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    /// Components per class of the gaussian mixture.
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    #[arg(long, default_value_t = 943)]
    pub users: usize,
    #[arg(long, default_value_t = 1682)]
    pub items: usize,
    /// Cap on the number of generated ratings.
    #[arg(long, default_value_t = 100_000)]
    pub max_ratings: usize,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Treat the input as `user,item,rating` CSV instead of LIBSVM.
    #[arg(long)]
    pub ratings: bool,
    /// Test points (or active users for ratings).
    #[arg(long, conflicts_with = "test_fraction")]
    pub test_count: Option<usize>,
    /// Test share of points (or of eligible users for ratings).
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Share of each active user's ratings held out.
    #[arg(long, default_value_t = 0.2)]
    pub item_fraction: f64,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

pub fn run(cmd: &DataCommand, ctx: &Context) -> anyhow::Result<()> {
    match cmd {
        DataCommand::Synth(a) => synth(a, ctx),
        DataCommand::Split(a) => split(a, ctx),
    }
}

fn synth(a: &SynthArgs, ctx: &Context) -> anyhow::Result<()> {
    let body = match a.kind {
        SynthKind::Ratings => {
            let shape = RatingShape {
                users: a.users,
                items: a.items,
                max_ratings: a.max_ratings,
                ..RatingShape::default()
            };
            let m = latent_ratings(&shape, ctx.seed)?;
            render(|b| write_ratings_csv(&m, b))?
        }
        kind => {
            let d = match kind {
                SynthKind::Fourclass => four_regions(ctx.seed)?,
                SynthKind::ColourCube => colour_cube(a.n, ctx.seed)?,
                _ => gaussian_mixture(a.n, a.dim, a.components, ctx.seed)?,
            };
            render(|b| write_libsvm(&d, b))?
        }
    };
    ctx.emit(a.out.as_deref(), &[], &body)
}

fn split(a: &SplitArgs, ctx: &Context) -> anyhow::Result<()> {
    let size = match a.test_count {
        Some(c) => TestSize::Count(c),
        None => TestSize::Fraction(a.test_fraction),
    };
    let source = format!("source: {}", a.input.display());
    if a.ratings {
        let m = parse_ratings_csv(open(&a.input)?)
            .with_context(|| format!("reading {}", a.input.display()))?;
        let s = split_ratings(&m, size, a.item_fraction, ctx.seed)?;
        let train = render(|b| write_ratings_csv(&s.train, b))?;
        let mut test = String::new();
        for (u, i, r) in &s.test {
            test.push_str(&format!("{},{},{}\n", u + 1, i + 1, r));
        }
        let users = format!("active users: {}", s.active_users.len());
        ctx.emit(
            Some(&a.train_out),
            &[source.clone(), "part: train".into(), users.clone()],
            &train,
        )?;
        ctx.emit(
            Some(&a.test_out),
            &[source, "part: test".into(), users],
            test.as_bytes(),
        )
    } else {
        let d = parse_libsvm(open(&a.input)?)
            .with_context(|| format!("reading {}", a.input.display()))?;
        let spec = SplitSpec {
            test_size: size,
            seed: ctx.seed,
        };
        let (train, test) = split_dataset(&d, &spec)?;
        ctx.emit(
            Some(&a.train_out),
            &[source.clone(), "part: train".into()],
            &render(|b| write_libsvm(&train, b))?,
        )?;
        ctx.emit(
            Some(&a.test_out),
            &[source, "part: test".into()],
            &render(|b| write_libsvm(&test, b))?,
        )
    }
}
