use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use elastic_core::cf::{relative_error, rmse, CF_CSV_HEADER};
use elastic_core::dataset::Label;
use elastic_core::elasticity::{
    audit_entropy_monotonicity, audit_quality_monotonicity, investment_elasticity,
    resource_and_price_elasticity, write_elasticity_csv, write_resolution_csv, Assumptions,
    InvestmentSeries, Verdict,
};
use elastic_core::knn::{accuracy, auc, KNN_CSV_HEADER};

use crate::code::load_book;
use crate::output::{open, render, Context};

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportCommand {
    /// Quality per depth of one or more prediction files, with a
    /// quality-monotonicity audit over mean scanned nodes.
    Quality(QualityArgs),
    /// Pairwise investment (or resource/price) elasticities of a series.
    Elasticity(ElasticityArgs),
    /// Resolution per code and the entropy-monotonicity audit.
    Resolution(ResolutionArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnnQuality {
    Accuracy,
    Auc,
}

#[derive(Debug, Args, Serialize)]
pub struct QualityArgs {
    /// Prediction CSVs from `mine knn` or `mine cf`.
    #[arg(required = true)]
    pub predictions: Vec<PathBuf>,
    /// kNN quality metric.
    #[arg(long, value_enum, default_value_t = KnnQuality::Accuracy)]
    pub metric: KnnQuality,
    /// Exact CF predictions (`mine baseline --task cf --algorithm exact`),
    /// enabling relative error.
    #[arg(long)]
    pub exact: Option<PathBuf>,
    /// Tolerated quality dip in the monotonicity audit.
    #[arg(long, default_value_t = 0.02)]
    pub slack: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Table {
    Investment,
    Resource,
    Price,
}

#[derive(Debug, Args, Serialize)]
pub struct ElasticityArgs {
    /// CSV with `quality` and `investment`, or `resource` and `price`, columns.
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, value_enum, default_value_t = Table::Investment)]
    pub table: Table,
    /// Declare investment = resource x price (needed for resource/price).
    #[arg(long)]
    pub product_model: bool,
    /// Declare the state independent of resource and price (needed for
    /// resource/price).
    #[arg(long)]
    pub state_independent: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ResolutionArgs {
    #[arg(long)]
    pub book: PathBuf,
    /// Volume of one possible point; defaults to a grid derived from the
    /// leaf boxes.
    #[arg(long)]
    pub cell_volume: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub log_base: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cmd: &ReportCommand, ctx: &Context) -> anyhow::Result<()> {
    match cmd {
        ReportCommand::Quality(a) => quality(a, ctx),
        ReportCommand::Elasticity(a) => elasticity(a, ctx),
        ReportCommand::Resolution(a) => resolution(a, ctx),
    }
}

fn verdict(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::PassWithSlack => "pass-with-slack",
        Verdict::Fail => "fail",
        Verdict::NotChecked => "not-checked",
    }
}

enum Kind {
    Knn,
    Cf,
}

/// Data rows of a prediction file.
struct Predictions {
    kind: Kind,
    rows: Vec<csv::StringRecord>,
}

fn read_predictions(path: &Path) -> anyhow::Result<Predictions> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    let kind = if header == KNN_CSV_HEADER {
        Kind::Knn
    } else if header == CF_CSV_HEADER {
        Kind::Cf
    } else {
        bail!(
            "{}: not a kNN or CF prediction file (header {header:?})",
            path.display()
        );
    };
    let rows = rdr.records().collect::<Result<Vec<_>, _>>()?;
    Ok(Predictions { kind, rows })
}

fn num<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    col: usize,
    path: &Path,
) -> anyhow::Result<T> {
    let field = rec.get(col).unwrap_or("");
    field.parse().map_err(|_| {
        anyhow::anyhow!(
            "{}: bad value {field:?} in column {}",
            path.display(),
            col + 1
        )
    })
}

fn label(field: &str, path: &Path) -> anyhow::Result<Label> {
    match field {
        "+1" | "1" | "positive" => Ok(Label::Positive),
        "-1" | "0" | "negative" => Ok(Label::Negative),
        "" => bail!("{}: missing actual label", path.display()),
        other => bail!("{}: unknown label {other:?}", path.display()),
    }
}

/// One depth of one file.
struct Group {
    source: String,
    depth: usize,
    queries: usize,
    mean_scanned: f64,
    metrics: Vec<(&'static str, f64)>,
    fallback_rate: Option<f64>,
}

/// `(scanned, positive votes, negative votes, predicted, actual)` per row.
type KnnEntry = (usize, usize, usize, Label, Label);

fn knn_groups(
    path: &Path,
    rows: &[csv::StringRecord],
    metric: KnnQuality,
) -> anyhow::Result<Vec<Group>> {
    let mut by_depth: BTreeMap<usize, Vec<KnnEntry>> = BTreeMap::new();
    for r in rows {
        let entry = (
            num(r, 2, path)?,
            num(r, 3, path)?,
            num(r, 4, path)?,
            label(r.get(5).unwrap_or(""), path)?,
            label(r.get(6).unwrap_or(""), path)?,
        );
        by_depth.entry(num(r, 1, path)?).or_default().push(entry);
    }
    by_depth
        .into_iter()
        .map(|(depth, v)| {
            let value = match metric {
                KnnQuality::Accuracy => {
                    let pred: Vec<Label> = v.iter().map(|e| e.3).collect();
                    let act: Vec<Label> = v.iter().map(|e| e.4).collect();
                    ("accuracy", accuracy(&pred, &act)?)
                }
                KnnQuality::Auc => {
                    let pts: Vec<(usize, usize, Label)> =
                        v.iter().map(|e| (e.1, e.1 + e.2, e.4)).collect();
                    ("auc", auc(&pts)?)
                }
            };
            Ok(Group {
                source: path.display().to_string(),
                depth,
                queries: v.len(),
                mean_scanned: v.iter().map(|e| e.0 as f64).sum::<f64>() / v.len() as f64,
                metrics: vec![value],
                fallback_rate: None,
            })
        })
        .collect()
}

type CfEntry = (usize, usize, usize, f64, f64, bool);

fn cf_entries(
    path: &Path,
    rows: &[csv::StringRecord],
) -> anyhow::Result<BTreeMap<usize, Vec<CfEntry>>> {
    let mut by_depth: BTreeMap<usize, Vec<CfEntry>> = BTreeMap::new();
    for r in rows {
        let actual: f64 = num(r, 5, path)?;
        if actual.is_nan() {
            bail!("{}: missing actual rating", path.display());
        }
        let entry = (
            num(r, 0, path)?,
            num(r, 1, path)?,
            num(r, 3, path)?,
            num(r, 4, path)?,
            actual,
            num::<u8>(r, 6, path)? == 1,
        );
        by_depth.entry(num(r, 2, path)?).or_default().push(entry);
    }
    Ok(by_depth)
}

fn cf_groups(
    path: &Path,
    rows: &[csv::StringRecord],
    exact: Option<&BTreeMap<(usize, usize), f64>>,
) -> anyhow::Result<Vec<Group>> {
    cf_entries(path, rows)?
        .into_iter()
        .map(|(depth, v)| {
            let pred: Vec<f64> = v.iter().map(|e| e.3).collect();
            let act: Vec<f64> = v.iter().map(|e| e.4).collect();
            let e = rmse(&pred, &act)?;
            let mut metrics = vec![("rmse", e)];
            if let Some(exact) = exact {
                let ex: Vec<f64> = v
                    .iter()
                    .map(|e| {
                        exact.get(&(e.0, e.1)).copied().with_context(|| {
                            format!("no exact prediction for user {} item {}", e.0, e.1)
                        })
                    })
                    .collect::<anyhow::Result<_>>()?;
                metrics.push(("re", relative_error(e, rmse(&ex, &act)?)?));
            }
            Ok(Group {
                source: path.display().to_string(),
                depth,
                queries: v.len(),
                mean_scanned: v.iter().map(|e| e.2 as f64).sum::<f64>() / v.len() as f64,
                metrics,
                fallback_rate: Some(v.iter().filter(|e| e.5).count() as f64 / v.len() as f64),
            })
        })
        .collect()
}

fn quality(a: &QualityArgs, ctx: &Context) -> anyhow::Result<()> {
    let exact = match &a.exact {
        Some(path) => {
            let t = read_predictions(path)?;
            anyhow::ensure!(matches!(t.kind, Kind::Cf), "--exact expects CF predictions");
            let mut map = BTreeMap::new();
            for v in cf_entries(path, &t.rows)?.into_values().flatten() {
                map.insert((v.0, v.1), v.3);
            }
            Some(map)
        }
        None => None,
    };
    let mut groups = Vec::new();
    let mut lower_is_better = None;
    for path in &a.predictions {
        let t = read_predictions(path)?;
        let cf = matches!(t.kind, Kind::Cf);
        if lower_is_better.replace(cf).is_some_and(|prev| prev != cf) {
            bail!("cannot mix kNN and CF prediction files");
        }
        groups.extend(match t.kind {
            Kind::Knn => knn_groups(path, &t.rows, a.metric)?,
            Kind::Cf => cf_groups(path, &t.rows, exact.as_ref())?,
        });
    }
    let mut body =
        String::from("source,depth,queries,mean_scanned,metric_name,metric_value,fallback_rate\n");
    for g in &groups {
        for (name, value) in &g.metrics {
            body.push_str(&format!(
                "{},{},{},{:.3},{},{:.6},{}\n",
                g.source,
                g.depth,
                g.queries,
                g.mean_scanned,
                name,
                value,
                g.fallback_rate
                    .map_or_else(String::new, |f| format!("{f:.6}"))
            ));
        }
    }
    let mut extra = Vec::new();
    if groups.len() >= 2 {
        // RMSE is flipped against its worst value so that higher is better;
        // dips are unchanged by the shift.
        let primary: Vec<f64> = groups.iter().map(|g| g.metrics[0].1).collect();
        let worst = primary.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pairs: Vec<(f64, f64)> = groups
            .iter()
            .zip(&primary)
            .map(|(g, &q)| {
                (
                    if lower_is_better == Some(true) {
                        worst - q
                    } else {
                        q
                    },
                    g.mean_scanned,
                )
            })
            .collect();
        let audit =
            audit_quality_monotonicity(&InvestmentSeries::from_pairs(&pairs), a.slack, None)?;
        extra.push(format!(
            "audit: monotone={} dips={} slack={}",
            verdict(audit.monotone),
            audit.dips.len(),
            a.slack
        ));
    }
    ctx.emit(a.out.as_deref(), &extra, body.as_bytes())
}

fn elasticity(a: &ElasticityArgs, ctx: &Context) -> anyhow::Result<()> {
    let series = InvestmentSeries::read_csv(open(&a.series)?)
        .with_context(|| format!("reading {}", a.series.display()))?;
    let table = match a.table {
        Table::Investment => investment_elasticity(&series)?,
        t => {
            let assumptions = Assumptions {
                product_model: a.product_model,
                state_independent: a.state_independent,
            };
            let three = resource_and_price_elasticity(&series, assumptions)?;
            if t == Table::Resource {
                three.resource
            } else {
                three.price
            }
        }
    };
    let argmax = table
        .argmax
        .map(|j| format!("argmax: ar{}->ar{}", table.pairs[j].from, table.pairs[j].to))
        .unwrap_or_else(|| "argmax: undefined".into());
    ctx.emit(
        a.out.as_deref(),
        &[argmax],
        &render(|b| write_elasticity_csv(&table, b))?,
    )
}

fn resolution(a: &ResolutionArgs, ctx: &Context) -> anyhow::Result<()> {
    let book = load_book(&a.book)?;
    let points: u64 = book
        .roots()
        .iter()
        .map(|&r| book.node(r).count as u64)
        .sum();
    let audit = audit_entropy_monotonicity(&book, points, a.cell_volume, a.log_base)?;
    for w in &audit.warnings {
        log::warn!("{w}");
    }
    let pairs = |v: &[(usize, usize)]| {
        v.iter()
            .map(|(s, d)| format!("{s}->{d}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let extra = vec![
        format!("verdict: {}", if audit.passed() { "pass" } else { "fail" }),
        format!("cell volume: {}", audit.cell_volume),
        format!("volume violations: {}", pairs(&audit.volume_violations)),
        format!(
            "resolution violations: {}",
            pairs(&audit.resolution_violations)
        ),
    ];
    ctx.emit(
        a.out.as_deref(),
        &extra,
        &render(|b| write_resolution_csv(&audit.report, b))?,
    )
}
