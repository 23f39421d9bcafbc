//! Code resolution in bits and the elasticity calculus relating result
//! quality to investment.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::coding::{CodeBook, Mbr};
use crate::error::{Error, Result};

/// Above this many chosen elements the log-gamma form is used.
const DIRECT_SUM_LIMIT: u64 = 10_000;

/// Natural logarithm of the binomial coefficient `C(n, m)`.
pub fn ln_binomial(n: u64, m: u64) -> Result<f64> {
    if m > n {
        return Err(Error::invalid(format!("C({n}, {m}) is zero")));
    }
    let k = m.min(n - m);
    if k <= DIRECT_SUM_LIMIT {
        let base = (n - k) as f64;
        return Ok((1..=k).map(|i| ((base + i as f64) / i as f64).ln()).sum());
    }
    use statrs::function::gamma::ln_gamma;
    Ok(ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0))
}

/// Entropy of `m` points placed among `n` equiprobable positions.
pub fn placement_entropy(n: u64, m: u64, log_base: f64) -> Result<f64> {
    Ok(ln_binomial(n, m)? / log_base.ln())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeResolution {
    pub depth: usize,
    pub length: usize,
    pub volume: f64,
    /// Possible point positions consistent with the code.
    pub possible: u64,
    pub cond_entropy: f64,
    pub resolution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub points: u64,
    pub prior_possible: u64,
    pub log_base: f64,
    pub prior_entropy: f64,
    pub codes: Vec<CodeResolution>,
}

/// Resolution of each code given its possible-position count.
/// `codes` holds `(depth, length, volume, possible)`.
pub fn resolution(
    codes: &[(usize, usize, f64, u64)],
    points: u64,
    prior_possible: u64,
    log_base: f64,
) -> Result<ResolutionReport> {
    if points == 0 {
        return Err(Error::invalid("at least one point is required"));
    }
    if !(log_base > 1.0) {
        return Err(Error::invalid("log base must exceed 1"));
    }
    let too_coarse = |possible: u64| Error::CellTooCoarse {
        possible,
        points,
        max_cell_volume: f64::NAN,
    };
    if prior_possible < points {
        return Err(too_coarse(prior_possible));
    }
    let prior_entropy = placement_entropy(prior_possible, points, log_base)?;
    let mut out = Vec::with_capacity(codes.len());
    for &(depth, length, volume, possible) in codes {
        if possible < points {
            return Err(too_coarse(possible));
        }
        let cond_entropy = placement_entropy(possible, points, log_base)?;
        out.push(CodeResolution {
            depth,
            length,
            volume,
            possible,
            cond_entropy,
            resolution: prior_entropy - cond_entropy,
        });
    }
    Ok(ResolutionReport {
        points,
        prior_possible,
        log_base,
        prior_entropy,
        codes: out,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyAudit {
    pub report: ResolutionReport,
    pub cell_volume: f64,
    /// Depth pairs `(shallow, deep)` where the deeper code has more volume.
    pub volume_violations: Vec<(usize, usize)>,
    /// Depth pairs where the deeper code has lower resolution.
    pub resolution_violations: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

impl EntropyAudit {
    pub fn passed(&self) -> bool {
        self.volume_violations.is_empty() && self.resolution_violations.is_empty()
    }
}

/// Half the smallest positive side length among the leaf-level
/// rectangles, raised to the dimension.
pub fn default_cell_volume(book: &CodeBook) -> Result<f64> {
    let leaves = book
        .codes()
        .last()
        .ok_or_else(|| Error::invalid("codebook has no usable code"))?;
    let mut smallest = f64::INFINITY;
    for &id in &leaves.nodes {
        let mbr = &book.node(id).mbr;
        for d in 0..mbr.dim() {
            let e = mbr.extent(d);
            if e > 0.0 {
                smallest = smallest.min(e);
            }
        }
    }
    if !smallest.is_finite() {
        // every leaf is a single point; fall back to the whole-data extent
        smallest = prior_box(book)
            .map(|b| {
                (0..b.dim())
                    .map(|d| b.extent(d))
                    .filter(|&e| e > 0.0)
                    .fold(f64::INFINITY, f64::min)
            })
            .unwrap_or(f64::INFINITY);
    }
    if !smallest.is_finite() {
        return Err(Error::invalid(
            "all training points coincide; volumes are zero",
        ));
    }
    Ok((smallest / 2.0).powi(book.dim() as i32))
}

fn prior_box(book: &CodeBook) -> Option<Mbr> {
    let mut it = book.roots().iter().map(|&r| book.node(r).mbr.clone());
    let mut acc = it.next()?;
    for m in it {
        acc.expand_point(m.low());
        acc.expand_point(m.upp());
    }
    Some(acc)
}

fn possible_count(volume: f64, cell: f64) -> Result<u64> {
    let ratio = (volume / cell).floor();
    if !(ratio < u64::MAX as f64) {
        return Err(Error::invalid(format!(
            "cell volume {cell:e} is too fine: {ratio:e} positions overflow"
        )));
    }
    Ok(ratio as u64)
}

/// Checks that total rectangle volume shrinks and resolution grows with
/// depth. Possible positions per code are `floor(volume / cell)`.
pub fn audit_entropy_monotonicity(
    book: &CodeBook,
    points: u64,
    cell_volume: Option<f64>,
    log_base: f64,
) -> Result<EntropyAudit> {
    if !book.kind().is_rtree() {
        return Err(Error::invalid("the entropy audit needs an R-tree codebook"));
    }
    let cell = match cell_volume {
        Some(c) if c > 0.0 => c,
        Some(c) => return Err(Error::invalid(format!("cell volume {c} must be positive"))),
        None => default_cell_volume(book)?,
    };
    let mut warnings = Vec::new();
    if book.codes().len() < 2 {
        warnings.push("fewer than two usable codes; monotonicity holds vacuously".to_string());
    }
    let prior = prior_box(book).expect("books have roots").volume();
    let mut rows = Vec::new();
    let mut min_volume = prior;
    for code in book.codes() {
        let volume = book.total_mbr_volume(code);
        min_volume = min_volume.min(volume);
        rows.push((
            code.depth,
            code.len(),
            volume,
            possible_count(volume, cell)?,
        ));
    }
    let prior_possible = possible_count(prior, cell)?;
    let report = resolution(&rows, points, prior_possible, log_base).map_err(|e| match e {
        Error::CellTooCoarse {
            possible, points, ..
        } => Error::CellTooCoarse {
            possible,
            points,
            max_cell_volume: min_volume / points as f64,
        },
        other => other,
    })?;
    let pairs = report.codes.windows(2);
    let volume_violations = pairs
        .clone()
        .filter(|w| w[1].volume > w[0].volume)
        .map(|w| (w[0].depth, w[1].depth))
        .collect();
    let resolution_violations = pairs
        .filter(|w| w[1].resolution < w[0].resolution)
        .map(|w| (w[0].depth, w[1].depth))
        .collect();
    Ok(EntropyAudit {
        report,
        cell_volume: cell,
        volume_violations,
        resolution_violations,
        warnings,
    })
}

pub const RESOLUTION_CSV_HEADER: &str = "depth,length,volume,n,H_cond_bits,resolution_bits";

/// Entropies are converted to bits whatever the report's base.
pub fn write_resolution_csv<W: Write>(report: &ResolutionReport, mut out: W) -> Result<()> {
    let to_bits = report.log_base.log2();
    writeln!(out, "{RESOLUTION_CSV_HEADER}")?;
    for c in &report.codes {
        writeln!(
            out,
            "{},{},{:.9e},{},{:.9},{:.9}",
            c.depth,
            c.length,
            c.volume,
            c.possible,
            c.cond_entropy * to_bits,
            c.resolution * to_bits
        )?;
    }
    Ok(())
}

/// One result of an anytime run: its quality and cumulative investment,
/// optionally decomposed as resource times price.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvestmentPoint {
    pub quality: f64,
    pub investment: f64,
    pub resource: Option<f64>,
    pub price: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvestmentSeries {
    pub points: Vec<InvestmentPoint>,
}

impl InvestmentSeries {
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self {
            points: pairs
                .iter()
                .map(|&(quality, investment)| InvestmentPoint {
                    quality,
                    investment,
                    resource: None,
                    price: None,
                })
                .collect(),
        }
    }

    /// Investment is `resource * price` for every entry.
    pub fn from_resources(pairs: &[(f64, f64)], price: f64) -> Self {
        Self {
            points: pairs
                .iter()
                .map(|&(quality, resource)| InvestmentPoint {
                    quality,
                    investment: resource * price,
                    resource: Some(resource),
                    price: Some(price),
                })
                .collect(),
        }
    }

    /// Reads `quality,investment[,resource,price]` rows with a header.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let q = col("quality").ok_or_else(|| Error::invalid("series needs a quality column"))?;
        let i = col("investment");
        let r = col("resource");
        let p = col("price");
        if i.is_none() && (r.is_none() || p.is_none()) {
            return Err(Error::invalid(
                "series needs investment, or resource and price",
            ));
        }
        let mut points = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map_or(row + 2, |pos| pos.line() as usize);
            let num = |c: usize| -> Result<f64> {
                rec.get(c)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("column {} is not a number", c + 1),
                    })
            };
            let resource = r.map(num).transpose()?;
            let price = p.map(num).transpose()?;
            let investment = match i {
                Some(c) => num(c)?,
                None => resource.unwrap_or(0.0) * price.unwrap_or(0.0),
            };
            points.push(InvestmentPoint {
                quality: num(q)?,
                investment,
                resource,
                price,
            });
        }
        Ok(Self { points })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairElasticity {
    /// 1-based result indices.
    pub from: usize,
    pub to: usize,
    pub dq_pct: Option<f64>,
    pub di_pct: Option<f64>,
    /// `None` when the base quality or investment is zero.
    pub elasticity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticityTable {
    pub pairs: Vec<PairElasticity>,
    /// Index into `pairs` of the largest defined elasticity.
    pub argmax: Option<usize>,
}

fn pct_change(base: f64, next: f64) -> Option<f64> {
    (base != 0.0).then(|| (next - base) / base)
}

fn elasticities(qualities: &[f64], inputs: &[f64]) -> ElasticityTable {
    let pairs: Vec<PairElasticity> = (1..qualities.len())
        .map(|j| {
            let dq = pct_change(qualities[j - 1], qualities[j]);
            let di = pct_change(inputs[j - 1], inputs[j]);
            let elasticity = match (dq, di) {
                (Some(q), Some(i)) if i != 0.0 => Some(q / i),
                _ => None,
            };
            PairElasticity {
                from: j,
                to: j + 1,
                dq_pct: dq,
                di_pct: di,
                elasticity,
            }
        })
        .collect();
    let mut argmax: Option<usize> = None;
    for (j, p) in pairs.iter().enumerate() {
        if let Some(e) = p.elasticity {
            if argmax.is_none_or(|a| e > pairs[a].elasticity.unwrap_or(f64::NEG_INFINITY)) {
                argmax = Some(j);
            }
        }
    }
    ElasticityTable { pairs, argmax }
}

/// Percentage quality change over percentage investment change for each
/// consecutive pair of results.
pub fn investment_elasticity(series: &InvestmentSeries) -> Result<ElasticityTable> {
    if series.points.len() < 2 {
        return Err(Error::invalid("elasticity needs at least two results"));
    }
    let q: Vec<f64> = series.points.iter().map(|p| p.quality).collect();
    let i: Vec<f64> = series.points.iter().map(|p| p.investment).collect();
    Ok(elasticities(&q, &i))
}

/// Modelling assumptions under which the three elasticities coincide.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Assumptions {
    /// Investment is resource times price.
    pub product_model: bool,
    /// The algorithm's state does not depend on resource or price.
    pub state_independent: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThreeElasticities {
    pub investment: ElasticityTable,
    pub resource: ElasticityTable,
    pub price: ElasticityTable,
}

/// Resource and price elasticities, which equal the investment elasticity
/// when the product model and state independence hold.
pub fn resource_and_price_elasticity(
    series: &InvestmentSeries,
    assumptions: Assumptions,
) -> Result<ThreeElasticities> {
    if !assumptions.product_model {
        return Err(Error::AssumptionRequired(
            "investment must be declared as resource times price",
        ));
    }
    if !assumptions.state_independent {
        return Err(Error::AssumptionRequired(
            "state independence is needed; state-dependent partial elasticities are not computable from a finite series",
        ));
    }
    let investment = investment_elasticity(series)?;
    let resources: Option<Vec<f64>> = series.points.iter().map(|p| p.resource).collect();
    let resources =
        resources.ok_or_else(|| Error::invalid("every result needs a resource amount"))?;
    let q: Vec<f64> = series.points.iter().map(|p| p.quality).collect();
    let resource = elasticities(&q, &resources);
    Ok(ThreeElasticities {
        price: investment.clone(),
        investment,
        resource,
    })
}

pub const ELASTICITY_CSV_HEADER: &str = "pair,dQ_pct,dI_pct,elasticity";

pub fn write_elasticity_csv<W: Write>(table: &ElasticityTable, mut out: W) -> Result<()> {
    let cell = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.9}"));
    writeln!(out, "{ELASTICITY_CSV_HEADER}")?;
    for p in &table.pairs {
        writeln!(
            out,
            "ar{}->ar{},{},{},{}",
            p.from,
            p.to,
            cell(p.dq_pct.map(|x| x * 100.0)),
            cell(p.di_pct.map(|x| x * 100.0)),
            cell(p.elasticity)
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    PassWithSlack,
    Fail,
    NotChecked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityAudit {
    /// Every quality is finite and non-negative.
    pub meaningful: Verdict,
    pub monotone: Verdict,
    /// `(pair index, drop)` for every decrease in quality.
    pub dips: Vec<(usize, f64)>,
    pub accumulative: Verdict,
}

/// Audits a series against the elastic-algorithm properties. Quality dips
/// up to `slack` are tolerated. `costs_by_start`, when given, lists the
/// cost of reaching the final result from each starting state, shallowest
/// (the initial state) first; it must not increase.
pub fn audit_quality_monotonicity(
    series: &InvestmentSeries,
    slack: f64,
    costs_by_start: Option<&[f64]>,
) -> Result<QualityAudit> {
    if series.points.len() < 2 {
        return Err(Error::invalid("the audit needs at least two results"));
    }
    let meaningful = if series
        .points
        .iter()
        .all(|p| p.quality.is_finite() && p.quality >= 0.0)
    {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let mut sorted: Vec<&InvestmentPoint> = series.points.iter().collect();
    sorted.sort_by(|a, b| a.investment.total_cmp(&b.investment));
    let dips: Vec<(usize, f64)> = sorted
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].quality < w[0].quality)
        .map(|(j, w)| (j, w[0].quality - w[1].quality))
        .collect();
    let monotone = if dips.is_empty() {
        Verdict::Pass
    } else if dips.iter().all(|&(_, d)| d <= slack) {
        Verdict::PassWithSlack
    } else {
        Verdict::Fail
    };
    let accumulative = match costs_by_start {
        None => Verdict::NotChecked,
        Some(c) if c.windows(2).all(|w| w[1] <= w[0]) => Verdict::Pass,
        Some(_) => Verdict::Fail,
    };
    Ok(QualityAudit {
        meaningful,
        monotone,
        dips,
        accumulative,
    })
}
