//! Classification datasets, sparse rating matrices, their text formats and
//! seeded train/test splits.

use std::collections::BTreeSet;
use std::io::{BufRead, Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Label {
    /// LIBSVM label convention: strictly positive values are the positive
    /// class, everything else negative.
    pub fn from_value(v: f64) -> Self {
        if v > 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn as_libsvm(self) -> &'static str {
        match self {
            Label::Positive => "+1",
            Label::Negative => "-1",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPoint {
    pub features: Vec<f64>,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    points: Vec<LabeledPoint>,
    dim: usize,
}

impl LabeledDataset {
    pub fn new(points: Vec<LabeledPoint>) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptyDataset)?.features.len();
        if dim == 0 {
            return Err(Error::invalid("points must have at least one feature"));
        }
        if let Some(p) = points.iter().find(|p| p.features.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: p.features.len(),
            });
        }
        Ok(Self { points, dim })
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn class_count(&self, label: Label) -> usize {
        self.points.iter().filter(|p| p.label == label).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.points[i].clone()).collect())
    }
}

/// Parses the LIBSVM sparse text format (`<label> <index>:<value> ...`,
/// 1-based indices). Absent indices read as 0.0 and the dimensionality is
/// the largest index seen. Blank lines and `#` comment lines are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<LabeledDataset> {
    let mut rows: Vec<(Label, Vec<(usize, f64)>)> = Vec::new();
    let mut raw_labels: BTreeSet<u64> = BTreeSet::new();
    let mut dim = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label_val: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid label {label_tok:?}"),
        })?;
        raw_labels.insert(label_val.to_bits());
        if raw_labels.len() > 2 {
            return Err(Error::LabelCardinality(raw_labels.len()));
        }
        let mut feats = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected index:value, found {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid feature index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "feature indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid feature value {val:?}"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite feature value {val}"),
                });
            }
            dim = dim.max(idx);
            feats.push((idx, val));
        }
        rows.push((Label::from_value(label_val), feats));
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dim == 0 {
        return Err(Error::invalid("no feature values in dataset"));
    }
    let points = rows
        .into_iter()
        .map(|(label, feats)| {
            let mut features = vec![0.0; dim];
            for (idx, val) in feats {
                features[idx - 1] = val;
            }
            LabeledPoint { features, label }
        })
        .collect();
    LabeledDataset::new(points)
}

/// Writes LIBSVM text. Zero entries are omitted except the last index, which
/// is always written so that re-parsing recovers the dimensionality.
pub fn write_libsvm<W: Write>(dataset: &LabeledDataset, mut out: W) -> Result<()> {
    for p in dataset.points() {
        write!(out, "{}", p.label.as_libsvm())?;
        let last = p.features.len() - 1;
        for (i, v) in p.features.iter().enumerate() {
            if *v != 0.0 || i == last {
                write!(out, " {}:{}", i + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Sparse user-item ratings. Users and items are 0-based internally and
/// 1-based in files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RatingMatrixRepr", into = "RatingMatrixRepr")]
pub struct RatingMatrix {
    num_users: usize,
    num_items: usize,
    rows: Vec<Vec<(usize, f64)>>,
    cols: Vec<Vec<(usize, f64)>>,
    means: Vec<Option<f64>>,
    num_ratings: usize,
    duplicates: usize,
    scale: (f64, f64),
}

#[derive(Serialize, Deserialize)]
struct RatingMatrixRepr {
    num_users: usize,
    num_items: usize,
    scale: (f64, f64),
    /// `[user, item, rating]`, 1-based ids, sorted by user then item.
    ratings: Vec<(usize, usize, f64)>,
}

impl From<RatingMatrix> for RatingMatrixRepr {
    fn from(m: RatingMatrix) -> Self {
        let ratings = m.triples().map(|(u, i, r)| (u + 1, i + 1, r)).collect();
        RatingMatrixRepr {
            num_users: m.num_users,
            num_items: m.num_items,
            scale: m.scale,
            ratings,
        }
    }
}

impl TryFrom<RatingMatrixRepr> for RatingMatrix {
    type Error = Error;

    fn try_from(r: RatingMatrixRepr) -> Result<Self> {
        let mut triples = Vec::with_capacity(r.ratings.len());
        for (u, i, v) in r.ratings {
            if u == 0 || i == 0 {
                return Err(Error::Codebook("rating ids are 1-based".into()));
            }
            triples.push((u - 1, i - 1, v));
        }
        Ok(
            RatingMatrix::from_triples(r.num_users, r.num_items, triples)?
                .with_scale(r.scale.0, r.scale.1),
        )
    }
}

impl RatingMatrix {
    /// Builds a matrix from 0-based `(user, item, rating)` triples. A repeated
    /// `(user, item)` keeps the last value and is counted as a duplicate.
    pub fn from_triples(
        num_users: usize,
        num_items: usize,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        if num_users == 0 || num_items == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_users];
        for (u, i, r) in triples {
            if u >= num_users || i >= num_items {
                return Err(Error::invalid(format!(
                    "rating ({}, {}) outside a {num_users}x{num_items} matrix",
                    u + 1,
                    i + 1
                )));
            }
            if !r.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite rating for ({}, {})",
                    u + 1,
                    i + 1
                )));
            }
            rows[u].push((i, r));
        }
        let mut duplicates = 0;
        for row in rows.iter_mut() {
            // stable sort keeps insertion order within an item, so the last
            // occurrence is the final element of each run
            row.sort_by_key(|&(i, _)| i);
            let mut dedup: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(i, r) in row.iter() {
                match dedup.last_mut() {
                    Some(last) if last.0 == i => {
                        last.1 = r;
                        duplicates += 1;
                    }
                    _ => dedup.push((i, r)),
                }
            }
            *row = dedup;
        }
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_items];
        let mut num_ratings = 0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (u, row) in rows.iter().enumerate() {
            for &(i, r) in row {
                cols[i].push((u, r));
                num_ratings += 1;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        if num_ratings == 0 {
            return Err(Error::EmptyDataset);
        }
        let means = rows
            .iter()
            .map(|row| {
                (!row.is_empty())
                    .then(|| row.iter().map(|&(_, r)| r).sum::<f64>() / row.len() as f64)
            })
            .collect();
        Ok(Self {
            num_users,
            num_items,
            rows,
            cols,
            means,
            num_ratings,
            duplicates,
            scale: (lo, hi),
        })
    }

    /// Overrides the rating scale used for clamping predictions.
    pub fn with_scale(mut self, lo: f64, hi: f64) -> Self {
        self.scale = (lo, hi);
        self
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_ratings(&self) -> usize {
        self.num_ratings
    }

    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn scale(&self) -> (f64, f64) {
        self.scale
    }

    /// The user's ratings, sorted by item.
    pub fn user_ratings(&self, user: usize) -> &[(usize, f64)] {
        &self.rows[user]
    }

    /// The item's ratings, sorted by user.
    pub fn item_ratings(&self, item: usize) -> &[(usize, f64)] {
        &self.cols[item]
    }

    pub fn rating(&self, user: usize, item: usize) -> Option<f64> {
        let row = &self.rows[user];
        row.binary_search_by_key(&item, |&(i, _)| i)
            .ok()
            .map(|p| row[p].1)
    }

    /// Mean of all ratings given by `user`; `None` for a user with no ratings.
    pub fn user_mean(&self, user: usize) -> Option<f64> {
        self.means[user]
    }

    pub fn global_mean(&self) -> f64 {
        self.triples().map(|(_, _, r)| r).sum::<f64>() / self.num_ratings as f64
    }

    /// All ratings as 0-based triples, by user then item.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&(i, r)| (u, i, r)))
    }
}

/// Parses `user,item,rating` lines with 1-based integer ids. A header row is
/// detected by a non-numeric first field; `#` lines are comments.
pub fn parse_ratings_csv<R: Read>(reader: R) -> Result<RatingMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut triples = Vec::new();
    let (mut m, mut n) = (0usize, 0usize);
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(idx + 1);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if idx == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let id = |k: usize, what: &str| -> Result<usize> {
            let v: usize = rec[k].parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid {what} id {:?}", &rec[k]),
            })?;
            if v == 0 {
                return Err(Error::Parse {
                    line,
                    message: format!("{what} ids are 1-based"),
                });
            }
            Ok(v)
        };
        let u = id(0, "user")?;
        let i = id(1, "item")?;
        let r: f64 = rec[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid rating {:?}", &rec[2]),
        })?;
        m = m.max(u);
        n = n.max(i);
        triples.push((u - 1, i - 1, r));
    }
    if triples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let matrix = RatingMatrix::from_triples(m, n, triples)?;
    if matrix.duplicates() > 0 {
        log::warn!(
            "{} duplicate ratings replaced by later values",
            matrix.duplicates()
        );
    }
    Ok(matrix)
}

pub fn write_ratings_csv<W: Write>(matrix: &RatingMatrix, mut out: W) -> Result<()> {
    for (u, i, r) in matrix.triples() {
        writeln!(out, "{},{},{}", u + 1, i + 1, r)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestSize {
    Count(usize),
    Fraction(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub test_size: TestSize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn count(count: usize, seed: u64) -> Self {
        Self {
            test_size: TestSize::Count(count),
            seed,
        }
    }

    pub fn fraction(fraction: f64, seed: u64) -> Self {
        Self {
            test_size: TestSize::Fraction(fraction),
            seed,
        }
    }
}

pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

fn resolve_size(size: TestSize, n: usize) -> Result<usize> {
    let count = match size {
        TestSize::Count(c) => c,
        TestSize::Fraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::invalid(format!("test fraction {f} not in (0, 1)")));
            }
            round_half_up(n as f64 * f).max(1)
        }
    };
    if count == 0 || count >= n {
        return Err(Error::invalid(format!(
            "a test size of {count} leaves no train or no test elements out of {n}"
        )));
    }
    Ok(count)
}

/// Seeded partition of `0..n` into (train, test) index lists, each ascending.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let count = resolve_size(spec.test_size, n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut test = order[..count].to_vec();
    let mut train = order[count..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn split_dataset(
    dataset: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = split_indices(dataset.len(), spec)?;
    Ok((dataset.subset(&train)?, dataset.subset(&test)?))
}

#[derive(Clone, Debug)]
pub struct RatingSplit {
    pub train: RatingMatrix,
    /// Held-out `(user, item, rating)` triples, 0-based.
    pub test: Vec<(usize, usize, f64)>,
    pub active_users: Vec<usize>,
}

/// Picks a seeded set of active users, then holds out a fraction of each
/// active user's ratings. Only users with at least two ratings can be active,
/// and every active user keeps at least one training rating.
pub fn split_ratings(
    matrix: &RatingMatrix,
    active_users: TestSize,
    item_fraction: f64,
    seed: u64,
) -> Result<RatingSplit> {
    if !(item_fraction > 0.0 && item_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "item fraction {item_fraction} not in (0, 1)"
        )));
    }
    let eligible: Vec<usize> = (0..matrix.num_users())
        .filter(|&u| matrix.user_ratings(u).len() >= 2)
        .collect();
    let count = match active_users {
        TestSize::Count(c) => c,
        TestSize::Fraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::invalid(format!(
                    "active-user fraction {f} not in (0, 1)"
                )));
            }
            round_half_up(matrix.num_users() as f64 * f).max(1)
        }
    };
    if count == 0 || count > eligible.len() {
        return Err(Error::invalid(format!(
            "{count} active users requested, {} users have two or more ratings",
            eligible.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = eligible;
    order.shuffle(&mut rng);
    let mut active: Vec<usize> = order[..count].to_vec();
    active.sort_unstable();

    let mut held = BTreeSet::new();
    for &u in &active {
        let row = matrix.user_ratings(u);
        let k = round_half_up(row.len() as f64 * item_fraction).clamp(1, row.len() - 1);
        let mut items: Vec<usize> = row.iter().map(|&(i, _)| i).collect();
        items.shuffle(&mut rng);
        held.extend(items[..k].iter().map(|&i| (u, i)));
    }
    let mut test = Vec::with_capacity(held.len());
    let mut train = Vec::with_capacity(matrix.num_ratings() - held.len());
    for (u, i, r) in matrix.triples() {
        if held.contains(&(u, i)) {
            test.push((u, i, r));
        } else {
            train.push((u, i, r));
        }
    }
    let (lo, hi) = matrix.scale();
    let train = RatingMatrix::from_triples(matrix.num_users(), matrix.num_items(), train)?
        .with_scale(lo, hi);
    Ok(RatingSplit {
        train,
        test,
        active_users: active,
    })
}
