//! Deterministic synthetic datasets shaped like the public benchmarks used
//! for evaluation: a two-dimensional two-class set with curved class
//! regions, a three-dimensional colour-cube set, a Gaussian mixture, and a
//! sparse 1-5 star rating matrix driven by latent factors.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::dataset::{Label, LabeledDataset, LabeledPoint, RatingMatrix};
use crate::error::{Error, Result};

fn point(features: Vec<f64>, label: Label) -> LabeledPoint {
    LabeledPoint { features, label }
}

/// Fills both classes to their quotas by rejection sampling, then
/// interleaves them in a seeded order.
fn fill_quota(
    rng: &mut ChaCha8Rng,
    positives: usize,
    negatives: usize,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Option<LabeledPoint>,
) -> Result<LabeledDataset> {
    let mut pos = Vec::with_capacity(positives);
    let mut neg = Vec::with_capacity(negatives);
    let limit = 1000 * (positives + negatives).max(1);
    for _ in 0..limit {
        if pos.len() == positives && neg.len() == negatives {
            break;
        }
        if let Some(p) = draw(rng) {
            match p.label {
                Label::Positive if pos.len() < positives => pos.push(p),
                Label::Negative if neg.len() < negatives => neg.push(p),
                _ => {}
            }
        }
    }
    if pos.len() < positives || neg.len() < negatives {
        return Err(Error::invalid("class quotas could not be met"));
    }
    let mut all: Vec<LabeledPoint> = pos.into_iter().chain(neg).collect();
    all.shuffle(rng);
    LabeledDataset::new(all)
}

/// 862 points in [0, 250] x [0, 200] (307 positive): a wavy band and a
/// disc form the positive region. Points within a small margin of the
/// class boundary are rejected, so the classes are separable.
pub fn four_regions(seed: u64) -> Result<LabeledDataset> {
    four_regions_sized(307, 555, seed)
}

pub fn four_regions_sized(positives: usize, negatives: usize, seed: u64) -> Result<LabeledDataset> {
    const MARGIN: f64 = 5.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fill_quota(&mut rng, positives, negatives, |rng| {
        let x: f64 = rng.gen_range(0.0..=250.0);
        let y: f64 = rng.gen_range(0.0..=200.0);
        let wave = y - (120.0 + 40.0 * (x / 25.0).sin());
        let band = if x < 160.0 { wave } else { f64::NEG_INFINITY };
        let disc = 35.0 - ((x - 205.0).powi(2) + (y - 55.0).powi(2)).sqrt();
        let margin = band.max(disc);
        if margin.abs() < MARGIN {
            return None;
        }
        let x = (x * 1000.0).round() / 1000.0;
        let y = (y * 1000.0).round() / 1000.0;
        Some(point(vec![x, y], Label::from_value(margin)))
    })
}

/// `n` integer colour triples in [0, 255]^3: about a fifth are skin-like
/// points around a few tone centres, the rest fill the cube.
pub fn colour_cube(n: usize, seed: u64) -> Result<LabeledDataset> {
    let positives = n / 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tones: [[f64; 3]; 3] = [
        [180.0, 130.0, 100.0],
        [150.0, 100.0, 70.0],
        [220.0, 180.0, 150.0],
    ];
    let spread = Normal::new(0.0, 14.0).expect("valid deviation");
    let mut skin = true;
    fill_quota(&mut rng, positives, n - positives, |rng| {
        skin = !skin;
        let c: Vec<f64> = if skin {
            let t = tones[rng.gen_range(0..tones.len())];
            t.iter()
                .map(|&m| (m + spread.sample(rng)).round().clamp(0.0, 255.0))
                .collect()
        } else {
            (0..3).map(|_| rng.gen_range(0..=255) as f64).collect()
        };
        let near_tone = tones.iter().any(|t| {
            t.iter()
                .zip(&c)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                < 45.0
        });
        // off-tone colours are never skin; on-tone cube samples are dropped
        match (skin, near_tone) {
            (true, true) => Some(point(c, Label::Positive)),
            (false, false) => Some(point(c, Label::Negative)),
            _ => None,
        }
    })
}

/// `n` points in `dim` dimensions from `components` Gaussian blobs per
/// class with unit spread and centres drawn in a cube of side 10.
pub fn gaussian_mixture(
    n: usize,
    dim: usize,
    components: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if dim == 0 || components == 0 || n < 2 {
        return Err(Error::invalid(
            "mixture needs dim, components >= 1 and n >= 2",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<(Vec<f64>, Label)> = (0..2 * components)
        .map(|c| {
            let centre = (0..dim).map(|_| rng.gen_range(0.0..10.0)).collect();
            (
                centre,
                if c % 2 == 0 {
                    Label::Positive
                } else {
                    Label::Negative
                },
            )
        })
        .collect();
    let noise = Normal::new(0.0, 1.0).expect("valid deviation");
    let mut points: Vec<LabeledPoint> = (0..n)
        .map(|i| {
            let (centre, label) = &centres[i % centres.len()];
            let f = centre.iter().map(|m| m + noise.sample(&mut rng)).collect();
            point(f, *label)
        })
        .collect();
    points.shuffle(&mut rng);
    LabeledDataset::new(points)
}

#[derive(Clone, Debug)]
pub struct RatingShape {
    pub users: usize,
    pub items: usize,
    /// Cap on the total number of ratings.
    pub max_ratings: usize,
    pub min_per_user: usize,
    /// Mean of the exponential tail added to `min_per_user`.
    pub mean_extra: f64,
    pub latent: usize,
}

impl Default for RatingShape {
    /// The 943 x 1682, at most 100,000 ratings scale.
    fn default() -> Self {
        Self {
            users: 943,
            items: 1682,
            max_ratings: 100_000,
            min_per_user: 20,
            mean_extra: 84.0,
            latent: 3,
        }
    }
}

/// Integer 1-5 ratings from user and item biases plus a latent-factor
/// interaction and noise. Items are picked with Zipf-like popularity.
pub fn latent_ratings(shape: &RatingShape, seed: u64) -> Result<RatingMatrix> {
    if shape.users == 0 || shape.items == 0 || shape.min_per_user > shape.items {
        return Err(Error::invalid("rating shape is empty or over-full"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = |s: f64| Normal::new(0.0, s).expect("valid deviation");
    let (unit, user_bias, item_bias, noise) = (std(1.0), std(0.4), std(0.6), std(0.7));
    let factors = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..shape.latent).map(|_| unit.sample(rng)).collect())
            .collect()
    };
    let uf = factors(&mut rng, shape.users);
    let vf = factors(&mut rng, shape.items);
    let ub: Vec<f64> = (0..shape.users)
        .map(|_| user_bias.sample(&mut rng))
        .collect();
    let ib: Vec<f64> = (0..shape.items)
        .map(|_| item_bias.sample(&mut rng))
        .collect();
    let popularity: Vec<f64> = (0..shape.items)
        .map(|i| 1.0 / (i as f64 + 10.0).powf(0.8))
        .collect();
    let mut item_order: Vec<usize> = (0..shape.items).collect();
    item_order.shuffle(&mut rng);
    let extra = Exp::new(1.0 / shape.mean_extra.max(1e-9)).expect("positive rate");
    let mut triples = Vec::new();
    let scale = (shape.latent as f64).sqrt();
    for u in 0..shape.users {
        let want = (shape.min_per_user + extra.sample(&mut rng) as usize).min(shape.items);
        let room = shape.max_ratings.saturating_sub(triples.len());
        let count = want.min(room);
        if count == 0 {
            break;
        }
        let picks = item_order
            .choose_multiple_weighted(&mut rng, count, |&i| popularity[i])
            .map_err(|e| Error::invalid(e.to_string()))?;
        let mut chosen: Vec<usize> = picks.copied().collect();
        chosen.sort_unstable();
        for i in chosen {
            let dot: f64 = uf[u].iter().zip(&vf[i]).map(|(a, b)| a * b).sum();
            let raw = 3.5 + ub[u] + ib[i] + 0.6 * dot / scale + noise.sample(&mut rng);
            triples.push((u, i, raw.round().clamp(1.0, 5.0)));
        }
    }
    RatingMatrix::from_triples(shape.users, shape.items, triples).map(|m| m.with_scale(1.0, 5.0))
}
