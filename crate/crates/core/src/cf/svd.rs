use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::RatingMatrix;
use crate::error::{Error, Result};

const INIT: f64 = 0.1;
const JITTER: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdConfig {
    pub features: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvdConfig {
    fn default() -> Self {
        Self {
            features: 3,
            learning_rate: 0.001,
            epochs: 120,
            seed: 0,
        }
    }
}

/// One dense feature vector per user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserFeatureMatrix {
    training: Option<SvdConfig>,
    rows: Vec<Vec<f64>>,
}

impl UserFeatureMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        if dim == 0 {
            return Err(Error::invalid(
                "feature vectors need at least one dimension",
            ));
        }
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("feature values must be finite"));
            }
        }
        Ok(Self {
            training: None,
            rows,
        })
    }

    pub fn training(&self) -> Option<&SvdConfig> {
        self.training.as_ref()
    }

    pub fn num_users(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.rows[user]
    }
}

/// Result of factorisation: user features plus the item side, which is
/// only needed to measure reconstruction quality.
#[derive(Clone, Debug)]
pub struct SvdModel {
    pub users: UserFeatureMatrix,
    pub items: Vec<Vec<f64>>,
}

impl SvdModel {
    pub fn predict(&self, user: usize, item: usize) -> f64 {
        self.users
            .row(user)
            .iter()
            .zip(&self.items[item])
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Funk-style factorisation: features are trained one at a time by
/// per-rating gradient steps on the squared reconstruction error, each
/// feature fitting the residual left by the earlier ones.
pub fn train_incremental_svd(matrix: &RatingMatrix, config: &SvdConfig) -> Result<SvdModel> {
    if config.features == 0 {
        return Err(Error::invalid("at least one feature is required"));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::invalid("learning rate must be positive and finite"));
    }
    if matrix.num_ratings() == 0 {
        return Err(Error::invalid("the rating matrix is empty"));
    }
    let d = config.features;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut jittered = |n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| INIT + rng.gen_range(-JITTER..=JITTER))
                    .collect()
            })
            .collect()
    };
    let mut users = jittered(matrix.num_users());
    let mut items = jittered(matrix.num_items());
    let triples: Vec<(usize, usize, f64)> = matrix.triples().collect();
    // Prediction of the features trained so far, per rating.
    let mut residual_base = vec![0.0; triples.len()];
    let lr = config.learning_rate;
    for f in 0..d {
        for epoch in 0..config.epochs {
            let mut loss = 0.0;
            for (t, &(u, i, r)) in triples.iter().enumerate() {
                let err = r - (residual_base[t] + users[u][f] * items[i][f]);
                loss += err * err;
                let uf = users[u][f];
                users[u][f] += lr * err * items[i][f];
                items[i][f] += lr * err * uf;
            }
            if !loss.is_finite() {
                return Err(Error::Divergence { feature: f, epoch });
            }
        }
        for (t, &(u, i, _)) in triples.iter().enumerate() {
            residual_base[t] += users[u][f] * items[i][f];
        }
    }
    if users.iter().chain(&items).flatten().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            feature: d - 1,
            epoch: config.epochs.saturating_sub(1),
        });
    }
    Ok(SvdModel {
        users: UserFeatureMatrix {
            training: Some(config.clone()),
            rows: users,
        },
        items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank_one() -> RatingMatrix {
        let mut triples = Vec::new();
        for u in 0..4 {
            for i in 0..4 {
                triples.push((u, i, (u + 1) as f64));
            }
        }
        RatingMatrix::from_triples(4, 4, triples).unwrap()
    }

    #[test]
    fn zero_features_rejected() {
        let cfg = SvdConfig {
            features: 0,
            ..SvdConfig::default()
        };
        assert!(matches!(
            train_incremental_svd(&rank_one(), &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let cfg = SvdConfig {
            features: 1,
            learning_rate: 1e3,
            epochs: 50,
            seed: 1,
        };
        assert!(matches!(
            train_incremental_svd(&rank_one(), &cfg),
            Err(Error::Divergence { feature: 0, .. })
        ));
    }

    #[test]
    fn same_seed_same_features() {
        let cfg = SvdConfig {
            features: 2,
            epochs: 30,
            ..SvdConfig::default()
        };
        let a = train_incremental_svd(&rank_one(), &cfg).unwrap();
        let b = train_incremental_svd(&rank_one(), &cfg).unwrap();
        assert_eq!(a.users, b.users);
    }

    #[test]
    fn from_rows_validates_shape() {
        assert!(UserFeatureMatrix::from_rows(vec![]).is_err());
        assert!(UserFeatureMatrix::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(UserFeatureMatrix::from_rows(vec![vec![f64::NAN]]).is_err());
        assert_eq!(
            UserFeatureMatrix::from_rows(vec![vec![1.0, 2.0]])
                .unwrap()
                .dim(),
            2
        );
    }
}
