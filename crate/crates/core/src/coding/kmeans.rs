//! Lloyd's k-means with seeded farthest-point initialisation.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    /// Centroid index per input point.
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squared distances.
    pub wcss: f64,
}

impl KMeans {
    /// Point indices per centroid, empty clusters dropped, centroid order kept.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.centroids.len()];
        for (i, &c) in self.assignment.iter().enumerate() {
            groups[c].push(i);
        }
        groups.retain(|g| !g.is_empty());
        groups
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest centroid; ties go to the lowest index.
pub fn nearest_centroid(centroids: &[Vec<f64>], p: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centre) in centroids.iter().enumerate() {
        let d = sq_dist(centre, p);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// The first centre is drawn from `rng`; each further centre is the point
/// farthest from all chosen centres (lowest index on ties).
fn farthest_point_init<R: Rng + ?Sized>(points: &[&[f64]], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let first = rng.gen_range(0..points.len());
    let mut centroids = vec![points[first].to_vec()];
    let mut closest: Vec<f64> = points.iter().map(|p| sq_dist(p, points[first])).collect();
    while centroids.len() < k {
        let mut pick = 0;
        for i in 1..points.len() {
            if closest[i] > closest[pick] {
                pick = i;
            }
        }
        let centre = points[pick].to_vec();
        for (i, p) in points.iter().enumerate() {
            closest[i] = closest[i].min(sq_dist(p, &centre));
        }
        centroids.push(centre);
    }
    centroids
}

/// Runs at most `iterations` Lloyd rounds, stopping early once assignments
/// are stable. A centroid whose cluster empties keeps its previous position.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[&[f64]],
    k: usize,
    iterations: usize,
    rng: &mut R,
) -> Result<KMeans> {
    if points.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if k == 0 || k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} must lie in 1..={}",
            points.len()
        )));
    }
    if iterations == 0 {
        return Err(Error::invalid("k-means needs at least one iteration"));
    }
    let dim = points[0].len();
    let mut centroids = farthest_point_init(points, k, rng);
    let mut assignment: Vec<usize> = points
        .iter()
        .map(|p| nearest_centroid(&centroids, p))
        .collect();
    for _ in 0..iterations {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = points
            .iter()
            .map(|p| nearest_centroid(&centroids, p))
            .collect();
        let stable = next == assignment;
        assignment = next;
        if stable {
            break;
        }
    }
    let wcss = points
        .iter()
        .zip(&assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    Ok(KMeans {
        centroids,
        assignment,
        wcss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pts(raw: &[[f64; 2]]) -> Vec<&[f64]> {
        raw.iter().map(|p| p.as_slice()).collect()
    }

    #[test]
    fn separates_two_obvious_blobs() {
        let raw = [
            [0.0, 0.0],
            [0.1, 0.0],
            [0.0, 0.1],
            [5.0, 5.0],
            [5.1, 5.0],
            [5.0, 5.1],
        ];
        for seed in 0..10 {
            let fit = kmeans(&pts(&raw), 2, 10, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let mut clusters = fit.clusters();
            clusters.sort();
            assert_eq!(clusters, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        }
    }

    #[test]
    fn identical_points_leave_empty_clusters() {
        let raw = [[1.0, 1.0]; 4];
        let fit = kmeans(&pts(&raw), 3, 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(fit.clusters(), vec![vec![0, 1, 2, 3]]);
        assert_eq!(fit.wcss, 0.0);
    }

    #[test]
    fn rejects_bad_k() {
        let raw = [[0.0, 0.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(kmeans(&pts(&raw), 2, 10, &mut rng).is_err());
        assert!(kmeans(&pts(&raw), 0, 10, &mut rng).is_err());
        assert!(kmeans(&pts(&raw), 1, 0, &mut rng).is_err());
    }

    #[test]
    fn nearest_centroid_prefers_lowest_index_on_ties() {
        let centroids = vec![vec![0.0], vec![2.0]];
        assert_eq!(nearest_centroid(&centroids, &[1.0]), 0);
        assert_eq!(nearest_centroid(&centroids, &[1.5]), 1);
    }
}
