use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned minimal bounding rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mbr {
    low: Vec<f64>,
    upp: Vec<f64>,
}

impl Mbr {
    pub fn new(low: Vec<f64>, upp: Vec<f64>) -> Result<Self> {
        if low.len() != upp.len() {
            return Err(Error::DimensionMismatch {
                expected: low.len(),
                actual: upp.len(),
            });
        }
        if low.is_empty() {
            return Err(Error::invalid("an MBR needs at least one dimension"));
        }
        if let Some(i) = (0..low.len()).find(|&i| !(low[i] <= upp[i])) {
            return Err(Error::invalid(format!(
                "MBR bound {i} is inverted: low {} > upp {}",
                low[i], upp[i]
            )));
        }
        Ok(Self { low, upp })
    }

    /// Degenerate rectangle around a single point.
    pub fn point(p: &[f64]) -> Self {
        Self {
            low: p.to_vec(),
            upp: p.to_vec(),
        }
    }

    /// Tightest rectangle around the given points; `None` when empty.
    pub fn bounding<'a>(mut points: impl Iterator<Item = &'a [f64]>) -> Option<Self> {
        let mut mbr = Self::point(points.next()?);
        for p in points {
            mbr.expand_point(p);
        }
        Some(mbr)
    }

    pub fn expand_point(&mut self, p: &[f64]) {
        for (i, &v) in p.iter().enumerate() {
            self.low[i] = self.low[i].min(v);
            self.upp[i] = self.upp[i].max(v);
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn upp(&self) -> &[f64] {
        &self.upp
    }

    pub fn extent(&self, i: usize) -> f64 {
        self.upp[i] - self.low[i]
    }

    /// Product of the per-dimension extents; zero if any extent is zero.
    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.extent(i)).product()
    }

    pub fn contains(&self, other: &Mbr) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|i| self.low[i] <= other.low[i] && other.upp[i] <= self.upp[i])
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: q.len(),
            });
        }
        Ok(())
    }

    /// Squared distance from `q` to the farthest point of the rectangle.
    pub fn max_dist_sq(&self, q: &[f64]) -> f64 {
        q.iter()
            .zip(self.low.iter().zip(&self.upp))
            .map(|(&x, (&lo, &hi))| {
                let d = (x - lo).abs().max((x - hi).abs());
                d * d
            })
            .sum()
    }

    /// Squared distance from `q` to the nearest point of the rectangle.
    pub fn min_dist_sq(&self, q: &[f64]) -> f64 {
        q.iter()
            .zip(self.low.iter().zip(&self.upp))
            .map(|(&x, (&lo, &hi))| {
                let d = (lo - x).max(x - hi).max(0.0);
                d * d
            })
            .sum()
    }

    pub fn dist_max(&self, q: &[f64]) -> Result<f64> {
        self.check_dim(q)?;
        Ok(self.max_dist_sq(q).sqrt())
    }

    pub fn dist_min(&self, q: &[f64]) -> Result<f64> {
        self.check_dim(q)?;
        Ok(self.min_dist_sq(q).sqrt())
    }
}
