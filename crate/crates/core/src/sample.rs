use serde::Serialize;

use crate::error::{Error, Result};

/// Relative spacing (in units of the data range) below which observations merge.
pub const MERGE_SPACING: f64 = 1e-12;

/// Sorted distinct observations with multiplicity weights: the empirical measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    points: Vec<f64>,
    weights: Vec<f64>,
    n: usize,
}

impl Sample {
    /// Sorts, collapses ties into weights and checks there are two distinct points.
    pub fn from_observations(obs: &[f64]) -> Result<Self> {
        if obs.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("observations must be finite"));
        }
        let mut xs = obs.to_vec();
        xs.sort_by(f64::total_cmp);
        Self::from_sorted(xs)
    }

    /// Same as [`Sample::from_observations`] for already sorted input.
    pub fn from_sorted(xs: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n == 0 {
            return Err(Error::DegenerateSample { distinct: 0 });
        }
        let range = xs[n - 1] - xs[0];
        let gap = MERGE_SPACING * range;
        let mut points: Vec<f64> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for x in xs {
            match points.last() {
                Some(&p) if x - p <= gap => *counts.last_mut().unwrap() += 1,
                _ => {
                    points.push(x);
                    counts.push(1);
                }
            }
        }
        if points.len() < 2 {
            return Err(Error::DegenerateSample {
                distinct: points.len(),
            });
        }
        let weights = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(Sample { points, weights, n })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of observations before tie collapsing.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn distinct(&self) -> usize {
        self.points.len()
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn range(&self) -> f64 {
        self.max() - self.min()
    }

    /// Empirical CDF `𝔽ₙ(x)`.
    pub fn ecdf(&self, x: f64) -> f64 {
        let k = self.points.partition_point(|&p| p <= x);
        self.weights[..k].iter().sum()
    }

    /// `(1/n) Σ g(Xᵢ)`.
    pub fn mean_of<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }

    /// The sample `{σXᵢ + μ}`.
    pub fn affine_image(&self, scale: f64, shift: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && shift.is_finite()) {
            return Err(Error::invalid("affine map needs a positive finite scale"));
        }
        Ok(Sample {
            points: self.points.iter().map(|x| scale * x + shift).collect(),
            weights: self.weights.clone(),
            n: self.n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapses_ties() {
        let s = Sample::from_observations(&[2.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.points(), &[1.0, 2.0]);
        assert!((s.weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.n(), 3);
        assert!((s.ecdf(1.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.ecdf(0.0), 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            Sample::from_observations(&[1.0, 1.0]),
            Err(Error::DegenerateSample { distinct: 1 })
        ));
        assert!(matches!(
            Sample::from_observations(&[]),
            Err(Error::DegenerateSample { distinct: 0 })
        ));
        assert!(Sample::from_observations(&[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn weights_sum_to_one() {
        let xs: Vec<f64> = (0..997).map(|i| ((i * 37) % 101) as f64).collect();
        let s = Sample::from_observations(&xs).unwrap();
        let total: f64 = s.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(s.distinct(), 101);
    }
}
