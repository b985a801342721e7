//! Grid discretizations of continuous type distributions.
//!
//! Solvers that need density values (for virtual valuations and hazard
//! rates) work on a [`DensityGrid`]: equally spaced points carrying density,
//! density-slope, CDF, and integration weights. The weights double as atom
//! probabilities, so a grid converts losslessly into a
//! [`DiscreteDistribution`] and every integral against the distribution is a
//! plain weighted sum.

use serde::{Deserialize, Serialize};

use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};

/// A density on an interval, sampled on an equally spaced grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    /// Grid points, ascending, equally spaced.
    pub x: Vec<f64>,
    /// Density values, normalized so the trapezoid integral is one.
    pub density: Vec<f64>,
    /// Density derivative values (same normalization).
    pub slope: Vec<f64>,
    /// CDF by trapezoid accumulation; last entry is exactly one.
    pub cdf: Vec<f64>,
    /// Integration atoms: trapezoid weight times density; they sum to one.
    pub weights: Vec<f64>,
}

impl DensityGrid {
    /// Samples `density` and `slope` on `n` points spanning `[lo, hi]` and
    /// normalizes. The slope is divided by the same normalization constant.
    pub fn from_fns(
        lo: f64,
        hi: f64,
        n: usize,
        density: impl Fn(f64) -> f64,
        slope: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if n < 3 || !(hi > lo) {
            return Err(Error::Invalid("density grid needs n >= 3 and hi > lo".into()));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let x: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        let d: Vec<f64> = x.iter().map(|&v| density(v)).collect();
        let s: Vec<f64> = x.iter().map(|&v| slope(v)).collect();
        Self::from_samples(x, d, s)
    }

    /// Builds a grid from explicit samples; `x` must be equally spaced.
    pub fn from_samples(x: Vec<f64>, density: Vec<f64>, slope: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 3 || density.len() != n || slope.len() != n {
            return Err(Error::Invalid("grid arrays must share a length >= 3".into()));
        }
        let step = x[1] - x[0];
        for i in 1..n {
            if ((x[i] - x[i - 1]) - step).abs() > 1e-9 * step.max(1.0) {
                return Err(Error::Invalid("grid must be equally spaced".into()));
            }
        }
        if density.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Invalid("density must be strictly positive on the grid".into()));
        }
        let mut z = 0.0;
        for i in 0..n {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            z += w * step * density[i];
        }
        let density: Vec<f64> = density.into_iter().map(|d| d / z).collect();
        let slope: Vec<f64> = slope.into_iter().map(|s| s / z).collect();
        let mut cdf = vec![0.0; n];
        for i in 1..n {
            cdf[i] = cdf[i - 1] + 0.5 * step * (density[i - 1] + density[i]);
        }
        let last = cdf[n - 1];
        for c in cdf.iter_mut() {
            *c /= last;
        }
        let weights: Vec<f64> = (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * step * density[i] / last
            })
            .collect();
        Ok(Self {
            x,
            density,
            slope,
            cdf,
            weights,
        })
    }

    /// The uniform distribution on `[lo, hi]`; its CDF and weights are exact.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::from_fns(lo, hi, n, |_| 1.0, |_| 0.0)
    }

    /// An exponentially tilted density `exp(b x)`, useful for generating
    /// regular but non-uniform test environments.
    pub fn exponential_tilt(lo: f64, hi: f64, n: usize, b: f64) -> Result<Self> {
        Self::from_fns(lo, hi, n, |v| (b * v).exp(), |v| b * (b * v).exp())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lo(&self) -> f64 {
        self.x[0]
    }

    pub fn hi(&self) -> f64 {
        *self.x.last().unwrap()
    }

    pub fn step(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    /// The grid as a discrete distribution with the integration atoms as
    /// probabilities.
    pub fn to_distribution(&self) -> DiscreteDistribution {
        DiscreteDistribution::new(self.x.clone(), self.weights.clone())
            .expect("grid weights are a probability vector by construction")
    }

    /// Integral of a grid function against the distribution.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum()
    }

    /// Left-point cumulative Lebesgue integral: entry `i` approximates the
    /// integral of the grid function from `x[0]` to `x[i]`.
    pub fn cumulative_left(&self, values: &[f64]) -> Vec<f64> {
        let step = self.step();
        let mut out = vec![0.0; values.len()];
        for i in 1..values.len() {
            out[i] = out[i - 1] + values[i - 1] * step;
        }
        out
    }

    /// A grid on the same interval with twice the resolution, resampling
    /// density and slope linearly. Used for refinement checks.
    pub fn refined(&self) -> Self {
        let n = self.len();
        let mut x = Vec::with_capacity(2 * n - 1);
        let mut d = Vec::with_capacity(2 * n - 1);
        let mut s = Vec::with_capacity(2 * n - 1);
        for i in 0..n {
            x.push(self.x[i]);
            d.push(self.density[i]);
            s.push(self.slope[i]);
            if i + 1 < n {
                x.push(0.5 * (self.x[i] + self.x[i + 1]));
                d.push(0.5 * (self.density[i] + self.density[i + 1]));
                s.push(0.5 * (self.slope[i] + self.slope[i + 1]));
            }
        }
        Self::from_samples(x, d, s).expect("refinement of a valid grid is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_grid_is_exact() {
        let g = DensityGrid::uniform(1.0, 2.0, 101).unwrap();
        for (i, &x) in g.x.iter().enumerate() {
            assert_abs_diff_eq!(g.cdf[i], x - 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(g.density[i], 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(g.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tilted_density_normalizes() {
        let g = DensityGrid::exponential_tilt(1.0, 2.0, 201, 0.7).unwrap();
        assert_abs_diff_eq!(g.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(*g.cdf.last().unwrap(), 1.0, epsilon = 1e-15);
        // g'/g is invariant to normalization.
        for i in 0..g.len() {
            assert_abs_diff_eq!(g.slope[i] / g.density[i], 0.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn integrate_matches_distribution_mean() {
        let g = DensityGrid::uniform(0.0, 1.0, 51).unwrap();
        let mean = g.integrate(&g.x);
        assert_abs_diff_eq!(mean, g.to_distribution().mean(), epsilon = 1e-12);
        assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-12);
    }
}
