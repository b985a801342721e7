//! Finite discrete distributions on the real line.
//!
//! One representation serves every random object in the model: intrinsic-type
//! distributions, loss-aversion distributions, outcome lotteries induced by a
//! mechanism, and convolutions of these. Support values are kept strictly
//! ascending; atoms closer than [`ATOM_MERGE_TOL`] are merged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance under which two support values are treated as one atom.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

/// Tolerance on the total probability mass.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// A probability distribution with finitely many atoms.
///
/// ```
/// use newsmech::dist::DiscreteDistribution;
///
/// let d = DiscreteDistribution::new(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
/// assert_eq!(d.mean(), 1.0);
/// assert_eq!(d.quantile(0.5).unwrap(), 0.0);
/// assert_eq!(d.quantile(0.75).unwrap(), 2.0);
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Builds a distribution from outcome values and probabilities.
    ///
    /// Values need not be sorted or distinct: atoms are sorted, equal values
    /// merged, and zero-probability atoms dropped. Probabilities must be
    /// nonnegative and sum to one within `1e-12`.
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::Invalid(format!(
                "support has {} values but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if support.is_empty() {
            return Err(Error::Invalid("empty support".into()));
        }
        for (&x, &p) in support.iter().zip(&probs) {
            if !x.is_finite() {
                return Err(Error::Invalid(format!("non-finite support value {x}")));
            }
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Invalid(format!("bad probability {p}")));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::Invalid(format!(
                "probabilities sum to {total}, not 1 within {PROB_SUM_TOL:e}"
            )));
        }
        Ok(Self::from_unnormalized(support, probs, total))
    }

    /// Internal constructor: sorts, merges atoms within [`ATOM_MERGE_TOL`],
    /// drops zero atoms, and divides by `total` to absorb float dust.
    fn from_unnormalized(support: Vec<f64>, probs: Vec<f64>, total: f64) -> Self {
        let mut pairs: Vec<(f64, f64)> = support.into_iter().zip(probs).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut out_x: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut out_p: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, p) in pairs {
            match out_x.last() {
                Some(&last) if (x - last).abs() <= ATOM_MERGE_TOL => {
                    *out_p.last_mut().unwrap() += p;
                }
                _ => {
                    out_x.push(x);
                    out_p.push(p);
                }
            }
        }
        let mut keep_x = Vec::with_capacity(out_x.len());
        let mut keep_p = Vec::with_capacity(out_p.len());
        for (x, p) in out_x.into_iter().zip(out_p) {
            if p > 0.0 {
                keep_x.push(x);
                keep_p.push(p / total);
            }
        }
        if keep_x.is_empty() {
            // All mass was on zero-probability atoms; keep a single point so
            // the invariant "non-empty support" holds. Unreachable from `new`.
            keep_x.push(0.0);
            keep_p.push(1.0);
        }
        Self {
            support: keep_x,
            probs: keep_p,
        }
    }

    /// The degenerate distribution putting unit mass on `x`.
    pub fn delta(x: f64) -> Self {
        Self {
            support: vec![x],
            probs: vec![1.0],
        }
    }

    /// Discretizes a density on `[lo, hi]` onto `n` equally spaced points
    /// with trapezoid weights, then normalizes. Exact for a constant density.
    pub fn from_density_grid(lo: f64, hi: f64, n: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(Error::Invalid(
                "density grid needs n >= 2 and hi > lo".into(),
            ));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let mut support = Vec::with_capacity(n);
        let mut probs = Vec::with_capacity(n);
        for i in 0..n {
            let x = lo + step * i as f64;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let d = density(x);
            if !(d >= 0.0) {
                return Err(Error::Invalid(format!("negative density at {x}")));
            }
            support.push(x);
            probs.push(w * step * d);
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::Invalid("density integrates to zero".into()));
        }
        Ok(Self::from_unnormalized(support, probs, total))
    }

    /// Uniform distribution on `[lo, hi]` discretized on `n` grid points.
    pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::from_density_grid(lo, hi, n, |_| 1.0)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Iterates over `(value, probability)` atoms in ascending value order.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn min(&self) -> f64 {
        self.support[0]
    }

    pub fn max(&self) -> f64 {
        *self.support.last().unwrap()
    }

    pub fn is_degenerate(&self) -> bool {
        self.support.len() == 1
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(x, p)| x * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms().map(|(x, p)| p * (x - m) * (x - m)).sum()
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms().map(|(x, p)| p * f(x)).sum()
    }

    /// Right-continuous CDF: probability of the event `{X <= x}`.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (v, p) in self.atoms() {
            if v <= x {
                acc += p;
            } else {
                break;
            }
        }
        acc.min(1.0)
    }

    /// The `p`-percentile: the smallest support value `c` with `CDF(c) >= p`.
    ///
    /// Defined for `p` strictly inside `(0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile needs p in (0,1), got {p}")));
        }
        let mut acc = 0.0;
        for (x, q) in self.atoms() {
            acc += q;
            if acc >= p {
                return Ok(x);
            }
        }
        // Accumulated float error can leave acc slightly below p for p near 1.
        Ok(self.max())
    }

    /// The distribution of `a * X + b`.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        let support: Vec<f64> = self.support.iter().map(|x| a * x + b).collect();
        Self::from_unnormalized(support, self.probs.clone(), 1.0)
    }

    /// The distribution of `f(X)`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let support: Vec<f64> = self.support.iter().map(|&x| f(x)).collect();
        Self::from_unnormalized(support, self.probs.clone(), 1.0)
    }

    /// The distribution of `X + Y` for independent `X ~ self`, `Y ~ other`.
    ///
    /// Fails with a resource error if the merged support would exceed `cap`.
    pub fn convolve(&self, other: &Self, cap: usize) -> Result<Self> {
        let n = self.len() * other.len();
        if n > cap {
            return Err(Error::Resource(format!(
                "convolution support would reach {n} atoms (cap {cap}); use a coarser grid or rebin"
            )));
        }
        let mut support = Vec::with_capacity(n);
        let mut probs = Vec::with_capacity(n);
        for (x, p) in self.atoms() {
            for (y, q) in other.atoms() {
                support.push(x + y);
                probs.push(p * q);
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::Internal(format!(
                "convolution mass drifted to {total}"
            )));
        }
        Ok(Self::from_unnormalized(support, probs, total))
    }

    /// Distribution of the sum of `k` independent draws.
    pub fn n_fold_convolution(&self, k: usize, cap: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::Domain("n_fold_convolution needs k >= 1".into()));
        }
        let mut acc = self.clone();
        for _ in 1..k {
            acc = acc.convolve(self, cap)?;
        }
        Ok(acc)
    }

    /// Re-expresses the distribution on `grid` (ascending), splitting each
    /// atom linearly between its two nearest grid points so the mean is
    /// preserved exactly. Returns the new distribution together with the
    /// largest distance an atom was moved (the rebinning error bound).
    pub fn rebin(&self, grid: &[f64]) -> Result<(Self, f64)> {
        if grid.len() < 2 {
            return Err(Error::Invalid("rebin grid needs at least 2 points".into()));
        }
        let mut probs = vec![0.0; grid.len()];
        let mut max_shift: f64 = 0.0;
        for (x, p) in self.atoms() {
            if x <= grid[0] {
                probs[0] += p;
                max_shift = max_shift.max(grid[0] - x);
            } else if x >= *grid.last().unwrap() {
                *probs.last_mut().unwrap() += p;
                max_shift = max_shift.max(x - grid.last().unwrap());
            } else {
                let j = grid.partition_point(|&g| g <= x);
                let (lo, hi) = (grid[j - 1], grid[j]);
                let t = (x - lo) / (hi - lo);
                probs[j - 1] += p * (1.0 - t);
                probs[j] += p * t;
                max_shift = max_shift.max((x - lo).min(hi - x));
            }
        }
        let total: f64 = probs.iter().sum();
        Ok((
            Self::from_unnormalized(grid.to_vec(), probs, total),
            max_shift,
        ))
    }

    /// The expected positive gap between two independent draws,
    /// `E[(Z - W)^+] = sum_{z > w} p_z p_w (z - w)`.
    ///
    /// This is the raw (unit-weight) realization friction of the lottery:
    /// zero exactly when the distribution is degenerate.
    pub fn expected_positive_gap(&self) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.len() {
            for j in 0..i {
                acc += self.probs[i] * self.probs[j] * (self.support[i] - self.support[j]);
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn merges_equal_atoms_and_normalizes_dust() {
        let d =
            DiscreteDistribution::new(vec![1.0, 1.0 + 1e-13, 2.0], vec![0.25, 0.25, 0.5]).unwrap();
        assert_eq!(d.len(), 2);
        assert_abs_diff_eq!(d.probs()[0], 0.5);
    }

    #[test]
    fn rejects_bad_mass() {
        assert!(DiscreteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![0.0], vec![-1.0]).is_err());
    }

    #[test]
    fn quantile_is_smallest_value_reaching_p() {
        // Degenerate case.
        let d = DiscreteDistribution::delta(5.0);
        assert_eq!(d.quantile(0.3).unwrap(), 5.0);

        // CDF(0) = 0.5 >= 0.5, and 0 is the smallest such point.
        let d = DiscreteDistribution::new(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(d.quantile(0.5).unwrap(), 0.0);
        assert_eq!(d.quantile(0.75).unwrap(), 2.0);

        assert!(d.quantile(0.0).is_err());
        assert!(d.quantile(1.0).is_err());
    }

    #[test]
    fn uniform_grid_mean_is_midpoint() {
        let d = DiscreteDistribution::uniform_grid(0.0, 1.0, 201).unwrap();
        assert_abs_diff_eq!(d.mean(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn convolution_enumerates_sums() {
        let d = DiscreteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let s = d.n_fold_convolution(2, 1 << 20).unwrap();
        assert_eq!(s.support(), &[0.0, 1.0, 2.0]);
        assert_abs_diff_eq!(s.probs()[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s.probs()[1], 0.5, epsilon = 1e-15);

        // k = 1 is the identity, degenerate sums stay degenerate.
        assert_eq!(d.n_fold_convolution(1, 10).unwrap(), d);
        let delta = DiscreteDistribution::delta(1.0);
        let s3 = delta.n_fold_convolution(3, 10).unwrap();
        assert_eq!(s3.support(), &[3.0]);
    }

    #[test]
    fn convolution_cap_trips() {
        let d = DiscreteDistribution::uniform_grid(0.0, 1.0, 100).unwrap();
        let err = d.n_fold_convolution(3, 5_000).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
    }

    #[test]
    fn convolution_moments_add() {
        let d = DiscreteDistribution::new(vec![0.0, 1.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap();
        let k = 4;
        let s = d.n_fold_convolution(k, 1 << 20).unwrap();
        assert_abs_diff_eq!(s.mean(), k as f64 * d.mean(), epsilon = 1e-9);
        assert_abs_diff_eq!(s.variance(), k as f64 * d.variance(), epsilon = 1e-9);
    }

    #[test]
    fn rebin_preserves_mean() {
        let d = DiscreteDistribution::new(vec![0.1, 0.77, 1.9], vec![0.3, 0.4, 0.3]).unwrap();
        let grid: Vec<f64> = (0..21).map(|i| i as f64 * 0.1).collect();
        let (r, err) = d.rebin(&grid).unwrap();
        assert_abs_diff_eq!(r.mean(), d.mean(), epsilon = 1e-12);
        assert!(err <= 0.05 + 1e-12);
    }

    #[test]
    fn positive_gap_basics() {
        assert_eq!(DiscreteDistribution::delta(3.0).expected_positive_gap(), 0.0);
        let d = DiscreteDistribution::new(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(d.expected_positive_gap(), 0.5, epsilon = 1e-15);
    }
}
