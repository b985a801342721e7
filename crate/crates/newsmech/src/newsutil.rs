//! News-utility primitives.
//!
//! An agent who revises her belief over an outcome from `H` to `G` feels
//! news utility: the percentile-by-percentile change, run through a
//! piecewise-linear gain-loss valuation that weights losses by a factor
//! `lambda >= 1`. This module evaluates that percentile integral exactly on
//! discrete distributions, together with the derived quantities the
//! mechanism solvers need: the expected realization penalty of holding a
//! lottery, and the binary lottery hitting a prescribed (penalty, mean) pair.

use serde::{Deserialize, Serialize};

use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};

/// Behavioral parameters of one agent: news-utility weights `mu` and
/// loss-aversion levels `lambda` in the good (`g`) and money (`m`) dimension.
///
/// The aggregates `Lambda^j = mu^j (lambda^j - 1)` are always derived, never
/// stored, so the two forms cannot drift apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainLossSpec {
    pub mu_g: f64,
    pub mu_m: f64,
    pub lambda_g: f64,
    pub lambda_m: f64,
}

impl GainLossSpec {
    pub fn new(mu_g: f64, mu_m: f64, lambda_g: f64, lambda_m: f64) -> Result<Self> {
        let s = Self {
            mu_g,
            mu_m,
            lambda_g,
            lambda_m,
        };
        s.validate()?;
        Ok(s)
    }

    /// No news utility at all: the classical benchmark.
    pub fn classical() -> Self {
        Self {
            mu_g: 0.0,
            mu_m: 0.0,
            lambda_g: 1.0,
            lambda_m: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, mu) in [("mu_g", self.mu_g), ("mu_m", self.mu_m)] {
            if !(mu >= 0.0) || !mu.is_finite() {
                return Err(Error::Invalid(format!("{name} must be >= 0, got {mu}")));
            }
        }
        for (name, l) in [("lambda_g", self.lambda_g), ("lambda_m", self.lambda_m)] {
            if !(l >= 1.0) || !l.is_finite() {
                return Err(Error::Invalid(format!("{name} must be >= 1, got {l}")));
            }
        }
        Ok(())
    }

    /// Aggregate news-utility weight in the good dimension.
    pub fn aggregate_g(&self) -> f64 {
        self.mu_g * (self.lambda_g - 1.0)
    }

    /// Aggregate news-utility weight in the money dimension.
    pub fn aggregate_m(&self) -> f64 {
        self.mu_m * (self.lambda_m - 1.0)
    }

    /// The money-news product `lambda_m * mu_m` that scales expected
    /// payments in timelines with a money surprise.
    pub fn money_news(&self) -> f64 {
        self.lambda_m * self.mu_m
    }
}

/// The gain-loss valuation: `mu * y` for gains, `mu * lambda * y` for losses.
///
/// ```
/// use newsmech::newsutil::gain_loss;
///
/// assert_eq!(gain_loss(1.0, 1.0, 2.0), 1.0);
/// assert_eq!(gain_loss(-1.0, 1.0, 2.0), -2.0);
/// assert_eq!(gain_loss(0.0, 3.0, 1.5), 0.0);
/// ```
pub fn gain_loss(y: f64, mu: f64, lambda: f64) -> f64 {
    if y >= 0.0 {
        mu * y
    } else {
        mu * lambda * y
    }
}

/// News utility of a belief change from `old` to `new`:
/// `mu * integral over p of xi(c_new(p) - c_old(p))`.
///
/// The integrand is piecewise constant between the merged CDF breakpoints of
/// the two distributions, so the integral is evaluated exactly by walking
/// those breakpoints; no percentile sampling is involved.
pub fn news_utility(
    new: &DiscreteDistribution,
    old: &DiscreteDistribution,
    mu: f64,
    lambda: f64,
) -> f64 {
    let (xs_n, ps_n) = (new.support(), new.probs());
    let (xs_o, ps_o) = (old.support(), old.probs());
    let mut i = 0;
    let mut j = 0;
    let mut cum_n = ps_n[0];
    let mut cum_o = ps_o[0];
    let mut p_lo = 0.0;
    let mut acc = 0.0;
    loop {
        let p_hi = cum_n.min(cum_o).min(1.0);
        if p_hi > p_lo {
            acc += (p_hi - p_lo) * gain_loss(xs_n[i] - xs_o[j], mu, lambda);
            p_lo = p_hi;
        }
        if p_lo >= 1.0 - 1e-15 {
            break;
        }
        // Advance whichever CDF is binding; on ties advance both.
        let adv_n = cum_n <= cum_o && i + 1 < xs_n.len();
        let adv_o = cum_o <= cum_n && j + 1 < xs_o.len();
        if adv_n {
            i += 1;
            cum_n += ps_n[i];
        }
        if adv_o {
            j += 1;
            cum_o += ps_o[j];
        }
        if !adv_n && !adv_o {
            break;
        }
    }
    acc
}

/// News utility from learning the realized value `r` of a lottery `reference`:
/// `mu * E_{z ~ reference}[xi(r - z)]`.
pub fn news_utility_of_realization(
    r: f64,
    reference: &DiscreteDistribution,
    mu: f64,
    lambda: f64,
) -> f64 {
    reference.expect(|z| gain_loss(r - z, mu, lambda))
}

/// Expected realization penalty `omega(H) = Lambda * sum_{z > w} p_z p_w (z - w)`.
///
/// The expected news utility of holding lottery `H` to realization is
/// `-omega(H)`: nonnegative, zero exactly when `H` is degenerate, and at most
/// `Lambda * E[H]` when the support is nonnegative.
pub fn expected_realization_penalty(h: &DiscreteDistribution, aggregate: f64) -> f64 {
    aggregate * h.expected_positive_gap()
}

/// The binary lottery with prescribed realization penalty `x` and mean `y`.
///
/// Uses the even-split construction `p = 1/2`, `b = y + 2x/Lambda`,
/// `d = y - 2x/Lambda`, which satisfies
/// `expected_realization_penalty(H, Lambda) = x` and `E[H] = y` exactly.
/// `x = 0` returns the point mass at `y`.
pub fn binary_for_target(x: f64, y: f64, aggregate: f64) -> Result<DiscreteDistribution> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("penalty target must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(DiscreteDistribution::delta(y));
    }
    if !(aggregate > 0.0) {
        return Err(Error::Infeasible(format!(
            "positive penalty {x} needs a positive aggregate weight, got {aggregate}"
        )));
    }
    let spread = 2.0 * x / aggregate;
    DiscreteDistribution::new(vec![y - spread, y + spread], vec![0.5, 0.5])
}

/// `M = E[(theta - s)^+]` over two independent draws from `f`.
///
/// Coincides with the unit-weight realization penalty of `f`; the two are
/// computed by different loops and cross-checked in tests.
pub fn positive_gap_mean(f: &DiscreteDistribution) -> f64 {
    let mut acc = 0.0;
    for (theta, p) in f.atoms() {
        for (s, q) in f.atoms() {
            if theta > s {
                acc += p * q * (theta - s);
            }
        }
    }
    acc
}
