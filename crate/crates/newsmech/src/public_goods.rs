//! Ex-post efficient public-good provision and its incentive properties.
//!
//! With news utility the first-best rule provides the good when
//! `(1 + mu_g) * sum(theta) >= N c(N)`. Truthful reporting survives in
//! timeline A, but the delayed timelines add a realization penalty
//! `-Lambda_g Q (1 - Q) theta` whose non-monotone part can break incentive
//! compatibility when loss aversion is strong and provision is unlikely.
//! A large population restores it: provision probabilities drift to the
//! extremes where the penalty is flat.

use serde::{Deserialize, Serialize};

use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::Timeline;

/// Symmetric public-good environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublicGoodEnv {
    pub n: usize,
    /// Intrinsic-value distribution on a nonnegative support.
    pub type_dist: DiscreteDistribution,
    pub mu_g: f64,
    pub lambda_g: f64,
    /// Per-capita provision cost `c(N)`.
    pub cost_per_capita: f64,
    /// Support cap for the opponent-sum convolution.
    pub convolution_cap: usize,
    /// Grid size the convolution is rebinned onto after each step.
    pub rebin_size: usize,
}

impl PublicGoodEnv {
    pub fn new(
        n: usize,
        type_dist: DiscreteDistribution,
        mu_g: f64,
        lambda_g: f64,
        cost_per_capita: f64,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid("need at least two agents".into()));
        }
        if type_dist.min() < 0.0 {
            return Err(Error::Invalid("types must be nonnegative".into()));
        }
        if !(mu_g >= 0.0) || !(lambda_g >= 1.0) {
            return Err(Error::Invalid(
                "need mu_g >= 0 and lambda_g >= 1".into(),
            ));
        }
        if !(cost_per_capita > 0.0) {
            return Err(Error::Invalid("per-capita cost must be positive".into()));
        }
        Ok(Self {
            n,
            type_dist,
            mu_g,
            lambda_g,
            cost_per_capita,
            convolution_cap: 1 << 22,
            rebin_size: 801,
        })
    }

    /// `Lambda_g = mu_g (lambda_g - 1)`.
    pub fn aggregate_g(&self) -> f64 {
        self.mu_g * (self.lambda_g - 1.0)
    }

    /// Normalized per-person cost `c(N) / (1 + mu_g)`.
    pub fn normalized_cost(&self) -> f64 {
        self.cost_per_capita / (1.0 + self.mu_g)
    }

    /// Whether provision is genuinely uncertain: the all-low profile does
    /// not provide and the all-high profile does.
    pub fn interesting_case(&self) -> bool {
        let lo = (1.0 + self.mu_g) * self.type_dist.min();
        let hi = (1.0 + self.mu_g) * self.type_dist.max();
        lo < self.cost_per_capita && self.cost_per_capita < hi
    }

    /// Distribution of the sum of the other `n - 1` types, rebinned onto a
    /// shared uniform grid after every convolution step; returns the
    /// distribution and the accumulated rebinning error bound.
    pub fn others_sum(&self) -> Result<(DiscreteDistribution, f64)> {
        let f = &self.type_dist;
        let mut acc = f.clone();
        let mut err = 0.0;
        for step in 2..self.n {
            acc = acc.convolve(f, self.convolution_cap)?;
            if acc.len() > self.rebin_size {
                let lo = f.min() * step as f64;
                let hi = f.max() * step as f64;
                let grid: Vec<f64> = (0..self.rebin_size)
                    .map(|i| lo + (hi - lo) * i as f64 / (self.rebin_size - 1) as f64)
                    .collect();
                let (rebinned, e) = acc.rebin(&grid)?;
                acc = rebinned;
                err += e;
            }
        }
        Ok((acc, err))
    }
}

/// The ex-post efficiency rule: provide when
/// `(1 + mu_g) * sum(theta) >= N c(N)` (ties provide).
pub fn efficiency_rule(theta_profile: &[f64], env: &PublicGoodEnv) -> Result<bool> {
    if theta_profile.len() != env.n {
        return Err(Error::Domain(format!(
            "profile has {} entries for {} agents",
            theta_profile.len(),
            env.n
        )));
    }
    let total: f64 = theta_profile.iter().sum();
    Ok((1.0 + env.mu_g) * total >= env.n as f64 * env.cost_per_capita)
}

/// Interim provision probability of own type `theta`:
/// `Q(theta) = 1 - F_sum(N c~(N) - theta)` with `F_sum` the distribution of
/// the other agents' type sum.
pub fn interim_probability(theta: f64, env: &PublicGoodEnv) -> Result<f64> {
    let (others, _) = env.others_sum()?;
    Ok(1.0 - others.cdf(env.n as f64 * env.normalized_cost() - theta))
}

/// Perceived valuation of provision probability `q` for the timeline.
fn perceived_of_prob(timeline: Timeline, q: f64, env: &PublicGoodEnv) -> Result<f64> {
    let lg = env.aggregate_g();
    match timeline {
        Timeline::A => Ok((1.0 + env.mu_g) * q),
        Timeline::B => Ok((1.0 + env.mu_g) * q - lg * q * (1.0 - q)),
        Timeline::C => Ok(q - lg * q * (1.0 - q)),
        Timeline::D => Err(Error::Domain(
            "timeline D is behaviorally identical to C".into(),
        )),
    }
}

/// Incentive verdict for the efficiency rule under one timeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IcVerdict {
    pub ic: bool,
    /// First own type at which the perceived valuation decreases.
    pub witness: Option<f64>,
    /// Verdict of the closed-form sufficient bound (None when the bound
    /// machinery does not apply, i.e. the always-IC parameter region).
    pub bound_ic: bool,
    /// Rebinning error carried by the convolution grid.
    pub rebin_error: f64,
}

/// Checks incentive compatibility of the efficiency rule by direct grid
/// monotonicity of the perceived valuation `W(Q(theta))`, cross-checked
/// against the closed-form threshold on the opponent-sum CDF.
pub fn ic_condition(timeline: Timeline, env: &PublicGoodEnv) -> Result<IcVerdict> {
    let (others, rebin_error) = env.others_sum()?;
    let target = env.n as f64 * env.normalized_cost();
    let thetas = env.type_dist.support();
    let mut prev = f64::NEG_INFINITY;
    let mut witness = None;
    for &theta in thetas {
        let q = 1.0 - others.cdf(target - theta);
        let w = perceived_of_prob(timeline, q, env)?;
        if w < prev - 1e-12 && witness.is_none() {
            witness = Some(theta);
        }
        prev = prev.max(w);
    }
    let lg = env.aggregate_g();
    let bound_ic = match timeline {
        Timeline::A => true,
        Timeline::B => {
            lg <= 1.0 + env.mu_g || {
                let cap = 0.5 * (1.0 + env.mu_g + lg) / lg;
                others.cdf(target - thetas[0]) <= cap + 1e-12
            }
        }
        Timeline::C => {
            lg <= 1.0 || {
                // Same derivative test with the surprise term absent.
                let cap = 0.5 * (1.0 + lg) / lg;
                others.cdf(target - thetas[0]) <= cap + 1e-12
            }
        }
        Timeline::D => unreachable!("rejected above"),
    };
    Ok(IcVerdict {
        ic: witness.is_none(),
        witness,
        bound_ic,
        rebin_error,
    })
}

/// Result of scanning population sizes for restored incentive compatibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationScan {
    /// Smallest scanned `N` at which all three timelines are incentive
    /// compatible, if any.
    pub found: Option<usize>,
    /// Whether incentive compatibility, once gained, was never lost again
    /// within the scanned range.
    pub monotone: bool,
    /// Per-`N` verdicts for timelines A, B, C.
    pub per_n: Vec<(usize, [bool; 3])>,
}

/// Scans `n_range`, rebuilding the environment per population size, and
/// reports the first size at which every timeline is incentive compatible.
pub fn min_population_for_ic(
    template: impl Fn(usize) -> Result<PublicGoodEnv>,
    n_range: std::ops::RangeInclusive<usize>,
) -> Result<PopulationScan> {
    let mut per_n = Vec::new();
    let mut found = None;
    let mut monotone = true;
    for n in n_range {
        let env = template(n)?;
        let mut verdicts = [false; 3];
        for (slot, tl) in [Timeline::A, Timeline::B, Timeline::C].into_iter().enumerate() {
            verdicts[slot] = ic_condition(tl, &env)?.ic;
        }
        let all = verdicts.iter().all(|&v| v);
        if all && found.is_none() {
            found = Some(n);
        }
        if found.is_some() && !all {
            monotone = false;
        }
        per_n.push((n, verdicts));
    }
    Ok(PopulationScan {
        found,
        monotone,
        per_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform_env(n: usize, mu_g: f64, lambda_g: f64, cost: f64, grid: usize) -> PublicGoodEnv {
        PublicGoodEnv::new(
            n,
            DiscreteDistribution::uniform_grid(0.0, 1.0, grid).unwrap(),
            mu_g,
            lambda_g,
            cost,
        )
        .unwrap()
    }

    #[test]
    fn efficiency_rule_threshold() {
        let env = uniform_env(2, 1.0, 1.5, 0.5, 51);
        // (1 + 1) * 0.7 = 1.4 >= 2 * 0.5 = 1.
        assert!(efficiency_rule(&[0.3, 0.4], &env).unwrap());
        // All-bottom profile in the interesting case: no provision.
        assert!(!efficiency_rule(&[0.0, 0.0], &env).unwrap());
        // Exact ties provide.
        assert!(efficiency_rule(&[0.25, 0.25], &env).unwrap());
        assert!(env.interesting_case());
    }

    #[test]
    fn interim_probability_uniform_identity() {
        // n = 2, F = uniform[0,1], N c~ = 1: Q(theta) = theta.
        let env = uniform_env(2, 1.0, 1.5, 1.0, 201);
        assert_abs_diff_eq!(env.normalized_cost() * 2.0, 1.0, epsilon = 1e-12);
        for &theta in &[0.1, 0.3, 0.5, 0.9] {
            let q = interim_probability(theta, &env).unwrap();
            assert!((q - theta).abs() <= 0.02, "Q({theta}) = {q}");
        }
        // Above the opponents' support the provision is certain.
        let q = interim_probability(1.0, &env).unwrap();
        assert!(q >= 1.0 - 1e-12);
        // Monotone in the own type.
        let qs: Vec<f64> = env
            .type_dist
            .support()
            .iter()
            .map(|&t| interim_probability(t, &env).unwrap())
            .collect();
        assert!(qs.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn timeline_a_always_ic() {
        for cost in [0.3, 0.8, 1.4] {
            let env = uniform_env(3, 1.0, 4.0, cost, 81);
            let v = ic_condition(Timeline::A, &env).unwrap();
            assert!(v.ic && v.bound_ic);
        }
    }

    #[test]
    fn mild_loss_aversion_keeps_timeline_b_ic() {
        // Lambda_g = 0.5 <= 1 + mu_g: IC regardless of the distribution.
        let env = uniform_env(2, 1.0, 1.5, 0.9, 101);
        let v = ic_condition(Timeline::B, &env).unwrap();
        assert!(v.ic && v.bound_ic);
    }

    #[test]
    fn concentrated_types_break_timeline_b() {
        // Mass 0.95 near the bottom, Lambda_g = 3 > 1 + mu_g, high cost:
        // provision is unlikely, the penalty region is hit, and truthtelling
        // fails with a witness type.
        let n_grid = 41;
        let mut support = Vec::new();
        let mut probs = Vec::new();
        for i in 0..n_grid {
            let x = i as f64 / (n_grid - 1) as f64;
            support.push(x);
            probs.push(if x < 0.1 { 0.95 / 5.0 } else { 0.05 / 36.0 });
        }
        let total: f64 = probs.iter().sum();
        let probs: Vec<f64> = probs.into_iter().map(|p| p / total).collect();
        let f = DiscreteDistribution::new(support, probs).unwrap();
        let env = PublicGoodEnv::new(2, f, 1.0, 4.0, 1.6).unwrap();
        assert!(env.interesting_case());
        let v = ic_condition(Timeline::B, &env).unwrap();
        assert!(!v.ic, "expected an incentive failure");
        assert!(v.witness.is_some());
        assert!(!v.bound_ic);
        // The same environment in timeline A stays incentive compatible.
        assert!(ic_condition(Timeline::A, &env).unwrap().ic);
    }

    #[test]
    fn population_growth_restores_ic() {
        // Uniform[0,1], Lambda_g = 3 (mu_g = 1, lambda_g = 4), constant
        // normalized cost 0.3 in (0, 1/2).
        let scan = min_population_for_ic(
            |n| {
                PublicGoodEnv::new(
                    n,
                    DiscreteDistribution::uniform_grid(0.0, 1.0, 81).unwrap(),
                    1.0,
                    4.0,
                    0.6, // c~ = 0.3
                )
            },
            2..=12,
        )
        .unwrap();
        assert!(scan.found.is_some(), "no population size restored IC");
        assert!(scan.monotone);
    }

    #[test]
    fn cost_above_mean_never_restores() {
        // c~ > E[F]: the opponents' average stays below the bar, provision
        // probability collapses, and the scan find nothing.
        let scan = min_population_for_ic(
            |n| {
                PublicGoodEnv::new(
                    n,
                    DiscreteDistribution::uniform_grid(0.0, 1.0, 61).unwrap(),
                    1.0,
                    6.0,
                    1.7, // c~ = 0.85 > 1/2
                )
            },
            2..=10,
        )
        .unwrap();
        assert_eq!(scan.found, None);
    }

    #[test]
    fn low_aggregate_ic_at_first_scanned_size() {
        let scan = min_population_for_ic(
            |n| {
                PublicGoodEnv::new(
                    n,
                    DiscreteDistribution::uniform_grid(0.0, 1.0, 61).unwrap(),
                    1.0,
                    1.9, // Lambda_g = 0.9 <= 1
                    0.8,
                )
            },
            2..=4,
        )
        .unwrap();
        assert_eq!(scan.found, Some(2));
    }
}
