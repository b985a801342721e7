//! Multi-agent primitives: interim quantities, realization frictions,
//! perceived valuations and transfers, and the monotonicity-based
//! incentive/participation checks.
//!
//! A direct mechanism induces, for each own report, a lottery over the
//! agent's allocation value and transfer (the randomness being the other
//! agents' types). News utility turns the classical interim pair `(V, T)`
//! into *perceived* quantities: a valuation `W` multiplying the own type and
//! a transfer `Upsilon`, both timeline-dependent. Truthful reporting is an
//! equilibrium exactly when `W` is nondecreasing in the type.

use serde::{Deserialize, Serialize};

use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::newsutil::GainLossSpec;
use crate::Timeline;

/// Whether the outside-option allocation value sits at the bottom or the top
/// of the mechanism's value range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutsideCase {
    Inf,
    Sup,
}

/// A direct mechanism in one of two storage forms.
///
/// `Dense` keeps full profile tables and is meant for small grids (tests,
/// constructed counterexamples); `Lottery` stores the induced per-report
/// product lotteries directly, which is how the symmetric solvers emit
/// their results without materializing opponent-contingent functions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Mechanism {
    Dense(DenseMechanism),
    Lottery(SymmetricLotteryMechanism),
}

/// Full profile tables for `n` agents on a shared type grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseMechanism {
    pub n: usize,
    pub theta: Vec<f64>,
    /// Marginal type distribution, aligned with `theta`.
    pub type_dist: DiscreteDistribution,
    /// `value[agent][flat profile index]` = allocation value `v_i(q(theta))`.
    pub value: Vec<Vec<f64>>,
    /// `transfer[agent][flat profile index]` = payment to the designer.
    pub transfer: Vec<Vec<f64>>,
    pub v_outside: f64,
    pub outside_case: OutsideCase,
}

/// Symmetric mechanism stored as per-report product lotteries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymmetricLotteryMechanism {
    pub theta: Vec<f64>,
    pub type_dist: DiscreteDistribution,
    /// Allocation-value lottery induced by each own report.
    pub good: Vec<DiscreteDistribution>,
    /// Transfer lottery induced by each own report.
    pub money: Vec<DiscreteDistribution>,
    pub v_outside: f64,
    pub outside_case: OutsideCase,
}

const DENSE_ENUM_CAP: usize = 400_000;

impl DenseMechanism {
    /// Builds the tables from closures over index profiles.
    pub fn from_fns(
        n: usize,
        theta: Vec<f64>,
        type_dist: DiscreteDistribution,
        value: impl Fn(usize, &[usize]) -> f64,
        transfer: impl Fn(usize, &[usize]) -> f64,
        v_outside: f64,
        outside_case: OutsideCase,
    ) -> Result<Self> {
        let g = theta.len();
        if type_dist.len() != g {
            return Err(Error::Invalid(
                "type distribution must sit on the type grid".into(),
            ));
        }
        let profiles = g.checked_pow(n as u32).filter(|&p| p <= DENSE_ENUM_CAP);
        let profiles = profiles.ok_or_else(|| {
            Error::Resource(format!(
                "dense mechanism would need {g}^{n} profile entries; use the lottery form"
            ))
        })?;
        let mut val = vec![vec![0.0; profiles]; n];
        let mut tr = vec![vec![0.0; profiles]; n];
        let mut idx = vec![0usize; n];
        for flat in 0..profiles {
            for (agent, (v, t)) in val.iter_mut().zip(tr.iter_mut()).enumerate() {
                v[flat] = value(agent, &idx);
                t[flat] = transfer(agent, &idx);
            }
            for d in (0..n).rev() {
                idx[d] += 1;
                if idx[d] < g {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(Self {
            n,
            theta,
            type_dist,
            value: val,
            transfer: tr,
            v_outside,
            outside_case,
        })
    }

    fn flat(&self, profile: &[usize]) -> usize {
        let g = self.theta.len();
        profile.iter().fold(0, |acc, &i| acc * g + i)
    }

    /// Enumerates opponent profiles with product probabilities and collects
    /// the induced `(value, transfer)` lotteries for `agent` reporting
    /// `report`.
    fn induced(&self, agent: usize, report: usize) -> (DiscreteDistribution, DiscreteDistribution) {
        let g = self.theta.len();
        let m = self.n - 1;
        let count = g.pow(m as u32);
        let mut vals = Vec::with_capacity(count);
        let mut trs = Vec::with_capacity(count);
        let mut probs = Vec::with_capacity(count);
        let mut opp = vec![0usize; m];
        let mut profile = vec![0usize; self.n];
        for _ in 0..count {
            let mut p = 1.0;
            let mut oi = 0;
            for slot in 0..self.n {
                if slot == agent {
                    profile[slot] = report;
                } else {
                    profile[slot] = opp[oi];
                    p *= self.type_dist.probs()[opp[oi]];
                    oi += 1;
                }
            }
            let flat = self.flat(&profile);
            vals.push(self.value[agent][flat]);
            trs.push(self.transfer[agent][flat]);
            probs.push(p);
            for d in (0..m).rev() {
                opp[d] += 1;
                if opp[d] < g {
                    break;
                }
                opp[d] = 0;
            }
        }
        (
            DiscreteDistribution::new(vals, probs.clone()).expect("product probabilities sum to one"),
            DiscreteDistribution::new(trs, probs).expect("product probabilities sum to one"),
        )
    }
}

impl Mechanism {
    pub fn theta(&self) -> &[f64] {
        match self {
            Mechanism::Dense(m) => &m.theta,
            Mechanism::Lottery(m) => &m.theta,
        }
    }

    pub fn type_dist(&self) -> &DiscreteDistribution {
        match self {
            Mechanism::Dense(m) => &m.type_dist,
            Mechanism::Lottery(m) => &m.type_dist,
        }
    }

    pub fn v_outside(&self) -> f64 {
        match self {
            Mechanism::Dense(m) => m.v_outside,
            Mechanism::Lottery(m) => m.v_outside,
        }
    }

    pub fn outside_case(&self) -> OutsideCase {
        match self {
            Mechanism::Dense(m) => m.outside_case,
            Mechanism::Lottery(m) => m.outside_case,
        }
    }

    /// Allocation-value and transfer lotteries induced by `agent` reporting
    /// the `report`-th grid type while opponents report truthfully.
    pub fn induced_lotteries(
        &self,
        agent: usize,
        report: usize,
    ) -> (DiscreteDistribution, DiscreteDistribution) {
        match self {
            Mechanism::Dense(m) => m.induced(agent, report),
            Mechanism::Lottery(m) => (m.good[report].clone(), m.money[report].clone()),
        }
    }
}

/// Interim expectations of a report: allocation value, transfer, and the
/// positive part of the transfer.
pub fn interim_quantities(mech: &Mechanism, agent: usize, report: usize) -> (f64, f64, f64) {
    let (good, money) = mech.induced_lotteries(agent, report);
    (good.mean(), money.mean(), money.expect(|t| t.max(0.0)))
}

/// Realization frictions of a report: the unit-weight expected positive gap
/// of the induced allocation-value lottery and of the transfer lottery.
///
/// Both are zero exactly when the respective outcome does not depend on the
/// opponents' types.
pub fn realization_frictions(mech: &Mechanism, agent: usize, report: usize) -> (f64, f64) {
    let (good, money) = mech.induced_lotteries(agent, report);
    (good.expected_positive_gap(), money.expected_positive_gap())
}

/// Perceived valuation `W` multiplying the own type in the reporting-stage
/// utility.
pub fn perceived_valuation(
    timeline: Timeline,
    case: OutsideCase,
    expected_value: f64,
    good_friction: f64,
    v_outside: f64,
    spec: &GainLossSpec,
) -> Result<f64> {
    let surprise_weight = match case {
        OutsideCase::Inf => spec.mu_g,
        OutsideCase::Sup => spec.lambda_g * spec.mu_g,
    };
    match timeline {
        Timeline::A => Ok((1.0 + surprise_weight) * expected_value - surprise_weight * v_outside),
        Timeline::B => Ok((1.0 + surprise_weight) * expected_value
            - surprise_weight * v_outside
            - spec.aggregate_g() * good_friction),
        Timeline::C => Ok(expected_value - spec.aggregate_g() * good_friction),
        Timeline::D => Err(Error::Domain(
            "timeline D is behaviorally identical to C; perceived quantities take A, B, or C".into(),
        )),
    }
}

/// Perceived transfer `Upsilon` in the reporting-stage utility.
pub fn perceived_transfer(
    timeline: Timeline,
    expected_transfer: f64,
    expected_transfer_pos: f64,
    money_friction: f64,
    spec: &GainLossSpec,
) -> Result<f64> {
    let lm = spec.aggregate_m();
    match timeline {
        Timeline::A => Ok((1.0 + spec.mu_m) * expected_transfer + lm * expected_transfer_pos),
        Timeline::B => Ok((1.0 + spec.mu_m) * expected_transfer
            + lm * (expected_transfer_pos + money_friction)),
        Timeline::C => Ok(expected_transfer + lm * money_friction),
        Timeline::D => Err(Error::Domain(
            "timeline D is behaviorally identical to C; perceived quantities take A, B, or C".into(),
        )),
    }
}

/// Interim rows of one agent across her own-type grid under truthful play.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerceivedProfile {
    pub timeline: Timeline,
    pub case: OutsideCase,
    pub theta: Vec<f64>,
    pub expected_value: Vec<f64>,
    pub expected_transfer: Vec<f64>,
    pub expected_transfer_pos: Vec<f64>,
    pub good_friction: Vec<f64>,
    pub money_friction: Vec<f64>,
    pub w: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub v_outside: f64,
}

/// Evaluates the interim quantities and perceived pairs of `agent` at every
/// truthful report.
pub fn build_profile(
    mech: &Mechanism,
    agent: usize,
    timeline: Timeline,
    spec: &GainLossSpec,
) -> Result<PerceivedProfile> {
    let n = mech.theta().len();
    let mut profile = PerceivedProfile {
        timeline,
        case: mech.outside_case(),
        theta: mech.theta().to_vec(),
        expected_value: Vec::with_capacity(n),
        expected_transfer: Vec::with_capacity(n),
        expected_transfer_pos: Vec::with_capacity(n),
        good_friction: Vec::with_capacity(n),
        money_friction: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        upsilon: Vec::with_capacity(n),
        v_outside: mech.v_outside(),
    };
    for r in 0..n {
        let (v, t, tp) = interim_quantities(mech, agent, r);
        let (fg, fm) = realization_frictions(mech, agent, r);
        profile.w.push(perceived_valuation(
            timeline,
            profile.case,
            v,
            fg,
            profile.v_outside,
            spec,
        )?);
        profile.upsilon.push(perceived_transfer(timeline, t, tp, fm, spec)?);
        profile.expected_value.push(v);
        profile.expected_transfer.push(t);
        profile.expected_transfer_pos.push(tp);
        profile.good_friction.push(fg);
        profile.money_friction.push(fm);
    }
    Ok(profile)
}

/// Incentive-compatibility verdict with the envelope representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IcReport {
    pub monotone: bool,
    /// Left endpoint of the first grid interval where `W` decreases.
    pub first_violation: Option<f64>,
    /// Interim utilities `V(theta) = V(low) + integral of W`, valid when
    /// monotone.
    pub utilities: Vec<f64>,
    /// Transfers implied by the envelope, `W theta - V(theta)`.
    pub upsilon_implied: Vec<f64>,
}

/// Checks monotonicity of the perceived valuation and, when it holds,
/// returns the envelope utilities and implied perceived transfers.
pub fn check_ic(profile: &PerceivedProfile) -> IcReport {
    let w = &profile.w;
    let theta = &profile.theta;
    let mut monotone = true;
    let mut first_violation = None;
    for i in 1..w.len() {
        if w[i] < w[i - 1] - 1e-12 {
            monotone = false;
            first_violation = Some(theta[i - 1]);
            break;
        }
    }
    let mut utilities = vec![0.0; w.len()];
    utilities[0] = w[0] * theta[0] - profile.upsilon[0];
    for i in 1..w.len() {
        utilities[i] = utilities[i - 1] + w[i - 1] * (theta[i] - theta[i - 1]);
    }
    let upsilon_implied: Vec<f64> = (0..w.len())
        .map(|i| w[i] * theta[i] - utilities[i])
        .collect();
    IcReport {
        monotone,
        first_violation,
        utilities,
        upsilon_implied,
    }
}

/// Participation verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrReport {
    pub ok: bool,
    pub first_violation: Option<f64>,
    /// Worst participation slack across the grid.
    pub min_slack: f64,
}

/// Participation check. Timeline A compares the A-stage utility to the
/// outside option; timelines B and C both use the B-form perceived pair,
/// timeline C evaluating it at the truthful reporting-stage quantities.
pub fn check_ir(profile: &PerceivedProfile, spec: &GainLossSpec) -> Result<IrReport> {
    let n = profile.theta.len();
    let mut min_slack = f64::INFINITY;
    let mut first_violation = None;
    for i in 0..n {
        let (w, upsilon) = match profile.timeline {
            Timeline::A => (profile.w[i], profile.upsilon[i]),
            Timeline::B => (profile.w[i], profile.upsilon[i]),
            Timeline::C => {
                let w = perceived_valuation(
                    Timeline::B,
                    profile.case,
                    profile.expected_value[i],
                    profile.good_friction[i],
                    profile.v_outside,
                    spec,
                )?;
                let u = perceived_transfer(
                    Timeline::B,
                    profile.expected_transfer[i],
                    profile.expected_transfer_pos[i],
                    profile.money_friction[i],
                    spec,
                )?;
                (w, u)
            }
            Timeline::D => {
                return Err(Error::Domain(
                    "timeline D is behaviorally identical to C".into(),
                ))
            }
        };
        let slack = w * profile.theta[i] - upsilon - profile.v_outside * profile.theta[i];
        if slack < min_slack {
            min_slack = slack;
        }
        if slack < -1e-9 && first_violation.is_none() {
            first_violation = Some(profile.theta[i]);
        }
    }
    Ok(IrReport {
        ok: first_violation.is_none(),
        first_violation,
        min_slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn constant_mechanism(value: f64, transfer: f64) -> Mechanism {
        let theta: Vec<f64> = vec![0.0, 0.5, 1.0];
        let dist = DiscreteDistribution::new(theta.clone(), vec![0.25, 0.5, 0.25]).unwrap();
        Mechanism::Dense(
            DenseMechanism::from_fns(
                2,
                theta,
                dist,
                move |_, _| value,
                move |_, _| transfer,
                0.0,
                OutsideCase::Inf,
            )
            .unwrap(),
        )
    }

    #[test]
    fn constant_mechanism_has_no_frictions() {
        let mech = constant_mechanism(0.4, 0.7);
        let (v, t, tp) = interim_quantities(&mech, 0, 1);
        assert_abs_diff_eq!(v, 0.4);
        assert_abs_diff_eq!(t, 0.7);
        assert_abs_diff_eq!(tp, 0.7);
        let (fg, fm) = realization_frictions(&mech, 0, 1);
        assert_eq!((fg, fm), (0.0, 0.0));
    }

    #[test]
    fn signed_transfer_positive_part() {
        // Transfer is +1 or -1 with equal probability.
        let theta = vec![0.0, 1.0];
        let dist = DiscreteDistribution::new(theta.clone(), vec![0.5, 0.5]).unwrap();
        let mech = Mechanism::Dense(
            DenseMechanism::from_fns(
                2,
                theta,
                dist,
                |_, _| 0.0,
                |agent, profile| {
                    let opp = profile[1 - agent];
                    if opp == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                },
                0.0,
                OutsideCase::Inf,
            )
            .unwrap(),
        );
        let (_, t, tp) = interim_quantities(&mech, 0, 0);
        assert_abs_diff_eq!(t, 0.0);
        assert_abs_diff_eq!(tp, 0.5);
        // omega of the +/-1 lottery: gap = 0.5*0.5*2 = 0.5; scaling transfers
        // by 3 scales the friction by 3.
        let (_, fm) = realization_frictions(&mech, 0, 0);
        assert_abs_diff_eq!(fm, 0.5);
    }

    #[test]
    fn highest_type_wins_interim_value() {
        // Two agents on a uniform grid, good goes to the higher report
        // (split on ties): V(theta) is close to F(theta).
        let g = 41;
        let u = DiscreteDistribution::uniform_grid(0.0, 1.0, g).unwrap();
        let theta = u.support().to_vec();
        let mech = Mechanism::Dense(
            DenseMechanism::from_fns(
                2,
                theta.clone(),
                u.clone(),
                |agent, p| {
                    if p[agent] > p[1 - agent] {
                        1.0
                    } else if p[agent] == p[1 - agent] {
                        0.5
                    } else {
                        0.0
                    }
                },
                |_, _| 0.0,
                0.0,
                OutsideCase::Inf,
            )
            .unwrap(),
        );
        for (i, &th) in theta.iter().enumerate().step_by(8) {
            let (v, _, _) = interim_quantities(&mech, 0, i);
            assert!((v - u.cdf(th)).abs() <= 0.05, "V = {v} vs F = {}", u.cdf(th));
        }
    }

    #[test]
    fn perceived_formula_spot_checks() {
        let spec = GainLossSpec::new(1.0, 1.0, 2.0, 2.0).unwrap();
        // A, inf case: W = (1 + mu_g) V - mu_g v(empty).
        let w = perceived_valuation(Timeline::A, OutsideCase::Inf, 0.5, 0.0, 0.0, &spec).unwrap();
        assert_abs_diff_eq!(w, 1.0);
        // C ignores the surprise: W = V - Lambda_g * friction.
        let spec_c = GainLossSpec::new(1.0, 1.0, 2.0, 1.0).unwrap();
        let w = perceived_valuation(Timeline::C, OutsideCase::Inf, 0.5, 0.1, 0.3, &spec_c).unwrap();
        assert_abs_diff_eq!(w, 0.4);
        // B with zero good friction equals A.
        let wa = perceived_valuation(Timeline::A, OutsideCase::Sup, 0.7, 0.0, 1.0, &spec).unwrap();
        let wb = perceived_valuation(Timeline::B, OutsideCase::Sup, 0.7, 0.0, 1.0, &spec).unwrap();
        assert_abs_diff_eq!(wa, wb);

        // Upsilon: A with T = T+ = 1 gives (1 + mu_m) + Lambda_m = 3.
        let u = perceived_transfer(Timeline::A, 1.0, 1.0, 0.0, &spec).unwrap();
        assert_abs_diff_eq!(u, 3.0);
        // C: T = 1, no friction -> 1.
        let u = perceived_transfer(Timeline::C, 1.0, 1.0, 0.0, &spec).unwrap();
        assert_abs_diff_eq!(u, 1.0);
        // B: T = T+ = 1, omega = 0.5 -> 2 + 1 * 1.5 = 3.5.
        let u = perceived_transfer(Timeline::B, 1.0, 1.0, 0.5, &spec).unwrap();
        assert_abs_diff_eq!(u, 3.5);
    }

    #[test]
    fn news_free_limit_is_classical() {
        let spec = GainLossSpec::classical();
        let mech = constant_mechanism(0.3, 0.2);
        for tl in [Timeline::A, Timeline::B, Timeline::C] {
            let p = build_profile(&mech, 0, tl, &spec).unwrap();
            for i in 0..p.theta.len() {
                assert_abs_diff_eq!(p.w[i], p.expected_value[i], epsilon = 1e-14);
                assert_abs_diff_eq!(p.upsilon[i], p.expected_transfer[i], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn ic_check_flags_decreasing_w() {
        let constant = PerceivedProfile {
            timeline: Timeline::A,
            case: OutsideCase::Inf,
            theta: vec![0.0, 0.5, 1.0],
            expected_value: vec![0.5; 3],
            expected_transfer: vec![0.0; 3],
            expected_transfer_pos: vec![0.0; 3],
            good_friction: vec![0.0; 3],
            money_friction: vec![0.0; 3],
            w: vec![1.0, 1.0, 1.0],
            upsilon: vec![0.0, 0.0, 0.0],
            v_outside: 0.0,
        };
        let rep = check_ic(&constant);
        assert!(rep.monotone);
        // Affine utilities under constant W.
        assert_abs_diff_eq!(rep.utilities[2] - rep.utilities[0], 1.0, epsilon = 1e-14);

        let mut decreasing = constant;
        decreasing.w = vec![1.0, 0.8, 0.9];
        let rep = check_ic(&decreasing);
        assert!(!rep.monotone);
        assert_eq!(rep.first_violation, Some(0.0));
    }

    #[test]
    fn ir_shifts_with_transfers() {
        let spec = GainLossSpec::classical();
        // Zero mechanism: IR holds with equality.
        let zero = constant_mechanism(0.0, 0.0);
        let p = build_profile(&zero, 0, Timeline::A, &spec).unwrap();
        let rep = check_ir(&p, &spec).unwrap();
        assert!(rep.ok);
        assert_abs_diff_eq!(rep.min_slack, 0.0, epsilon = 1e-14);
        // Adding +1 to every transfer breaks IR at the bottom.
        let shifted = constant_mechanism(0.0, 1.0);
        let p = build_profile(&shifted, 0, Timeline::A, &spec).unwrap();
        let rep = check_ir(&p, &spec).unwrap();
        assert!(!rep.ok);
        assert_eq!(rep.first_violation, Some(0.0));
    }
}
