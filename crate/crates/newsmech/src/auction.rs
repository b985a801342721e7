//! Optimal symmetric unit auctions under news utility.
//!
//! Timelines A and B keep the classical Myerson allocation (sell to the
//! highest type above the virtual-valuation zero) and admit all-pay
//! transfers; timeline B is *always* all-pay at the optimum. Timeline C is
//! different: the designer chooses a threshold, a base utility level for
//! the lowest type (possibly a subsidy), and a money-friction schedule that
//! deliberately leaves some types uninsured because the locked-in reporting
//! self trades expected payments against risk at a rate the participation
//! self does not share.

use serde::{Deserialize, Serialize};

use crate::bayes::{
    build_profile, check_ic, Mechanism, OutsideCase, SymmetricLotteryMechanism,
};
use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::newsutil::{binary_for_target, GainLossSpec};
use crate::Timeline;

/// Symmetric auction environment: `n` bidders with i.i.d. types on a
/// density grid, common behavioral parameters, and unit value `v(q) = q`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuctionEnv {
    pub n: usize,
    pub grid: DensityGrid,
    pub spec: GainLossSpec,
}

impl AuctionEnv {
    pub fn new(n: usize, grid: DensityGrid, spec: GainLossSpec) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid("an auction needs at least two bidders".into()));
        }
        if grid.lo() < 0.0 {
            return Err(Error::Invalid("types must be nonnegative".into()));
        }
        spec.validate()?;
        if spec.aggregate_g() > 1.0 + 1e-12 {
            return Err(Error::Unsupported(format!(
                "good-dimension news weight {} exceeds 1; preferences would favor dominated allocations",
                spec.aggregate_g()
            )));
        }
        Ok(Self { n, grid, spec })
    }
}

/// The classical virtual valuation and the exclusion threshold it implies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MyersonReport {
    pub gamma: Vec<f64>,
    pub theta_star_idx: usize,
    pub theta_star: f64,
}

/// `gamma(t) = t - (1 - F(t)) / f(t)` on the grid, with the smallest grid
/// type where it turns nonnegative. Errors if `gamma` is not strictly
/// increasing (the instance would need ironing).
pub fn myerson_virtual(env: &AuctionEnv) -> Result<MyersonReport> {
    let g = &env.grid;
    let gamma: Vec<f64> = (0..g.len())
        .map(|i| g.x[i] - (1.0 - g.cdf[i]) / g.density[i])
        .collect();
    for i in 1..gamma.len() {
        if gamma[i] <= gamma[i - 1] {
            return Err(Error::Unsupported(format!(
                "virtual valuation is not strictly increasing at type {}",
                g.x[i]
            )));
        }
    }
    let theta_star_idx = gamma
        .iter()
        .position(|&v| v >= 0.0)
        .unwrap_or(gamma.len() - 1);
    Ok(MyersonReport {
        theta_star: g.x[theta_star_idx],
        gamma,
        theta_star_idx,
    })
}

fn bernoulli_value(q: f64) -> DiscreteDistribution {
    if q <= 0.0 {
        DiscreteDistribution::delta(0.0)
    } else if q >= 1.0 {
        DiscreteDistribution::delta(1.0)
    } else {
        DiscreteDistribution::new(vec![0.0, 1.0], vec![1.0 - q, q]).expect("valid Bernoulli")
    }
}

/// Winning probability grid for a threshold at index `k`:
/// `Q(s) = F(s)^(n-1)` for served types, zero below.
fn win_prob(env: &AuctionEnv, k: usize) -> Vec<f64> {
    let g = &env.grid;
    (0..g.len())
        .map(|i| {
            if i >= k {
                g.cdf[i].powi(env.n as i32 - 1)
            } else {
                0.0
            }
        })
        .collect()
}

/// Solved auction for timelines A or B.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuctionSolution {
    pub timeline: Timeline,
    pub theta_star_idx: usize,
    pub theta_star: f64,
    /// Interim winning probability per type.
    pub win_prob: Vec<f64>,
    /// Perceived valuation per type.
    pub perceived: Vec<f64>,
    /// Deterministic per-type payment (the mechanisms are all-pay).
    pub transfer: Vec<f64>,
    pub revenue: f64,
    pub mechanism: Mechanism,
}

/// Optimal auction for timelines A and B: Myersonian allocation, all-pay
/// transfers pinned by the envelope with the lowest type at her outside
/// option.
pub fn solve_auction(timeline: Timeline, env: &AuctionEnv) -> Result<AuctionSolution> {
    match timeline {
        Timeline::A | Timeline::B => {}
        _ => {
            return Err(Error::Domain(
                "solve_auction covers timelines A and B; use solve_auction_c for C".into(),
            ))
        }
    }
    let myerson = myerson_virtual(env)?;
    let k = myerson.theta_star_idx;
    let g = &env.grid;
    let spec = &env.spec;
    let q = win_prob(env, k);
    let w: Vec<f64> = q
        .iter()
        .map(|&qi| {
            let base = (1.0 + spec.mu_g) * qi;
            match timeline {
                Timeline::A => base,
                Timeline::B => base - spec.aggregate_g() * qi * (1.0 - qi),
                _ => unreachable!(),
            }
        })
        .collect();
    let cum_w = g.cumulative_left(&w);
    let shade = 1.0 + spec.money_news();
    let transfer: Vec<f64> = (0..g.len())
        .map(|i| (w[i] * g.x[i] - cum_w[i]) / shade)
        .collect();
    let revenue = env.n as f64 * g.integrate(&transfer);

    // Cross-check against the scaled virtual-surplus integral.
    if timeline == Timeline::A {
        let mut surplus = 0.0;
        for i in k..g.len() {
            surplus += g.weights[i] * q[i] * myerson.gamma[i];
        }
        let alt = (1.0 + spec.mu_g) / shade * env.n as f64 * surplus;
        let scale = revenue.abs().max(alt.abs()).max(1e-6);
        if (revenue - alt).abs() > 1e-8 + 25.0 * g.step() * scale {
            return Err(Error::Internal(format!(
                "all-pay revenue {revenue} and virtual-surplus revenue {alt} disagree beyond quadrature error"
            )));
        }
    }

    let mechanism = Mechanism::Lottery(SymmetricLotteryMechanism {
        theta: g.x.clone(),
        type_dist: g.to_distribution(),
        good: q.iter().map(|&qi| bernoulli_value(qi)).collect(),
        money: transfer.iter().map(|&t| DiscreteDistribution::delta(t)).collect(),
        v_outside: 0.0,
        outside_case: OutsideCase::Inf,
    });
    Ok(AuctionSolution {
        timeline,
        theta_star_idx: k,
        theta_star: myerson.theta_star,
        win_prob: q,
        perceived: w,
        transfer,
        revenue,
        mechanism,
    })
}

/// Auxiliary grids of the timeline-C construction for a fixed threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CPrimitives {
    /// `Q(s) = F(s)^(n-1)` above the threshold.
    pub win_prob: Vec<f64>,
    /// `W(s) = Q (1 - Lambda_g (1 - Q))`: the reporting-stage valuation.
    pub perceived: Vec<f64>,
    /// `h(s) = W s - integral of W`: the charge level pinned by incentives.
    pub ic_charge: Vec<f64>,
    /// `g(s) = W s + mu_g Q s`: the participation self's gross valuation.
    pub participation_value: Vec<f64>,
    /// `s_m(s) = h(s) - g(s) / (1 + lambda_m mu_m)`: how hard participation
    /// presses against the base utility at each type.
    pub money_pressure: Vec<f64>,
}

/// Builds `(Q, W, h, g, s_m)` for the threshold at grid index `k`.
pub fn auction_primitives_c(env: &AuctionEnv, k: usize) -> Result<CPrimitives> {
    let g = &env.grid;
    if k >= g.len() {
        return Err(Error::Domain("threshold index out of range".into()));
    }
    let q = win_prob(env, k);
    let lg = env.spec.aggregate_g();
    let w: Vec<f64> = q.iter().map(|&qi| qi * (1.0 - lg * (1.0 - qi))).collect();
    let cum_w = g.cumulative_left(&w);
    let mut h = vec![0.0; g.len()];
    let mut part = vec![0.0; g.len()];
    let mut press = vec![0.0; g.len()];
    let shade = 1.0 + env.spec.money_news();
    for i in k..g.len() {
        h[i] = w[i] * g.x[i] - cum_w[i];
        part[i] = (w[i] + env.spec.mu_g * q[i]) * g.x[i];
        press[i] = h[i] - part[i] / shade;
    }
    for i in (k + 1)..g.len() {
        if h[i] < h[i - 1] - 1e-9 || part[i] < part[i - 1] - 1e-9 {
            return Err(Error::Internal(
                "incentive charge or participation value failed to be nondecreasing".into(),
            ));
        }
    }
    Ok(CPrimitives {
        win_prob: q,
        perceived: w,
        ic_charge: h,
        participation_value: part,
        money_pressure: press,
    })
}

/// Which types the base-utility term is charged for in the inner objective.
///
/// The displayed objective integrates it over the full support; an
/// alternative reading integrates over served types only. Either way the
/// emitted mechanism treats excluded types consistently with the envelope,
/// so only the inner ranking criterion changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubsidyDomain {
    FullSupport,
    ServedOnly,
}

/// Golden-section minimizer for a convex function on `[lo, hi]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Solved timeline-C auction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuctionSolutionC {
    pub theta_hat_idx: usize,
    pub theta_hat: f64,
    /// Reporting-stage utility of the threshold type (negative = the
    /// designer presses everyone below their outside option there).
    pub base_utility: f64,
    /// Raw money friction per type.
    pub omega: Vec<f64>,
    /// `Lambda_m * omega`: the friction as it enters utilities.
    pub weighted_omega: Vec<f64>,
    /// Expected transfer per type.
    pub transfer: Vec<f64>,
    pub win_prob: Vec<f64>,
    pub perceived: Vec<f64>,
    pub ic_charge: Vec<f64>,
    pub participation_value: Vec<f64>,
    pub money_pressure: Vec<f64>,
    pub revenue: f64,
    /// True when every served type has a degenerate payment.
    pub all_pay: bool,
    pub mechanism: Mechanism,
}

struct InnerC {
    base: f64,
    cost: f64,
}

/// Cost-minimizing base utility for threshold `k` given the primitives.
fn inner_c(
    env: &AuctionEnv,
    prims: &CPrimitives,
    k: usize,
    domain: SubsidyDomain,
) -> InnerC {
    let g = &env.grid;
    let v = env.spec.money_news();
    let lm = env.spec.aggregate_m();
    let served: Vec<usize> = (k..g.len()).collect();
    let served_mass: f64 = served.iter().map(|&i| g.weights[i]).sum();
    let unserved_mass: f64 = 1.0 - served_mass;
    let sm_lo = served
        .iter()
        .map(|&i| prims.money_pressure[i])
        .fold(f64::INFINITY, f64::min);
    let sm_hi = served
        .iter()
        .map(|&i| prims.money_pressure[i])
        .fold(f64::NEG_INFINITY, f64::max);

    let friction_alive = lm > 0.0 && v > 0.0;
    if !friction_alive {
        // Without loss aversion in money the friction channel buys nothing:
        // the base utility must cover the pressure everywhere, and excluded
        // types pin it at zero or above.
        let mut base = sm_hi.max(0.0);
        if k == 0 {
            base = sm_hi.max(0.0);
        }
        let cost = match domain {
            SubsidyDomain::FullSupport => base,
            SubsidyDomain::ServedOnly => base * served_mass,
        };
        return InnerC { base, cost };
    }

    let kappa = (1.0 + v) / v;
    let objective = |c: f64| -> f64 {
        let mut j = c * served_mass;
        for &i in &served {
            let gap = prims.money_pressure[i] - c;
            if gap > 0.0 {
                j += g.weights[i] * kappa * gap;
            }
        }
        if domain == SubsidyDomain::FullSupport {
            j += unserved_mass * if c >= 0.0 { c } else { -c / v };
        }
        j
    };
    let base = golden_section_min(&objective, sm_lo - 1.0, sm_hi + 1.0, 1e-10);
    InnerC {
        base,
        cost: objective(base),
    }
}

/// Solves the timeline-C auction: exhaustive threshold search on the grid,
/// a one-dimensional convex minimization of the participation cost in the
/// base utility, and recovery of transfers from the incentive identity
/// `c + Lambda_m omega(s) + T(s) = h(s)`.
pub fn solve_auction_c(env: &AuctionEnv, domain: SubsidyDomain) -> Result<AuctionSolutionC> {
    let g = &env.grid;
    let v = env.spec.money_news();
    let lm = env.spec.aggregate_m();
    let friction_alive = lm > 0.0 && v > 0.0;
    let kappa = if v > 0.0 { (1.0 + v) / v } else { f64::INFINITY };

    let mut best: Option<(f64, usize, CPrimitives, InnerC)> = None;
    for k in 0..g.len() {
        let prims = auction_primitives_c(env, k)?;
        let inner = inner_c(env, &prims, k, domain);
        // Excluded types with a negative base utility need the friction
        // channel to stay individually rational.
        if k > 0 && inner.base < 0.0 && !friction_alive {
            continue;
        }
        let gross: f64 = (k..g.len())
            .map(|i| g.weights[i] * prims.ic_charge[i])
            .sum();
        let value = gross - true_cost(env, &prims, k, inner.base);
        let better = match &best {
            None => true,
            Some((bv, bk, _, _)) => value > bv + 1e-12 || (value > bv - 1e-12 && k < *bk),
        };
        if better {
            best = Some((value, k, prims, inner));
        }
    }
    let (per_agent, k, prims, inner) = best.expect("threshold scan covers the grid");
    let c = inner.base;

    let n = g.len();
    let mut weighted_omega = vec![0.0; n];
    let mut omega = vec![0.0; n];
    let mut transfer = vec![0.0; n];
    for i in k..n {
        let gap = prims.money_pressure[i] - c;
        if friction_alive && gap > 0.0 {
            weighted_omega[i] = kappa * gap;
            omega[i] = weighted_omega[i] / lm;
        }
        transfer[i] = prims.ic_charge[i] - c - weighted_omega[i];
    }
    // Envelope-consistent treatment of excluded types: reporting utility c,
    // participation exactly rational.
    for i in 0..k {
        if c >= 0.0 {
            transfer[i] = -c;
        } else {
            transfer[i] = c / v;
            weighted_omega[i] = -c * (1.0 + v) / v;
            omega[i] = weighted_omega[i] / lm;
        }
    }

    // Incentive identity and participation inequality on served types.
    for i in k..n {
        let lhs = c + weighted_omega[i] + transfer[i];
        if (lhs - prims.ic_charge[i]).abs() > 1e-9 * (1.0 + prims.ic_charge[i].abs()) {
            return Err(Error::Internal(format!(
                "incentive identity violated at type {}: {} vs {}",
                g.x[i], lhs, prims.ic_charge[i]
            )));
        }
        let ir = prims.money_pressure[i] - v / (1.0 + v) * weighted_omega[i];
        if friction_alive && c < ir - 1e-9 {
            return Err(Error::Internal(format!(
                "participation inequality violated at type {}",
                g.x[i]
            )));
        }
    }

    let revenue = env.n as f64 * g.integrate(&transfer);
    let consistency = env.n as f64 * per_agent;
    if (revenue - consistency).abs() > 1e-8 * (1.0 + revenue.abs()) {
        return Err(Error::Internal(format!(
            "revenue accounting mismatch: {revenue} vs {consistency}"
        )));
    }

    let money: Vec<DiscreteDistribution> = (0..n)
        .map(|i| {
            if omega[i] > 1e-14 {
                binary_for_target(weighted_omega[i], transfer[i], lm)
            } else {
                Ok(DiscreteDistribution::delta(transfer[i]))
            }
        })
        .collect::<Result<_>>()?;
    let mechanism = Mechanism::Lottery(SymmetricLotteryMechanism {
        theta: g.x.clone(),
        type_dist: g.to_distribution(),
        good: prims.win_prob.iter().map(|&qi| bernoulli_value(qi)).collect(),
        money,
        v_outside: 0.0,
        outside_case: OutsideCase::Inf,
    });

    // The emitted mechanism must be incentive compatible per the monotone
    // perceived valuation criterion.
    let profile = build_profile(&mechanism, 0, Timeline::C, &env.spec)?;
    let ic = check_ic(&profile);
    if !ic.monotone {
        return Err(Error::Internal(
            "timeline-C mechanism has a non-monotone perceived valuation".into(),
        ));
    }

    let all_pay = (k..n).all(|i| omega[i] <= 1e-12);
    Ok(AuctionSolutionC {
        theta_hat_idx: k,
        theta_hat: g.x[k],
        base_utility: c,
        omega,
        weighted_omega,
        transfer,
        win_prob: prims.win_prob,
        perceived: prims.perceived,
        ic_charge: prims.ic_charge,
        participation_value: prims.participation_value,
        money_pressure: prims.money_pressure,
        revenue,
        all_pay,
        mechanism,
    })
}

/// True per-agent participation cost of running threshold `k` at base
/// utility `c`, counting excluded types at their envelope-consistent
/// transfers.
fn true_cost(env: &AuctionEnv, prims: &CPrimitives, k: usize, c: f64) -> f64 {
    let g = &env.grid;
    let v = env.spec.money_news();
    let lm = env.spec.aggregate_m();
    let friction_alive = lm > 0.0 && v > 0.0;
    let kappa = if v > 0.0 { (1.0 + v) / v } else { f64::INFINITY };
    let mut cost = 0.0;
    for i in k..g.len() {
        let gap = prims.money_pressure[i] - c;
        let phi = if friction_alive && gap > 0.0 { kappa * gap } else { 0.0 };
        cost += g.weights[i] * (c + phi);
    }
    for i in 0..k {
        cost += g.weights[i] * if c >= 0.0 { c } else { -c / v };
    }
    cost
}

/// One row of a money-news sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub money_news: f64,
    pub revenue_a: f64,
    pub revenue_c: f64,
}

/// Revenue comparison of timelines A and C over a sweep of the money-news
/// product `lambda_m mu_m` (held as `mu_m = 1`, `lambda_m` swept).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Number of sign changes of `revenue_c - revenue_a` along the sweep.
    pub sign_changes: usize,
    /// Interpolated sweep values where the difference crosses zero.
    pub crossings: Vec<f64>,
}

/// Sweeps the money-news product and compares timeline A and C revenues.
pub fn revenue_compare(
    env: &AuctionEnv,
    sweep: &[f64],
    domain: SubsidyDomain,
) -> Result<SweepTable> {
    let mut rows = Vec::with_capacity(sweep.len());
    for &v in sweep {
        if v < 1.0 {
            return Err(Error::Domain(format!(
                "money-news product must be at least 1 (lambda_m >= 1 with mu_m = 1), got {v}"
            )));
        }
        let spec = GainLossSpec::new(env.spec.mu_g, 1.0, env.spec.lambda_g, v)?;
        let env_v = AuctionEnv::new(env.n, env.grid.clone(), spec)?;
        let a = solve_auction(Timeline::A, &env_v)?;
        let c = solve_auction_c(&env_v, domain)?;
        rows.push(SweepRow {
            money_news: v,
            revenue_a: a.revenue,
            revenue_c: c.revenue,
        });
    }
    let mut sign_changes = 0;
    let mut crossings = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for row in &rows {
        let d = row.revenue_c - row.revenue_a;
        let s = if d.abs() <= 1e-12 { 0.0 } else { d.signum() };
        if let Some((pv, ps)) = prev {
            if s != 0.0 && ps != 0.0 && s != ps {
                sign_changes += 1;
                // Linear interpolation between sweep points for the report.
                let d_prev = rows
                    .iter()
                    .find(|r| r.money_news == pv)
                    .map(|r| r.revenue_c - r.revenue_a)
                    .unwrap_or(0.0);
                let t = d_prev / (d_prev - d);
                crossings.push(pv + t * (row.money_news - pv));
            }
        }
        if s != 0.0 {
            prev = Some((row.money_news, s));
        }
    }
    Ok(SweepTable {
        rows,
        sign_changes,
        crossings,
    })
}
