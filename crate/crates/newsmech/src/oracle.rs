//! Brute-force implementation of the single-agent decision procedure,
//! used as an independent oracle against the solvers.
//!
//! The oracle never touches virtual types, perceived valuations, or any
//! other solver algebra: it evaluates menus of product lotteries by direct
//! sums over atoms, simulates the agent's choice and participation per
//! timeline, and searches misreports exhaustively. Agreement between this
//! module and the solver formulas is what the audit tests certify.

use serde::{Deserialize, Serialize};

use crate::bayes::Mechanism;
use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::newsutil::{gain_loss, GainLossSpec};
use crate::screening::{ScreeningEnv, ScreeningMenu};
use crate::Timeline;

/// A lottery with independent good-utility and money marginals.
///
/// The good marginal is measured in utility units (`v(a) * theta` already
/// applied); the money marginal is in wealth units, so transfers to a
/// designer enter negated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProductLottery {
    pub good: DiscreteDistribution,
    pub money: DiscreteDistribution,
}

impl ProductLottery {
    pub fn degenerate(good: f64, money: f64) -> Self {
        Self {
            good: DiscreteDistribution::delta(good),
            money: DiscreteDistribution::delta(money),
        }
    }
}

/// A menu-choice problem: pre-mechanism belief, menu, behavioral
/// parameters, and the timeline governing when news hits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MenuProblem {
    pub f0: ProductLottery,
    pub menu: Vec<ProductLottery>,
    pub spec: GainLossSpec,
    pub timeline: Timeline,
}

/// `sum_u p_u sum_z q_z xi(u - z)`: expected news from learning a draw of
/// `new` while holding belief `old`, one dimension at a time.
fn expected_news(new: &DiscreteDistribution, old: &DiscreteDistribution, mu: f64, lambda: f64) -> f64 {
    let mut acc = 0.0;
    for (u, p) in new.atoms() {
        for (z, q) in old.atoms() {
            acc += p * q * gain_loss(u - z, mu, lambda);
        }
    }
    acc
}

fn intrinsic(f: &ProductLottery) -> f64 {
    f.good.mean() + f.money.mean()
}

/// Surprise effect of switching the belief from `f0` to `f`, in expectation
/// over the realization of `f`.
fn surprise(f: &ProductLottery, f0: &ProductLottery, spec: &GainLossSpec) -> f64 {
    expected_news(&f.good, &f0.good, spec.mu_g, spec.lambda_g)
        + expected_news(&f.money, &f0.money, spec.mu_m, spec.lambda_m)
}

/// Expected realization effect of holding `f` to its resolution.
fn realization(f: &ProductLottery, spec: &GainLossSpec) -> f64 {
    expected_news(&f.good, &f.good, spec.mu_g, spec.lambda_g)
        + expected_news(&f.money, &f.money, spec.mu_m, spec.lambda_m)
}

/// Utility of rejecting the menu and keeping the prior belief.
pub fn outside_option(problem: &MenuProblem) -> f64 {
    intrinsic(&problem.f0) + realization(&problem.f0, &problem.spec)
}

/// Decision utilities of every menu entry at the stage where the lottery is
/// picked, together with the outside-option value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionReport {
    pub utilities: Vec<f64>,
    pub outside: f64,
}

/// Evaluates every menu entry at the choice stage of the problem's timeline.
pub fn decision_utilities(problem: &MenuProblem) -> Result<DecisionReport> {
    if problem.menu.is_empty() {
        return Err(Error::Invalid("menu must be non-empty".into()));
    }
    problem.spec.validate()?;
    let utilities = problem
        .menu
        .iter()
        .map(|f| match problem.timeline {
            Timeline::A => intrinsic(f) + surprise(f, &problem.f0, &problem.spec),
            Timeline::B => {
                intrinsic(f) + surprise(f, &problem.f0, &problem.spec) + realization(f, &problem.spec)
            }
            // The choice-stage self no longer experiences the surprise.
            Timeline::C | Timeline::D => intrinsic(f) + realization(f, &problem.spec),
        })
        .collect();
    Ok(DecisionReport {
        utilities,
        outside: outside_option(problem),
    })
}

/// Simulated behavior: whether the menu is accepted and which entry the
/// agent picks. Ties in the menu break toward the lowest index; an agent
/// indifferent between accepting and rejecting accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub accept: bool,
    pub chosen: usize,
}

fn argmax_lowest(utilities: &[f64]) -> usize {
    let mut best = 0;
    for (i, &u) in utilities.iter().enumerate().skip(1) {
        if u > utilities[best] {
            best = i;
        }
    }
    best
}

/// Runs the decision procedure for the problem's timeline.
pub fn simulate(problem: &MenuProblem) -> Result<SimOutcome> {
    match problem.timeline {
        Timeline::A | Timeline::B => {
            let report = decision_utilities(problem)?;
            let chosen = argmax_lowest(&report.utilities);
            Ok(SimOutcome {
                accept: report.utilities[chosen] >= report.outside,
                chosen,
            })
        }
        Timeline::C => {
            // Choice self picks; the participation self, anticipating that
            // pick, adds the surprise back.
            let report = decision_utilities(problem)?;
            let chosen = argmax_lowest(&report.utilities);
            let participation = report.utilities[chosen]
                + surprise(&problem.menu[chosen], &problem.f0, &problem.spec);
            Ok(SimOutcome {
                accept: participation >= report.outside,
                chosen,
            })
        }
        Timeline::D => {
            // Same behavior as C, evaluated the other way around: compute
            // each entry's participation value first, then let the (later)
            // choice self determine which entry is actually picked.
            problem.spec.validate()?;
            if problem.menu.is_empty() {
                return Err(Error::Invalid("menu must be non-empty".into()));
            }
            let participation_values: Vec<f64> = problem
                .menu
                .iter()
                .map(|f| {
                    intrinsic(f)
                        + realization(f, &problem.spec)
                        + surprise(f, &problem.f0, &problem.spec)
                })
                .collect();
            let choice_values: Vec<f64> = problem
                .menu
                .iter()
                .map(|f| intrinsic(f) + realization(f, &problem.spec))
                .collect();
            let chosen = argmax_lowest(&choice_values);
            Ok(SimOutcome {
                accept: participation_values[chosen] >= outside_option(problem),
                chosen,
            })
        }
    }
}

/// Per-entry expected realization terms and the C/D equivalence verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prop1Report {
    pub c_equals_d: bool,
    pub realization_terms: Vec<f64>,
    pub all_nonpositive: bool,
    pub zero_iff_degenerate: bool,
}

/// Checks that behavior in timelines C and D coincides exactly and that
/// every expected realization term is nonpositive, vanishing exactly on
/// degenerate lotteries.
pub fn verify_prop1(problem: &MenuProblem) -> Result<Prop1Report> {
    let mut c_problem = problem.clone();
    c_problem.timeline = Timeline::C;
    let mut d_problem = problem.clone();
    d_problem.timeline = Timeline::D;
    let sim_c = simulate(&c_problem)?;
    let sim_d = simulate(&d_problem)?;

    let realization_terms: Vec<f64> = problem
        .menu
        .iter()
        .map(|f| realization(f, &problem.spec))
        .collect();
    let all_nonpositive = realization_terms.iter().all(|&x| x <= 1e-12);
    let has_aggregate =
        problem.spec.aggregate_g() > 0.0 || problem.spec.aggregate_m() > 0.0;
    let zero_iff_degenerate = problem.menu.iter().zip(&realization_terms).all(|(f, &x)| {
        let degenerate_g = f.good.is_degenerate();
        let degenerate_m = f.money.is_degenerate();
        if degenerate_g && degenerate_m {
            x.abs() <= 1e-12
        } else if has_aggregate {
            // A nondegenerate marginal must bite unless its dimension has
            // no aggregate weight.
            let bite_g = !degenerate_g && problem.spec.aggregate_g() > 0.0;
            let bite_m = !degenerate_m && problem.spec.aggregate_m() > 0.0;
            !(bite_g || bite_m) || x < -1e-15
        } else {
            x.abs() <= 1e-12
        }
    });
    Ok(Prop1Report {
        c_equals_d: sim_c == sim_d,
        realization_terms,
        all_nonpositive,
        zero_iff_degenerate,
    })
}

/// Result of exhaustively searching misreports and participation decisions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    /// Largest reporting-stage gain from misreporting, over all types.
    pub max_gain: f64,
    pub worst_type: usize,
    pub worst_report: usize,
    /// Smallest participation slack (equilibrium participation utility minus
    /// outside option) over all types.
    pub min_ir_slack: f64,
    pub worst_ir_type: usize,
}

/// Builds the menu a type faces in a direct mechanism: one product lottery
/// per possible report, good values scaled by the true type.
fn mechanism_menu(mech: &Mechanism, agent: usize, theta: f64) -> Vec<ProductLottery> {
    (0..mech.theta().len())
        .map(|r| {
            let (good, money) = mech.induced_lotteries(agent, r);
            ProductLottery {
                good: good.affine(theta, 0.0),
                // Transfers to the designer are wealth losses.
                money: money.affine(-1.0, 0.0),
            }
        })
        .collect()
}

/// Exhaustive best-response audit of a direct mechanism for one agent.
///
/// For every own type the oracle rebuilds the induced menu of product
/// lotteries, evaluates every report at the timeline's reporting stage, and
/// returns the largest truthfulness violation; a value at or below `1e-8`
/// certifies incentive compatibility on the grid. Participation is audited
/// at the timeline's own stage against the outside option.
pub fn best_response_audit(
    mech: &Mechanism,
    timeline: Timeline,
    spec: &GainLossSpec,
    agent: usize,
) -> Result<AuditReport> {
    let thetas = mech.theta();
    let mut report = AuditReport {
        max_gain: f64::NEG_INFINITY,
        worst_type: 0,
        worst_report: 0,
        min_ir_slack: f64::INFINITY,
        worst_ir_type: 0,
    };
    for (ti, &theta) in thetas.iter().enumerate() {
        let f0 = ProductLottery::degenerate(mech.v_outside() * theta, 0.0);
        let problem = MenuProblem {
            f0,
            menu: mechanism_menu(mech, agent, theta),
            spec: *spec,
            timeline,
        };
        let stage = decision_utilities(&problem)?;
        let truthful = stage.utilities[ti];
        for (r, &u) in stage.utilities.iter().enumerate() {
            let gain = u - truthful;
            if gain > report.max_gain {
                report.max_gain = gain;
                report.worst_type = ti;
                report.worst_report = r;
            }
        }
        // Participation at the truthful equilibrium path.
        let participation = match timeline {
            Timeline::A | Timeline::B => truthful,
            Timeline::C | Timeline::D => {
                truthful + surprise(&problem.menu[ti], &problem.f0, spec)
            }
        };
        let slack = participation - stage.outside;
        if slack < report.min_ir_slack {
            report.min_ir_slack = slack;
            report.worst_ir_type = ti;
        }
    }
    Ok(report)
}

/// Oracle audit of a screening menu: each loss-aversion type faces the menu
/// of bundles as product lotteries over her unknown intrinsic value.
///
/// Returns the reporting-stage audit together with the worst participation
/// slack over served types and the best participation value an excluded
/// type could get (which must be nonpositive for the exclusion to be real).
pub fn audit_screening_menu(menu: &ScreeningMenu, env: &ScreeningEnv) -> Result<AuditReport> {
    let mut out = AuditReport {
        max_gain: f64::NEG_INFINITY,
        worst_type: 0,
        worst_report: 0,
        min_ir_slack: f64::INFINITY,
        worst_ir_type: 0,
    };
    let served = menu.threshold + 1;
    let bundles: Vec<ProductLottery> = (0..served)
        .map(|j| ProductLottery {
            good: env.value_dist.affine(env.value_of(menu.q[j]), 0.0),
            money: DiscreteDistribution::delta(-menu.t[j]),
        })
        .collect();
    for (i, &lam) in menu.lambda.iter().enumerate() {
        // The screened parameter is the agent's own loss aversion, identical
        // across dimensions, with unit news weights.
        let spec = GainLossSpec::new(1.0, 1.0, lam, lam)?;
        let problem = MenuProblem {
            f0: ProductLottery::degenerate(0.0, 0.0),
            menu: bundles.clone(),
            spec,
            timeline: menu.timeline,
        };
        let stage = decision_utilities(&problem)?;
        if i < served {
            let truthful = stage.utilities[i];
            for (r, &u) in stage.utilities.iter().enumerate() {
                let gain = u - truthful;
                if gain > out.max_gain {
                    out.max_gain = gain;
                    out.worst_type = i;
                    out.worst_report = r;
                }
            }
            let participation = match menu.timeline {
                Timeline::A | Timeline::B => truthful,
                Timeline::C | Timeline::D => {
                    truthful + surprise(&problem.menu[i], &problem.f0, &spec)
                }
            };
            let slack = participation - stage.outside;
            if slack < out.min_ir_slack {
                out.min_ir_slack = slack;
                out.worst_ir_type = i;
            }
        } else {
            // Excluded types must prefer to stay out entirely.
            let sim = simulate(&problem)?;
            if sim.accept {
                let participation = match menu.timeline {
                    Timeline::A | Timeline::B => stage.utilities[sim.chosen],
                    Timeline::C | Timeline::D => {
                        stage.utilities[sim.chosen]
                            + surprise(&problem.menu[sim.chosen], &problem.f0, &spec)
                    }
                };
                let gain = participation - stage.outside;
                if gain > 1e-9 && gain > out.max_gain {
                    out.max_gain = gain;
                    out.worst_type = i;
                    out.worst_report = sim.chosen;
                }
            }
        }
    }
    if !out.max_gain.is_finite() {
        out.max_gain = 0.0;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(mu_g: f64, lambda_g: f64) -> GainLossSpec {
        GainLossSpec::new(mu_g, 1.0, lambda_g, 1.0).unwrap()
    }

    #[test]
    fn single_atom_menu_utilities() {
        // F0 = (0,0), menu = {(1,0)}: timeline A utility 2 (intrinsic 1 +
        // surprise 1), and B agrees because the lottery is degenerate.
        let problem = MenuProblem {
            f0: ProductLottery::degenerate(0.0, 0.0),
            menu: vec![ProductLottery::degenerate(1.0, 0.0)],
            spec: spec(1.0, 2.0),
            timeline: Timeline::A,
        };
        let rep = decision_utilities(&problem).unwrap();
        assert_abs_diff_eq!(rep.utilities[0], 2.0);
        assert!(simulate(&problem).unwrap().accept);

        let mut b = problem.clone();
        b.timeline = Timeline::B;
        assert_abs_diff_eq!(decision_utilities(&b).unwrap().utilities[0], 2.0);
    }

    #[test]
    fn realization_penalty_lowers_timeline_b() {
        // Good lottery {0, 2} each 1/2: A gives 1 + 1 = 2, B subtracts the
        // expected realization penalty 0.5.
        let lottery = ProductLottery {
            good: DiscreteDistribution::new(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap(),
            money: DiscreteDistribution::delta(0.0),
        };
        let mk = |tl| MenuProblem {
            f0: ProductLottery::degenerate(0.0, 0.0),
            menu: vec![lottery.clone()],
            spec: spec(1.0, 2.0),
            timeline: tl,
        };
        assert_abs_diff_eq!(
            decision_utilities(&mk(Timeline::A)).unwrap().utilities[0],
            2.0
        );
        assert_abs_diff_eq!(
            decision_utilities(&mk(Timeline::B)).unwrap().utilities[0],
            1.5
        );
    }

    #[test]
    fn tie_breaking_rules() {
        // Two identical entries: index 0 wins.
        let e = ProductLottery::degenerate(1.0, -1.0);
        let problem = MenuProblem {
            f0: ProductLottery::degenerate(0.0, 0.0),
            menu: vec![e.clone(), e],
            spec: spec(1.0, 2.0),
            timeline: Timeline::A,
        };
        assert_eq!(simulate(&problem).unwrap().chosen, 0);

        // Outside option exactly ties the best entry: accept.
        let problem = MenuProblem {
            f0: ProductLottery::degenerate(0.0, 0.0),
            menu: vec![ProductLottery::degenerate(0.0, 0.0)],
            spec: spec(1.0, 2.0),
            timeline: Timeline::C,
        };
        assert!(simulate(&problem).unwrap().accept);

        // Strictly dominated menu: reject.
        let problem = MenuProblem {
            f0: ProductLottery::degenerate(1.0, 0.0),
            menu: vec![ProductLottery::degenerate(0.0, -1.0)],
            spec: spec(1.0, 2.0),
            timeline: Timeline::A,
        };
        assert!(!simulate(&problem).unwrap().accept);
    }

    #[test]
    fn prop1_on_small_menus() {
        let mixed = ProductLottery {
            good: DiscreteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap(),
            money: DiscreteDistribution::delta(-0.2),
        };
        let problem = MenuProblem {
            f0: ProductLottery::degenerate(0.0, 0.0),
            menu: vec![ProductLottery::degenerate(0.6, -0.2), mixed],
            spec: spec(1.0, 1.7),
            timeline: Timeline::C,
        };
        let rep = verify_prop1(&problem).unwrap();
        assert!(rep.c_equals_d);
        assert!(rep.all_nonpositive);
        assert!(rep.zero_iff_degenerate);
        assert_abs_diff_eq!(rep.realization_terms[0], 0.0);
        assert!(rep.realization_terms[1] < 0.0);
    }
}
