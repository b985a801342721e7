//! Monopolistic screening on loss aversion.
//!
//! A monopolist sells quantity `q` at price `t` to a buyer who learns her
//! intrinsic value `theta ~ F` only upon consumption and whose private type
//! is her loss-aversion level `lambda ~ G` on `[1, lambda_bar]`. News-utility
//! effects compress the buyer's willingness to pay into timeline-specific
//! *virtual types*: with `m = E[theta]` and `M = E[(theta - s)^+]`,
//!
//! * timeline A: `2m / (1 + lambda)`,
//! * timeline B: `(2m + (1 - lambda) M) / (1 + lambda)`,
//! * timeline C: `m + (1 - lambda) M`.
//!
//! Timelines A and B are solved pointwise from virtual valuations; timeline
//! C requires a constrained program because the self deciding participation
//! is not the self choosing the bundle, and the resulting fixed fee is
//! negative whenever profits are positive.

use serde::{Deserialize, Serialize};

use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::newsutil::positive_gap_mean;
use crate::Timeline;

/// Monopolist environment: value distribution, loss-aversion distribution,
/// power curvature of the value function, and marginal cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreeningEnv {
    /// Intrinsic-value distribution `F` (nonnegative support).
    pub value_dist: DiscreteDistribution,
    /// Loss-aversion distribution `G` on `[1, lambda_bar]`, `lambda_bar <= 2`.
    pub loss_grid: DensityGrid,
    /// Curvature of `v(q) = q^alpha`, `alpha` in `(0, 1)`.
    pub alpha: f64,
    /// Marginal cost `c > 0`.
    pub cost: f64,
    mean_value: f64,
    gap_mean: f64,
}

impl ScreeningEnv {
    pub fn new(
        value_dist: DiscreteDistribution,
        loss_grid: DensityGrid,
        alpha: f64,
        cost: f64,
    ) -> Result<Self> {
        if value_dist.min() < 0.0 {
            return Err(Error::Invalid(
                "intrinsic values must be nonnegative".into(),
            ));
        }
        let m = value_dist.mean();
        if !(m > 0.0) {
            return Err(Error::Invalid(
                "the good must yield positive intrinsic utility on average (mean of F > 0)".into(),
            ));
        }
        if (loss_grid.lo() - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(
                "loss-aversion support must start at lambda = 1".into(),
            ));
        }
        let bar = loss_grid.hi();
        if !(bar > 1.0 && bar <= 2.0 + 1e-12) {
            return Err(Error::Invalid(format!(
                "loss-aversion upper bound must lie in (1, 2], got {bar}"
            )));
        }
        if loss_grid.density.iter().any(|&g| g < 1e-9) {
            return Err(Error::Invalid(
                "loss-aversion density must stay above a positive floor".into(),
            ));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Invalid(format!("alpha must lie in (0,1), got {alpha}")));
        }
        if !(cost > 0.0) {
            return Err(Error::Invalid(format!("marginal cost must be positive, got {cost}")));
        }
        let big_m = positive_gap_mean(&value_dist);
        if big_m >= m {
            return Err(Error::Invalid(format!(
                "expected positive gap M = {big_m} must be below the mean m = {m}"
            )));
        }
        Ok(Self {
            value_dist,
            loss_grid,
            alpha,
            cost,
            mean_value: m,
            gap_mean: big_m,
        })
    }

    /// `m = E[theta]`.
    pub fn mean_value(&self) -> f64 {
        self.mean_value
    }

    /// `M = E[(theta - s)^+]` over two independent value draws.
    pub fn gap_mean(&self) -> f64 {
        self.gap_mean
    }

    pub fn lambda_bar(&self) -> f64 {
        self.loss_grid.hi()
    }

    /// `v(q) = q^alpha`.
    pub fn value_of(&self, q: f64) -> f64 {
        q.powf(self.alpha)
    }

    /// `v^{-1}(y)`.
    pub fn quantity_for(&self, y: f64) -> f64 {
        y.powf(1.0 / self.alpha)
    }

    /// The same environment with the loss-aversion grid at twice the
    /// resolution; used for grid-refinement error reports.
    pub fn refined(&self) -> Self {
        Self {
            value_dist: self.value_dist.clone(),
            loss_grid: self.loss_grid.refined(),
            alpha: self.alpha,
            cost: self.cost,
            mean_value: self.mean_value,
            gap_mean: self.gap_mean,
        }
    }
}

/// A menu of contracts indexed by the loss-aversion grid. Types above
/// `threshold` are excluded: they decline participation and end at `(0, 0)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreeningMenu {
    pub timeline: Timeline,
    pub lambda: Vec<f64>,
    pub q: Vec<f64>,
    pub t: Vec<f64>,
    /// Type-independent fee in the timeline-C payments (zero for A and B);
    /// negative values are a lump-sum subsidy.
    pub fee: f64,
    /// Index of the last served grid type.
    pub threshold: usize,
}

impl ScreeningMenu {
    pub fn served(&self) -> usize {
        self.threshold + 1
    }
}

fn mechanism_timeline(timeline: Timeline) -> Result<Timeline> {
    match timeline {
        Timeline::A | Timeline::B | Timeline::C => Ok(timeline),
        Timeline::D => Err(Error::Domain(
            "timeline D is behaviorally identical to C; solvers take A, B, or C".into(),
        )),
    }
}

/// The timeline's virtual type at loss-aversion level `lambda`.
pub fn virtual_type(timeline: Timeline, lambda: f64, env: &ScreeningEnv) -> Result<f64> {
    if !(lambda >= 1.0 - 1e-12 && lambda <= env.lambda_bar() + 1e-12) {
        return Err(Error::Domain(format!(
            "lambda = {lambda} outside [1, {}]",
            env.lambda_bar()
        )));
    }
    let (m, big_m) = (env.mean_value, env.gap_mean);
    Ok(match mechanism_timeline(timeline)? {
        Timeline::A => 2.0 * m / (1.0 + lambda),
        Timeline::B => (2.0 * m + (1.0 - lambda) * big_m) / (1.0 + lambda),
        Timeline::C => m + (1.0 - lambda) * big_m,
        Timeline::D => unreachable!(),
    })
}

/// Difference between the B and C virtual types,
/// `(1 - lambda)(m - lambda M) / (1 + lambda)`: the wedge between the
/// participation self and the play self in timeline C.
pub fn participation_wedge(lambda: f64, env: &ScreeningEnv) -> f64 {
    (1.0 - lambda) * (env.mean_value - lambda * env.gap_mean) / (1.0 + lambda)
}

fn rent_coefficient(timeline: Timeline, env: &ScreeningEnv) -> f64 {
    match timeline {
        Timeline::A => 2.0 * env.mean_value,
        Timeline::B => 2.0 * (env.mean_value + env.gap_mean),
        _ => unreachable!("rent coefficient defined for A and B"),
    }
}

fn virtual_valuation_at(timeline: Timeline, idx: usize, env: &ScreeningEnv) -> Result<f64> {
    let g = &env.loss_grid;
    let lam = g.x[idx];
    let gamma = virtual_type(timeline, lam, env)?;
    let k = rent_coefficient(timeline, env);
    Ok(gamma - k * g.cdf[idx] / ((1.0 + lam) * (1.0 + lam) * g.density[idx]))
}

/// Virtual valuation on the whole loss-aversion grid.
pub fn virtual_valuation_grid(timeline: Timeline, env: &ScreeningEnv) -> Result<Vec<f64>> {
    match mechanism_timeline(timeline)? {
        Timeline::A | Timeline::B => {}
        _ => {
            return Err(Error::Domain(
                "virtual valuations are defined for timelines A and B".into(),
            ))
        }
    }
    (0..env.loss_grid.len())
        .map(|i| virtual_valuation_at(timeline, i, env))
        .collect()
}

/// Virtual valuation at a type `s`, interpolating the grid between points.
pub fn virtual_valuation(timeline: Timeline, s: f64, env: &ScreeningEnv) -> Result<f64> {
    let grid = virtual_valuation_grid(timeline, env)?;
    let g = &env.loss_grid;
    if s <= g.lo() {
        return Ok(grid[0]);
    }
    if s >= g.hi() {
        return Ok(*grid.last().unwrap());
    }
    let j = g.x.partition_point(|&x| x <= s);
    let (x0, x1) = (g.x[j - 1], g.x[j]);
    let w = (s - x0) / (x1 - x0);
    Ok(grid[j - 1] * (1.0 - w) + grid[j] * w)
}

/// Outcome of the no-ironing check for the pointwise solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityReport {
    pub regular: bool,
    /// Earliest grid type where the regularity inequality fails.
    pub first_violation: Option<f64>,
}

/// Checks the regularity condition under which the virtual valuation is
/// nonincreasing and the profit integrand can be maximized pointwise:
/// `lhs >= G/g * (2/(1+lambda) + g'/g)` at every grid point, with
/// `lhs = 2` for timeline A and `lhs = (4m + 7M) / (2(m + M))` for B.
pub fn check_regularity(timeline: Timeline, env: &ScreeningEnv) -> Result<RegularityReport> {
    let lhs = match mechanism_timeline(timeline)? {
        Timeline::A => 2.0,
        Timeline::B => {
            (4.0 * env.mean_value + 7.0 * env.gap_mean)
                / (2.0 * (env.mean_value + env.gap_mean))
        }
        _ => {
            return Err(Error::Domain(
                "regularity applies to the pointwise timelines A and B".into(),
            ))
        }
    };
    let g = &env.loss_grid;
    for i in 0..g.len() {
        let rhs = g.cdf[i] / g.density[i]
            * (2.0 / (1.0 + g.x[i]) + g.slope[i] / g.density[i]);
        if rhs > lhs + 1e-12 {
            return Ok(RegularityReport {
                regular: false,
                first_violation: Some(g.x[i]),
            });
        }
    }
    Ok(RegularityReport {
        regular: true,
        first_violation: None,
    })
}

/// Payments implementing a nonincreasing allocation `q`, pinned so adjacent
/// incentive constraints bind exactly on the grid, plus a type-independent
/// `constant` added to every transfer.
///
/// For timelines A and B the chain is anchored at the top type with zero
/// utility before the constant; for timeline C it is anchored at the bottom,
/// where `constant` plays the role of the fixed fee.
///
/// As the grid is refined these sums converge to the usual envelope
/// integrals; keeping the adjacent constraints exactly binding is what lets
/// a brute-force audit certify the menu at tolerance `1e-8`.
pub fn mirrlees_payments(
    timeline: Timeline,
    q: &[f64],
    env: &ScreeningEnv,
    constant: f64,
) -> Result<Vec<f64>> {
    let timeline = mechanism_timeline(timeline)?;
    let lam = &env.loss_grid.x;
    if q.len() > lam.len() || q.is_empty() {
        return Err(Error::Invalid("allocation grid longer than the type grid".into()));
    }
    for w in q.windows(2) {
        if w[1] > w[0] + 1e-12 {
            return Err(Error::Invalid(
                "allocation must be nonincreasing in the loss-aversion type (incentive compatibility)"
                    .into(),
            ));
        }
    }
    let n = q.len();
    let v: Vec<f64> = q.iter().map(|&x| env.value_of(x)).collect();
    let mut t = vec![0.0; n];
    match timeline {
        Timeline::A | Timeline::B => {
            t[n - 1] = virtual_type(timeline, lam[n - 1], env)? * v[n - 1] + constant;
            for i in (0..n - 1).rev() {
                let gamma = virtual_type(timeline, lam[i], env)?;
                t[i] = t[i + 1] + gamma * (v[i] - v[i + 1]);
            }
        }
        Timeline::C => {
            t[0] = constant + virtual_type(Timeline::C, lam[0], env)? * v[0];
            for i in 0..n - 1 {
                let gamma = virtual_type(Timeline::C, lam[i], env)?;
                t[i + 1] = t[i] + gamma * (v[i + 1] - v[i]);
            }
        }
        Timeline::D => unreachable!(),
    }
    Ok(t)
}

/// Pointwise solver for timelines A and B.
///
/// Requires regularity; where the virtual valuation is positive the
/// first-order condition `Psi v'(q) = c` gives
/// `q = (alpha Psi / c)^{1/(1-alpha)}`, elsewhere the type is served zero.
pub fn solve_pointwise(timeline: Timeline, env: &ScreeningEnv) -> Result<ScreeningMenu> {
    let timeline = mechanism_timeline(timeline)?;
    if timeline == Timeline::C {
        return Err(Error::Domain(
            "timeline C needs the constrained solver solve_timeline_c".into(),
        ));
    }
    let reg = check_regularity(timeline, env)?;
    if !reg.regular {
        return Err(Error::Unsupported(format!(
            "virtual valuation is not monotone (first violation at lambda = {}); \
             bunching/ironing is outside the supported instance class",
            reg.first_violation.unwrap()
        )));
    }
    let psi = virtual_valuation_grid(timeline, env)?;
    let mut q: Vec<f64> = psi
        .iter()
        .map(|&p| {
            if p > 0.0 {
                (env.alpha * p / env.cost).powf(1.0 / (1.0 - env.alpha))
            } else {
                0.0
            }
        })
        .collect();
    // Regularity makes q nonincreasing; clamp float dust so the payment
    // recursion sees clean monotonicity.
    for i in 1..q.len() {
        if q[i] > q[i - 1] {
            if q[i] > q[i - 1] + 1e-10 * (1.0 + q[i - 1]) {
                return Err(Error::Unsupported(
                    "pointwise allocation is not monotone despite regularity".into(),
                ));
            }
            q[i] = q[i - 1];
        }
    }
    let t = mirrlees_payments(timeline, &q, env, 0.0)?;
    let threshold = q
        .iter()
        .rposition(|&x| x > 0.0)
        .unwrap_or(0)
        .max(0);
    Ok(ScreeningMenu {
        timeline,
        lambda: env.loss_grid.x.clone(),
        q,
        t,
        fee: 0.0,
        threshold: if q.iter().all(|&x| x == 0.0) {
            q.len() - 1
        } else {
            threshold
        },
    })
}

/// Expected profit of a menu, `sum_i p_i (t_i - c q_i)` over served types.
///
/// For timelines A and B the value is cross-checked against the virtual-
/// valuation form of the profit integral; a mismatch beyond quadrature
/// error indicates an inconsistent menu.
pub fn profit(menu: &ScreeningMenu, env: &ScreeningEnv) -> Result<f64> {
    let g = &env.loss_grid;
    if menu.lambda.len() != g.len() {
        return Err(Error::Invalid("menu grid does not match the environment".into()));
    }
    let mut pi = 0.0;
    for i in 0..=menu.threshold {
        pi += g.weights[i] * (menu.t[i] - env.cost * menu.q[i]);
    }
    if matches!(menu.timeline, Timeline::A | Timeline::B) && menu.fee == 0.0 {
        let psi = virtual_valuation_grid(menu.timeline, env)?;
        let mut pi_vv = 0.0;
        for i in 0..g.len() {
            pi_vv += g.weights[i] * (psi[i] * env.value_of(menu.q[i]) - env.cost * menu.q[i]);
        }
        let scale = pi.abs().max(pi_vv.abs()).max(1e-6);
        let tol = 1e-8 + 20.0 * g.step() * scale;
        if (pi - pi_vv).abs() > tol {
            return Err(Error::Internal(format!(
                "menu profit {pi} and virtual-valuation profit {pi_vv} disagree beyond quadrature error {tol}"
            )));
        }
    }
    Ok(pi)
}

/// Play-stage decision utility of a type for a bundle `(q, t)`.
///
/// Timelines A and B scale the quasilinear core by `(1 + lambda)` through
/// the money surprise; timeline C's play self has no surprise term.
pub fn play_utility(timeline: Timeline, lambda: f64, q: f64, t: f64, env: &ScreeningEnv) -> Result<f64> {
    let gamma = virtual_type(timeline, lambda, env)?;
    Ok(match timeline {
        Timeline::A | Timeline::B => (1.0 + lambda) * (gamma * env.value_of(q) - t),
        Timeline::C => gamma * env.value_of(q) - t,
        Timeline::D => unreachable!(),
    })
}

/// Participation-stage utility of a type from a bundle. For A and B this is
/// the play utility; for C the participation self adds the surprise back and
/// evaluates with the timeline-B virtual type.
pub fn participation_utility(
    timeline: Timeline,
    lambda: f64,
    q: f64,
    t: f64,
    env: &ScreeningEnv,
) -> Result<f64> {
    match mechanism_timeline(timeline)? {
        Timeline::A | Timeline::B => play_utility(timeline, lambda, q, t, env),
        Timeline::C => {
            let gamma_b = virtual_type(Timeline::B, lambda, env)?;
            Ok((1.0 + lambda) * (gamma_b * env.value_of(q) - t))
        }
        Timeline::D => unreachable!(),
    }
}

/// Worst incentive and participation slacks of a menu on the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MenuAudit {
    /// Largest gain any served type gets from taking another served bundle.
    pub max_ic_gain: f64,
    /// Smallest participation slack over served types (negative = violation).
    pub min_ir_slack: f64,
    /// Largest participation utility an excluded type would get from the
    /// menu (positive = the claimed exclusion is inconsistent).
    pub max_excluded_value: f64,
}

/// Grid audit of a solved menu using the decision-utility formulas directly.
pub fn audit_menu(menu: &ScreeningMenu, env: &ScreeningEnv) -> Result<MenuAudit> {
    let k = menu.threshold;
    let mut max_ic_gain = f64::NEG_INFINITY;
    let mut min_ir_slack = f64::INFINITY;
    let mut max_excluded = f64::NEG_INFINITY;
    for (i, &lam) in menu.lambda.iter().enumerate() {
        if i <= k {
            let own = play_utility(menu.timeline, lam, menu.q[i], menu.t[i], env)?;
            let mut best_other = f64::NEG_INFINITY;
            for j in 0..=k {
                if j != i {
                    best_other = best_other.max(play_utility(
                        menu.timeline,
                        lam,
                        menu.q[j],
                        menu.t[j],
                        env,
                    )?);
                }
            }
            max_ic_gain = max_ic_gain.max(best_other - own);
            min_ir_slack = min_ir_slack
                .min(participation_utility(menu.timeline, lam, menu.q[i], menu.t[i], env)?);
        } else {
            let mut best = f64::NEG_INFINITY;
            for j in 0..=k {
                best = best.max(participation_utility(
                    menu.timeline,
                    lam,
                    menu.q[j],
                    menu.t[j],
                    env,
                )?);
            }
            max_excluded = max_excluded.max(best);
        }
    }
    Ok(MenuAudit {
        max_ic_gain: if max_ic_gain.is_finite() { max_ic_gain } else { 0.0 },
        min_ir_slack: if min_ir_slack.is_finite() { min_ir_slack } else { 0.0 },
        max_excluded_value: if max_excluded.is_finite() { max_excluded } else { 0.0 },
    })
}

/// Tuning knobs for the timeline-C solver.
#[derive(Debug, Clone)]
pub struct TimelineCOptions {
    /// Hard cap on ascent iterations per threshold candidate.
    pub max_iters: usize,
    /// Declare convergence after this many consecutive iterations whose
    /// best-objective improvement is below `stall_tol`.
    pub stall_iters: usize,
    pub stall_tol: f64,
    /// Evaluate every threshold candidate instead of a coarse-to-fine scan.
    pub exhaustive_thresholds: bool,
}

impl Default for TimelineCOptions {
    fn default() -> Self {
        Self {
            max_iters: 200_000,
            stall_iters: 50,
            stall_tol: 1e-10,
            exhaustive_thresholds: true,
        }
    }
}

/// Projection onto nonincreasing, nonnegative vectors: pool adjacent
/// violators on the (reversed) sequence, then clip at zero.
fn project_monotone(w: &mut [f64]) {
    // PAV for a nonincreasing fit: blocks carry (sum, count); merging happens
    // when a later block mean exceeds an earlier one.
    let n = w.len();
    let mut sums: Vec<f64> = Vec::with_capacity(n);
    let mut counts: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = w[i];
        let mut c = 1usize;
        while let (Some(&ps), Some(&pc)) = (sums.last(), counts.last()) {
            if ps / pc as f64 <= s / c as f64 + 0.0 {
                s += ps;
                c += pc;
                sums.pop();
                counts.pop();
            } else {
                break;
            }
        }
        sums.push(s);
        counts.push(c);
    }
    let mut idx = 0;
    for (s, c) in sums.into_iter().zip(counts) {
        let mean = (s / c as f64).max(0.0);
        for _ in 0..c {
            w[idx] = mean;
            idx += 1;
        }
    }
}

/// Everything the inner solver needs about one threshold candidate.
struct CandidateSolution {
    w: Vec<f64>,
    fee: f64,
    profit: f64,
    /// Index where the participation constraint binds.
    binding: usize,
}

struct CProgram<'a> {
    env: &'a ScreeningEnv,
    gamma_c: Vec<f64>,
    wedge: Vec<f64>,
}

impl<'a> CProgram<'a> {
    fn new(env: &'a ScreeningEnv) -> Result<Self> {
        let lam = &env.loss_grid.x;
        let gamma_c = lam
            .iter()
            .map(|&l| virtual_type(Timeline::C, l, env))
            .collect::<Result<Vec<_>>>()?;
        let wedge = lam.iter().map(|&l| participation_wedge(l, env)).collect();
        Ok(Self {
            env,
            gamma_c,
            wedge,
        })
    }

    /// Fee and binding index implied by a derivative profile `w = M v(q)`:
    /// the participation constraint `wedge * w / M - cumint(w) >= fee` is
    /// made tight at its minimum.
    fn fee_for(&self, w: &[f64]) -> (f64, usize) {
        let step = self.env.loss_grid.step();
        let big_m = self.env.gap_mean;
        let mut cum = 0.0;
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for (i, &wi) in w.iter().enumerate() {
            if i > 0 {
                cum += wi * step;
            }
            let slack = self.wedge[i] * wi / big_m - cum;
            if slack < best {
                best = slack;
                arg = i;
            }
        }
        (best, arg)
    }

    /// Exact menu profit of the candidate `w` on served range `0..w.len()`.
    fn profit_of(&self, w: &[f64]) -> f64 {
        let g = &self.env.loss_grid;
        let step = g.step();
        let big_m = self.env.gap_mean;
        let (fee, _) = self.fee_for(w);
        let mut cum = 0.0;
        let mut pi = 0.0;
        for (i, &wi) in w.iter().enumerate() {
            if i > 0 {
                cum += wi * step;
            }
            let q = self.env.quantity_for(wi / big_m);
            pi += g.weights[i] * (fee + self.gamma_c[i] * wi / big_m + cum - self.env.cost * q);
        }
        pi
    }

    /// Supergradient of the profit at `w` (a.e. gradient; at the binding
    /// kink the active constraint's gradient is used).
    fn gradient(&self, w: &[f64], grad: &mut [f64]) {
        let g = &self.env.loss_grid;
        let step = g.step();
        let big_m = self.env.gap_mean;
        let alpha = self.env.alpha;
        let k = w.len() - 1;
        let served_mass: f64 = g.weights[..=k].iter().sum();
        let (_, binding) = self.fee_for(w);
        // Tail masses sum_{i=j..k} p_i.
        let mut tail = vec![0.0; k + 1];
        let mut acc = 0.0;
        for j in (0..=k).rev() {
            acc += g.weights[j];
            tail[j] = acc;
        }
        for j in 0..=k {
            let mut d = g.weights[j] * self.gamma_c[j] / big_m;
            if j > 0 {
                d += step * tail[j];
            }
            let ratio = (w[j] / big_m).max(0.0);
            d -= g.weights[j] * self.env.cost / (alpha * big_m) * ratio.powf(1.0 / alpha - 1.0);
            if j == binding {
                d += served_mass * self.wedge[j] / big_m;
            }
            if j > 0 && j <= binding {
                d -= served_mass * step;
            }
            grad[j] = d;
        }
    }

    /// Projected gradient ascent with backtracking line search.
    fn maximize(&self, mut w: Vec<f64>, opts: &TimelineCOptions) -> Result<CandidateSolution> {
        project_monotone(&mut w);
        let mut best_w = w.clone();
        let mut best = self.profit_of(&w);
        let mut grad = vec![0.0; w.len()];
        let mut trial = vec![0.0; w.len()];
        let mut step = 1.0;
        let mut stalled = 0usize;
        let mut last_gap = f64::INFINITY;
        let mut iter = 0usize;
        while iter < opts.max_iters {
            iter += 1;
            self.gradient(&w, &mut grad);
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm < 1e-14 {
                break;
            }
            let mut improved = false;
            let mut s = step;
            for _ in 0..45 {
                for (t, (&wi, &gi)) in trial.iter_mut().zip(w.iter().zip(&grad)) {
                    *t = wi + s * gi;
                }
                project_monotone(&mut trial);
                let val = self.profit_of(&trial);
                if val > best {
                    last_gap = val - best;
                    best = val;
                    std::mem::swap(&mut w, &mut trial);
                    best_w.copy_from_slice(&w);
                    step = s * 2.0;
                    improved = true;
                    break;
                }
                s *= 0.5;
            }
            if !improved || last_gap < opts.stall_tol * (1.0 + best.abs()) {
                stalled += 1;
                if !improved {
                    step = (step * 0.25).max(1e-16);
                }
            } else {
                stalled = 0;
            }
            if stalled >= opts.stall_iters {
                let (fee, binding) = self.fee_for(&best_w);
                return Ok(CandidateSolution {
                    w: best_w,
                    fee,
                    profit: best,
                    binding,
                });
            }
        }
        Err(Error::NonConvergence {
            message: format!(
                "timeline-C ascent spent {} iterations without stalling",
                opts.max_iters
            ),
            last_gap,
        })
    }

    /// Initial point: the pointwise maximizer of the rent-adjusted objective
    /// for served range `0..=k`, ignoring the participation coupling.
    fn pointwise_init(&self, k: usize) -> Vec<f64> {
        let g = &self.env.loss_grid;
        let big_m = self.env.gap_mean;
        let gk = g.cdf[k];
        let mut w: Vec<f64> = (0..=k)
            .map(|i| {
                let psi = self.gamma_c[i] + big_m * (gk - g.cdf[i]) / g.density[i];
                if psi > 0.0 {
                    let q = (self.env.alpha * psi / self.env.cost).powf(1.0 / (1.0 - self.env.alpha));
                    big_m * self.env.value_of(q)
                } else {
                    0.0
                }
            })
            .collect();
        project_monotone(&mut w);
        w
    }
}

/// Solves the timeline-C program with default options.
pub fn solve_timeline_c(env: &ScreeningEnv) -> Result<ScreeningMenu> {
    solve_timeline_c_opts(env, &TimelineCOptions::default())
}

/// Solves the timeline-C screening program.
///
/// The program is expressed in the derivative profile `w = M v(q)` of the
/// substituted utility variable: `w` must be nonnegative and nonincreasing
/// (projection by pool-adjacent-violators on increments), the fee equals the
/// tightest participation slack, and the exact menu profit is maximized by
/// projected gradient ascent. An outer scan over the exclusion threshold
/// keeps a candidate only if the participation constraint binds at the
/// threshold itself, so excluded types genuinely decline to participate;
/// ties pick the smaller threshold.
pub fn solve_timeline_c_opts(env: &ScreeningEnv, opts: &TimelineCOptions) -> Result<ScreeningMenu> {
    let program = CProgram::new(env)?;
    let n = env.loss_grid.len();
    let mut best: Option<(f64, usize, CandidateSolution)> = None;
    let mut warm: Option<Vec<f64>> = None;
    let candidates: Vec<usize> = if opts.exhaustive_thresholds {
        (0..n).rev().collect()
    } else {
        let stride = (n / 24).max(1);
        let mut c: Vec<usize> = (0..n).rev().step_by(stride).collect();
        if !c.contains(&0) {
            c.push(0);
        }
        c
    };
    for &k in &candidates {
        let init = match &warm {
            Some(w) if w.len() > k => w[..=k].to_vec(),
            _ => program.pointwise_init(k),
        };
        let mut sol = program.maximize(init, opts)?;
        // Also try the cold pointwise start; keep the better of the two.
        if warm.is_some() {
            let cold = program.maximize(program.pointwise_init(k), opts)?;
            if cold.profit > sol.profit {
                sol = cold;
            }
        }
        warm = Some(sol.w.clone());
        let consistent = k + 1 == n
            || (sol.fee - (program.wedge[k] * sol.w[k] / env.gap_mean
                - sol.w[1..=k].iter().sum::<f64>() * env.loss_grid.step()))
                .abs()
                <= 1e-7 * (1.0 + sol.fee.abs());
        if !consistent {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bp, bk, _)) => {
                sol.profit > bp + 1e-12 || (sol.profit > bp - 1e-12 && k < *bk)
            }
        };
        if better {
            best = Some((sol.profit, k, sol));
        }
    }
    let (_, k, sol) = best.ok_or_else(|| {
        Error::Internal("no consistent timeline-C threshold candidate".into())
    })?;

    let mut q = vec![0.0; n];
    for i in 0..=k {
        q[i] = env.quantity_for(sol.w[i] / env.gap_mean);
    }
    let t_served = mirrlees_payments(Timeline::C, &q[..=k], env, sol.fee)?;
    let mut t = vec![0.0; n];
    t[..=k].copy_from_slice(&t_served);
    let menu = ScreeningMenu {
        timeline: Timeline::C,
        lambda: env.loss_grid.x.clone(),
        q,
        t,
        fee: sol.fee,
        threshold: k,
    };
    let pi = profit(&menu, env)?;
    if pi > 1e-9 && menu.fee >= 0.0 && menu.served() > 1 {
        return Err(Error::Internal(format!(
            "timeline-C optimum has positive profit {pi} but nonnegative fee {}",
            menu.fee
        )));
    }
    Ok(menu)
}

/// Profits, menus, and grid-refinement errors of all three timelines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimelineComparison {
    pub profit_a: f64,
    pub profit_b: f64,
    pub profit_c: f64,
    pub grid_error: [f64; 3],
    pub menu_a: ScreeningMenu,
    pub menu_b: ScreeningMenu,
    pub menu_c: ScreeningMenu,
}

impl TimelineComparison {
    /// Tolerance at which the profit ordering is asserted: `1e-6` relative
    /// plus the reported grid errors of the two sides.
    pub fn ordering_tolerance(&self, i: usize, j: usize) -> f64 {
        let scale = self.profit_a.abs().max(1.0);
        1e-6 * scale + self.grid_error[i] + self.grid_error[j]
    }
}

/// Solves all three timelines, reports grid-refinement deltas, and asserts
/// the profit ordering `A >= B >= C` within tolerance.
pub fn compare_timelines(env: &ScreeningEnv) -> Result<TimelineComparison> {
    for tl in [Timeline::A, Timeline::B] {
        let reg = check_regularity(tl, env)?;
        if !reg.regular {
            return Err(Error::Unsupported(format!(
                "timeline {tl} is non-regular at lambda = {}",
                reg.first_violation.unwrap()
            )));
        }
    }
    let menu_a = solve_pointwise(Timeline::A, env)?;
    let menu_b = solve_pointwise(Timeline::B, env)?;
    let opts = TimelineCOptions::default();
    let menu_c = solve_timeline_c_opts(env, &opts)?;
    let (pa, pb, pc) = (
        profit(&menu_a, env)?,
        profit(&menu_b, env)?,
        profit(&menu_c, env)?,
    );
    let refined = env.refined();
    let ra = profit(&solve_pointwise(Timeline::A, &refined)?, &refined)?;
    let rb = profit(&solve_pointwise(Timeline::B, &refined)?, &refined)?;
    let rc = profit(&solve_timeline_c_opts(&refined, &opts)?, &refined)?;
    let cmp = TimelineComparison {
        profit_a: pa,
        profit_b: pb,
        profit_c: pc,
        grid_error: [(pa - ra).abs(), (pb - rb).abs(), (pc - rc).abs()],
        menu_a,
        menu_b,
        menu_c,
    };
    if pa + cmp.ordering_tolerance(0, 1) < pb {
        return Err(Error::Internal(format!(
            "profit ordering violated: A = {pa} < B = {pb}"
        )));
    }
    if pb + cmp.ordering_tolerance(1, 2) < pc {
        return Err(Error::Internal(format!(
            "profit ordering violated: B = {pb} < C = {pc}"
        )));
    }
    Ok(cmp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// The running example: F = uniform[0,1], G = uniform[1,2], v = sqrt,
    /// unit marginal cost.
    pub(crate) fn example_env(grid: usize) -> ScreeningEnv {
        ScreeningEnv::new(
            DiscreteDistribution::uniform_grid(0.0, 1.0, grid).unwrap(),
            DensityGrid::uniform(1.0, 2.0, grid).unwrap(),
            0.5,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn virtual_types_match_hand_values() {
        let env = example_env(201);
        // m = 1/2, M = 1/6 (within grid error).
        assert_abs_diff_eq!(env.mean_value(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(env.gap_mean(), 1.0 / 6.0, epsilon = 1e-2);

        assert_abs_diff_eq!(
            virtual_type(Timeline::A, 1.0, &env).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        // Gamma^C at lambda = 1 equals m: wedge vanishes at the bottom type.
        assert_abs_diff_eq!(
            virtual_type(Timeline::C, 1.0, &env).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        let m16 = env.gap_mean();
        assert_abs_diff_eq!(
            virtual_type(Timeline::B, 2.0, &env).unwrap(),
            (1.0 - m16) / 3.0,
            epsilon = 1e-12
        );
        assert!(virtual_type(Timeline::A, 2.5, &env).is_err());
    }

    #[test]
    fn wedge_identity_on_grid() {
        let env = example_env(101);
        for &lam in &env.loss_grid.x {
            let direct = virtual_type(Timeline::B, lam, &env).unwrap()
                - virtual_type(Timeline::C, lam, &env).unwrap();
            assert_abs_diff_eq!(direct, participation_wedge(lam, &env), epsilon = 1e-12);
        }
    }

    #[test]
    fn example_virtual_valuation_closed_form() {
        let env = example_env(201);
        for &s in &[1.0, 1.25, 1.5, 2.0] {
            let psi = virtual_valuation(Timeline::A, s, &env).unwrap();
            assert_abs_diff_eq!(psi, 2.0 / ((1.0 + s) * (1.0 + s)), epsilon = 1e-9);
        }
        assert_abs_diff_eq!(
            virtual_valuation(Timeline::A, 1.0, &env).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        // Psi^B <= Psi^A pointwise.
        let a = virtual_valuation_grid(Timeline::A, &env).unwrap();
        let b = virtual_valuation_grid(Timeline::B, &env).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(y <= x);
        }
    }

    #[test]
    fn regularity_examples() {
        let env = example_env(101);
        assert!(check_regularity(Timeline::A, &env).unwrap().regular);
        assert!(check_regularity(Timeline::B, &env).unwrap().regular);

        // A steeply increasing density makes g'/g large and breaks the bound.
        let steep = ScreeningEnv::new(
            DiscreteDistribution::uniform_grid(0.0, 1.0, 101).unwrap(),
            DensityGrid::exponential_tilt(1.0, 2.0, 101, 9.0).unwrap(),
            0.5,
            1.0,
        )
        .unwrap();
        let rep = check_regularity(Timeline::A, &steep).unwrap();
        assert!(!rep.regular);
        assert!(rep.first_violation.is_some());
    }

    #[test]
    fn pointwise_solution_matches_example_closed_form() {
        let env = example_env(201);
        let menu = solve_pointwise(Timeline::A, &env).unwrap();
        for (i, &lam) in menu.lambda.iter().enumerate() {
            let expect = 1.0 / (1.0 + lam).powi(4);
            assert!((menu.q[i] - expect).abs() <= 1e-3 * expect);
        }
        assert_abs_diff_eq!(menu.q[0], 1.0 / 16.0, epsilon = 1e-9);
        // No exclusion: Psi^A > 0 everywhere in this example.
        assert_eq!(menu.threshold, menu.lambda.len() - 1);
    }

    #[test]
    fn mirrlees_payment_edges() {
        let env = example_env(41);
        let n = env.loss_grid.len();
        // Flat zero allocation: transfers are the constant.
        let t = mirrlees_payments(Timeline::A, &vec![0.0; n], &env, 0.7).unwrap();
        for &x in &t {
            assert_abs_diff_eq!(x, 0.7, epsilon = 1e-12);
        }
        // Non-monotone q is rejected.
        let mut bad = vec![0.5; n];
        bad[n - 1] = 0.9;
        assert!(mirrlees_payments(Timeline::A, &bad, &env, 0.0).is_err());
        // Timeline C at the bottom type: t(1) = f + Gamma^C(1) v(q(1)).
        let q = vec![0.25; n];
        let t = mirrlees_payments(Timeline::C, &q, &env, -0.3).unwrap();
        let expect = -0.3 + virtual_type(Timeline::C, 1.0, &env).unwrap() * env.value_of(0.25);
        assert_abs_diff_eq!(t[0], expect, epsilon = 1e-12);
    }

    #[test]
    fn top_type_utility_is_pinned_to_zero() {
        let env = example_env(101);
        let menu = solve_pointwise(Timeline::A, &env).unwrap();
        let n = menu.lambda.len();
        let u_top = virtual_type(Timeline::A, menu.lambda[n - 1], &env).unwrap()
            * env.value_of(menu.q[n - 1])
            - menu.t[n - 1];
        assert_abs_diff_eq!(u_top, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pointwise_menus_pass_grid_audit() {
        let env = example_env(101);
        for tl in [Timeline::A, Timeline::B] {
            let menu = solve_pointwise(tl, &env).unwrap();
            let audit = audit_menu(&menu, &env).unwrap();
            assert!(audit.max_ic_gain <= 1e-10, "ic gain {}", audit.max_ic_gain);
            assert!(audit.min_ir_slack >= -1e-10, "ir slack {}", audit.min_ir_slack);
        }
    }

    #[test]
    fn example_profit_matches_independent_quadrature() {
        let env = example_env(201);
        let menu = solve_pointwise(Timeline::A, &env).unwrap();
        let pi = profit(&menu, &env).unwrap();
        // Oracle: numerically integrate Psi^A(s)^2 / (4c) over uniform[1,2]
        // with the closed form Psi^A(s) = 2/(1+s)^2; the analytic value of
        // that integral is 19/648.
        let oracle = {
            let steps = 20_000;
            let h = 1.0 / steps as f64;
            let f = |s: f64| (2.0 / ((1.0 + s) * (1.0 + s))).powi(2) / 4.0;
            let mut acc = 0.5 * (f(1.0) + f(2.0));
            for i in 1..steps {
                acc += f(1.0 + i as f64 * h);
            }
            acc * h
        };
        assert_abs_diff_eq!(oracle, 19.0 / 648.0, epsilon = 1e-9);
        assert!((pi - oracle).abs() <= 1e-3 * oracle);
    }

    #[test]
    fn timeline_c_solver_on_example() {
        let env = example_env(81);
        let menu = solve_timeline_c(&env).unwrap();
        let pi = profit(&menu, &env).unwrap();
        assert!(pi > 0.0, "timeline C should be profitable here, got {pi}");
        assert!(menu.fee < 0.0, "positive profit requires a subsidy, fee = {}", menu.fee);
        // Play-stage incentive audit and participation audit.
        let audit = audit_menu(&menu, &env).unwrap();
        assert!(audit.max_ic_gain <= 1e-9, "ic gain {}", audit.max_ic_gain);
        assert!(audit.min_ir_slack >= -1e-9, "ir slack {}", audit.min_ir_slack);
        assert!(audit.max_excluded_value <= 1e-9);
        // q nonincreasing, t nonincreasing over served types.
        for i in 1..=menu.threshold {
            assert!(menu.q[i] <= menu.q[i - 1] + 1e-10);
            assert!(menu.t[i] <= menu.t[i - 1] + 1e-10);
        }
        // The envelope: utility steps equal -M v(q) increments.
        let big_m = env.gap_mean();
        for i in 0..menu.threshold {
            let u_i = virtual_type(Timeline::C, menu.lambda[i], &env).unwrap()
                * env.value_of(menu.q[i])
                - menu.t[i];
            let u_next = virtual_type(Timeline::C, menu.lambda[i + 1], &env).unwrap()
                * env.value_of(menu.q[i + 1])
                - menu.t[i + 1];
            let step = env.loss_grid.step();
            assert_abs_diff_eq!(
                u_next - u_i,
                -big_m * env.value_of(menu.q[i + 1]) * step,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn unprofitable_cost_gives_empty_menu() {
        let env = ScreeningEnv::new(
            DiscreteDistribution::uniform_grid(0.0, 1.0, 41).unwrap(),
            DensityGrid::uniform(1.0, 2.0, 41).unwrap(),
            0.5,
            500.0,
        )
        .unwrap();
        let menu = solve_timeline_c(&env).unwrap();
        let pi = profit(&menu, &env).unwrap();
        assert!(pi.abs() <= 1e-9);
        assert!(menu.q.iter().all(|&q| q < 1e-9));
        assert!(menu.t.iter().all(|&t| t.abs() < 1e-9));
    }

    #[test]
    fn ordering_holds_on_example() {
        let env = example_env(81);
        let cmp = compare_timelines(&env).unwrap();
        assert!(cmp.profit_a >= cmp.profit_b - cmp.ordering_tolerance(0, 1));
        assert!(cmp.profit_b >= cmp.profit_c - cmp.ordering_tolerance(1, 2));
        assert!(cmp.profit_a > 0.0);
    }

    #[test]
    fn degenerate_value_distribution_equates_a_and_b() {
        // F = point mass at m: M = 0, so B's extra term vanishes.
        let env = ScreeningEnv::new(
            DiscreteDistribution::delta(0.5),
            DensityGrid::uniform(1.0, 2.0, 61).unwrap(),
            0.5,
            1.0,
        )
        .unwrap();
        let pa = profit(&solve_pointwise(Timeline::A, &env).unwrap(), &env).unwrap();
        let pb = profit(&solve_pointwise(Timeline::B, &env).unwrap(), &env).unwrap();
        assert_abs_diff_eq!(pa, pb, epsilon = 1e-12);
    }
}
