//! Seeded generators for randomized property sweeps.
//!
//! Everything here is deterministic given a seed; the acceptance suite and
//! the command-line sweeps both draw from these generators. Environment
//! draws are rejection-sampled into the regular instance class the solvers
//! support.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::auction::{myerson_virtual, AuctionEnv};
use crate::bayes::{DenseMechanism, Mechanism, OutsideCase};
use crate::dist::DiscreteDistribution;
use crate::error::Result;
use crate::grid::DensityGrid;
use crate::newsutil::GainLossSpec;
use crate::oracle::{MenuProblem, ProductLottery};
use crate::public_goods::PublicGoodEnv;
use crate::screening::{check_regularity, ScreeningEnv};
use crate::Timeline;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random discrete distribution with a handful of atoms in `[lo, hi]`.
pub fn random_distribution(r: &mut ChaCha8Rng, lo: f64, hi: f64, max_atoms: usize) -> DiscreteDistribution {
    let k = r.gen_range(1..=max_atoms);
    let mut support = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for _ in 0..k {
        support.push(r.gen_range(lo..hi));
        weights.push(r.gen_range(0.05..1.0));
    }
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
    DiscreteDistribution::new(support, probs).expect("random atoms form a distribution")
}

/// A random regular screening environment (rejection sampled).
pub fn random_screening_env(r: &mut ChaCha8Rng, grid: usize) -> Result<ScreeningEnv> {
    loop {
        let lambda_bar = r.gen_range(1.4..=2.0);
        let tilt = r.gen_range(-0.8..0.8);
        let loss_grid = DensityGrid::exponential_tilt(1.0, lambda_bar, grid, tilt)?;
        let value_dist = if r.gen_bool(0.5) {
            let hi = r.gen_range(0.5..2.0);
            DiscreteDistribution::uniform_grid(0.0, hi, grid.min(101))?
        } else {
            random_distribution(r, 0.0, r.gen_range(0.8..2.0), 6)
        };
        if !(value_dist.mean() > 1e-3) {
            continue;
        }
        let alpha = r.gen_range(0.35..0.65);
        let cost = r.gen_range(0.3..2.0);
        let env = match ScreeningEnv::new(value_dist, loss_grid, alpha, cost) {
            Ok(env) => env,
            Err(_) => continue,
        };
        let reg_a = check_regularity(Timeline::A, &env)?;
        let reg_b = check_regularity(Timeline::B, &env)?;
        if reg_a.regular && reg_b.regular {
            return Ok(env);
        }
    }
}

/// A random auction environment satisfying the news bound and regularity.
pub fn random_auction_env(r: &mut ChaCha8Rng, grid: usize) -> Result<AuctionEnv> {
    loop {
        let n = r.gen_range(2..=3);
        let lo = r.gen_range(0.0..1.0);
        let hi = lo + r.gen_range(0.5..1.5);
        let tilt = r.gen_range(-0.6..0.6);
        let mu_g = r.gen_range(0.0..1.2);
        let lambda_g = if mu_g > 0.0 {
            1.0 + r.gen_range(0.0..(1.0 / mu_g).min(1.0))
        } else {
            r.gen_range(1.0..2.0)
        };
        let mu_m = r.gen_range(0.1..1.0);
        let lambda_m = r.gen_range(1.0..2.0);
        let spec = GainLossSpec::new(mu_g, mu_m, lambda_g, lambda_m)?;
        let env = match AuctionEnv::new(n, DensityGrid::exponential_tilt(lo, hi, grid, tilt)?, spec)
        {
            Ok(env) => env,
            Err(_) => continue,
        };
        if myerson_virtual(&env).is_ok() {
            return Ok(env);
        }
    }
}

/// A random public-good environment in the interesting cost range.
pub fn random_public_good_env(r: &mut ChaCha8Rng, grid: usize) -> Result<PublicGoodEnv> {
    loop {
        let n = r.gen_range(2..=4);
        let hi = r.gen_range(0.5..1.5);
        let f = DiscreteDistribution::uniform_grid(0.0, hi, grid)?;
        let mu_g = r.gen_range(0.0..1.5);
        let lambda_g = r.gen_range(1.0..3.0);
        let cost = r.gen_range(0.1..(1.0 + mu_g) * hi);
        let env = PublicGoodEnv::new(n, f, mu_g, lambda_g, cost)?;
        if env.interesting_case() {
            return Ok(env);
        }
    }
}

/// A random menu problem over product lotteries with small supports.
pub fn random_menu_problem(r: &mut ChaCha8Rng, timeline: Timeline) -> MenuProblem {
    let spec = GainLossSpec::new(
        r.gen_range(0.0..1.5),
        r.gen_range(0.0..1.5),
        r.gen_range(1.0..2.5),
        r.gen_range(1.0..2.5),
    )
    .expect("sampled parameters are valid");
    let entries = r.gen_range(1..=5);
    let menu = (0..entries)
        .map(|_| ProductLottery {
            good: random_distribution(r, -1.0, 2.0, 4),
            money: random_distribution(r, -1.5, 1.5, 4),
        })
        .collect();
    let f0 = if r.gen_bool(0.7) {
        ProductLottery::degenerate(r.gen_range(-0.5..0.5), 0.0)
    } else {
        ProductLottery {
            good: random_distribution(r, -1.0, 1.0, 3),
            money: random_distribution(r, -0.5, 0.5, 3),
        }
    };
    MenuProblem {
        f0,
        menu,
        spec,
        timeline,
    }
}

/// A random small dense mechanism for oracle-versus-formula consistency
/// checks. Transfers and values vary with the whole profile.
pub fn random_dense_mechanism(r: &mut ChaCha8Rng, grid: usize) -> Mechanism {
    let theta: Vec<f64> = (0..grid)
        .map(|i| i as f64 / (grid - 1) as f64)
        .collect();
    let mut weights: Vec<f64> = (0..grid).map(|_| r.gen_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let dist = DiscreteDistribution::new(theta.clone(), weights).unwrap();
    let a = r.gen_range(0.2..1.0);
    let b = r.gen_range(0.0..0.5);
    let c = r.gen_range(-0.3..0.6);
    let d = r.gen_range(0.0..0.4);
    let g = grid as f64;
    Mechanism::Dense(
        DenseMechanism::from_fns(
            2,
            theta,
            dist,
            move |agent, p| {
                let own = p[agent] as f64 / g;
                let opp = p[1 - agent] as f64 / g;
                a * own + b * opp * own
            },
            move |agent, p| {
                let own = p[agent] as f64 / g;
                let opp = p[1 - agent] as f64 / g;
                c * own + d * (opp - 0.5)
            },
            0.0,
            OutsideCase::Inf,
        )
        .unwrap(),
    )
}
