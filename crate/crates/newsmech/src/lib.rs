//! Solvers and a verification oracle for Bayesian mechanism design with
//! news-utility, loss-averse agents.
//!
//! Agents here derive utility not only from consumption and money but from
//! *changes in beliefs* about them, with losses looming larger than gains.
//! Whether a mechanism's participation, play, and realization stages happen
//! with or without delays then matters: each delay inserts another bout of
//! news. The crate distinguishes three timelines,
//!
//! * **A** — no delays: one surprise against pre-mechanism expectations,
//! * **B** — outcome realized with delay: surprise plus an expected
//!   realization penalty,
//! * **C** — delays between participation, play, and realization: different
//!   selves decide participation and play (timeline **D**, with an extra
//!   announcement delay, is behaviorally identical and only the oracle
//!   models it separately),
//!
//! and provides, per timeline:
//!
//! * [`screening`] — a monopolist screening a buyer on her loss-aversion
//!   level: virtual types, pointwise solvers, and the constrained program
//!   for the delayed timeline,
//! * [`bayes`] — interim quantities, perceived valuations/transfers, and
//!   monotonicity-based incentive checks for multi-agent mechanisms,
//! * [`auction`] — optimal symmetric unit auctions and revenue comparisons,
//! * [`public_goods`] — incentive compatibility of ex-post efficient
//!   public-good provision,
//! * [`oracle`] — an independent brute-force implementation of the agent's
//!   decision procedure, used to audit every solver's claims.
//!
//! The numerical backbone is [`dist::DiscreteDistribution`]: every random
//! object, from type distributions to mechanism-induced lotteries, is a
//! finite distribution, and all news-utility integrals are evaluated exactly
//! on merged CDF breakpoints.

pub mod auction;
pub mod bayes;
pub mod dist;
pub mod error;
pub mod grid;
pub mod newsutil;
pub mod oracle;
pub mod public_goods;
pub mod screening;
pub mod suite;

pub use dist::DiscreteDistribution;
pub use error::{Error, Result};
pub use newsutil::GainLossSpec;

use serde::{Deserialize, Serialize};

/// Mechanism timeline: which stages are separated by delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Timeline {
    /// Participation, play, and realization happen without delay.
    A,
    /// Play is immediate, the outcome realizes with delay.
    B,
    /// Delays between participation, play, and realization.
    C,
    /// Like C with an extra delay after the announcement; behaviorally
    /// identical to C and distinguished only by the oracle.
    D,
}

impl Timeline {
    pub const MECHANISM: [Timeline; 3] = [Timeline::A, Timeline::B, Timeline::C];

    pub fn as_str(self) -> &'static str {
        match self {
            Timeline::A => "A",
            Timeline::B => "B",
            Timeline::C => "C",
            Timeline::D => "D",
        }
    }
}

impl std::fmt::Display for Timeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Timeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Timeline::A),
            "B" | "b" => Ok(Timeline::B),
            "C" | "c" => Ok(Timeline::C),
            "D" | "d" => Ok(Timeline::D),
            other => Err(Error::Domain(format!("unknown timeline {other:?}"))),
        }
    }
}
