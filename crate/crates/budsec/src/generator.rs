//! Seeded instance generators.
//!
//! Frames use strictly increasing arrivals on a fixed spacing; values and
//! budgets are drawn uniformly from a grid of rationals with denominator
//! 10^6 inside the configured bounds, so generated instances stay exact
//! and file-friendly. The written permutation is the identity: drawn pairs
//! are already exchangeable, and experiments that need a random matching
//! resample it per trial.

use budsec_core::model::MarketInstance;
use budsec_core::rational::{int, rat, Rat};
use budsec_core::rng::seed_rng;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;

const GRID: i64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("n must be at least 1")]
    EmptyMarket,
    #[error("invalid bounds: {0}")]
    BadBounds(&'static str),
}

/// Which family to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Family {
    /// Values and budgets uniform on their ranges.
    #[default]
    Uniform,
    /// n identical agents with value 1 and budget 1/n (the market-size
    /// parameter of this family is exactly 1/n).
    Identical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenParams {
    pub n: usize,
    pub family: Family,
    pub value_lo: Rat,
    pub value_hi: Rat,
    pub budget_lo: Rat,
    pub budget_hi: Rat,
    /// Gap between consecutive arrivals.
    pub spacing: Rat,
    /// Frame length; `None` keeps every agent present until after the last
    /// arrival.
    pub frame_len: Option<Rat>,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n: 10,
            family: Family::Uniform,
            value_lo: int(1),
            value_hi: int(2),
            budget_lo: rat(1, 100),
            budget_hi: rat(2, 100),
            spacing: int(1),
            frame_len: None,
        }
    }
}

impl GenParams {
    fn validate(&self) -> Result<(), GenError> {
        if self.n == 0 {
            return Err(GenError::EmptyMarket);
        }
        if self.spacing <= Rat::zero() {
            return Err(GenError::BadBounds("spacing must be positive"));
        }
        if let Some(len) = &self.frame_len {
            if len.is_negative() {
                return Err(GenError::BadBounds("frame length must be nonnegative"));
            }
        }
        for (lo, hi, what) in [
            (&self.value_lo, &self.value_hi, "value bounds inverted or negative"),
            (&self.budget_lo, &self.budget_hi, "budget bounds inverted or negative"),
        ] {
            if lo.is_negative() || hi < lo {
                return Err(GenError::BadBounds(what));
            }
        }
        Ok(())
    }
}

/// Uniform draw from the denominator-10^6 grid points inside `[lo, hi]`.
fn draw_grid(rng: &mut budsec_core::TrialRng, lo: &Rat, hi: &Rat) -> Rat {
    let lo_ticks = (lo * int(GRID)).ceil();
    let hi_ticks = (hi * int(GRID)).floor();
    let lo_i = lo_ticks.to_integer().to_i64().expect("bounds fit the grid");
    let hi_i = hi_ticks.to_integer().to_i64().expect("bounds fit the grid");
    debug_assert!(lo_i <= hi_i, "no grid point inside the bounds");
    rat(rng.gen_range(lo_i..=hi_i), GRID)
}

/// A deterministic instance for `(params, seed)`.
pub fn generate(params: &GenParams, seed: u64) -> Result<MarketInstance, GenError> {
    params.validate()?;
    let mut rng = seed_rng(seed);
    let n = params.n;

    let last_arrival = &params.spacing * int(n as i64);
    let mut frames = Vec::with_capacity(n);
    for i in 1..=n {
        let arrival = &params.spacing * int(i as i64);
        let departure = match &params.frame_len {
            Some(len) => &arrival + len,
            None => &last_arrival + &params.spacing,
        };
        frames.push((arrival, departure));
    }

    let pairs = match params.family {
        Family::Identical => (0..n).map(|_| (int(1), rat(1, n as i64))).collect(),
        Family::Uniform => (0..n)
            .map(|_| {
                let v = draw_grid(&mut rng, &params.value_lo, &params.value_hi);
                let b = draw_grid(&mut rng, &params.budget_lo, &params.budget_hi);
                (v, b)
            })
            .collect(),
    };

    Ok(MarketInstance { frames, pairs, permutation: (0..n).collect() })
}
