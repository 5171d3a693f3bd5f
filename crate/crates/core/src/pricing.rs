//! Price and benchmark oracles: the revenue-optimal uniform price, the
//! heterogeneous-price optimum, the market clearing price, the
//! liquid-welfare optimum and the market-size parameter epsilon.
//!
//! All oracles are exact. The uniform-price search enumerates the finite
//! candidate set where the piecewise revenue curve can attain its maximum
//! instead of scanning a grid, and ties break toward the lowest maximizing
//! price.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use num_traits::Zero;

use crate::model::{AgentId, AgentRef};
use crate::rational::Rat;

/// A per-item price, or an explicit refusal to sell (empty or worthless
/// markets). Prices are always strictly positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PriceQuote {
    Price(Rat),
    NoSale,
}

impl PriceQuote {
    pub fn price(&self) -> Option<&Rat> {
        match self {
            PriceQuote::Price(p) => Some(p),
            PriceQuote::NoSale => None,
        }
    }

    pub fn is_sale(&self) -> bool {
        matches!(self, PriceQuote::Price(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PricingError {
    #[error("epsilon is undefined: the optimal uniform revenue is zero")]
    ZeroOptimum,
}

/// Benchmark bundle for a market `(S, k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Benchmarks {
    /// Best revenue at a single uniform price.
    pub opt_uniform: Rat,
    /// Best revenue with per-agent prices (budget-capped fractional
    /// knapsack on the divisible relaxation).
    pub opt_hetero: Rat,
    /// Largest single budget in the market.
    pub b_max: Rat,
    /// `b_max / opt_uniform`; `None` when the uniform optimum is zero.
    pub epsilon: Option<Rat>,
}

/// Revenue of selling at most `k` items to `agents` at uniform price `p`,
/// assuming `p > 0`: `min(B/p, k) * p = min(B, k*p)` where `B` sums the
/// budgets of agents with value at least `p`.
fn uniform_revenue_at(eligible_budget: &Rat, supply: &Rat, price: &Rat) -> Rat {
    eligible_budget.clone().min(supply * price)
}

/// The revenue-maximizing uniform price and its revenue.
///
/// Candidates: every distinct agent value, plus per value-interval the
/// breakpoint where eligible demand exactly meets supply. Returns
/// `(NoSale, 0)` when no positive price sells anything (empty set, zero
/// supply, or all eligible budgets zero).
pub fn uniform_opt_price(agents: &[AgentRef], supply: &Rat) -> (PriceQuote, Rat) {
    if agents.is_empty() || supply <= &Rat::zero() {
        return (PriceQuote::NoSale, Rat::zero());
    }

    // Distinct values, descending, with the budget sum of agents at or
    // above each value.
    let mut by_value: Vec<(&Rat, &Rat)> = agents.iter().map(|a| (a.value, a.budget)).collect();
    by_value.sort_by(|x, y| y.0.cmp(x.0));
    let mut levels: Vec<(Rat, Rat)> = Vec::new(); // (value, cumulative budget)
    let mut cum = Rat::zero();
    for (v, b) in by_value {
        cum += b;
        match levels.last_mut() {
            Some((lv, lb)) if &*lv == v => *lb = cum.clone(),
            _ => levels.push((v.clone(), cum.clone())),
        }
    }

    let mut best: Option<(Rat, Rat)> = None; // (revenue, price)
    let mut consider = |price: Rat, revenue: Rat| {
        if revenue.is_zero() {
            return;
        }
        match &mut best {
            None => best = Some((revenue, price)),
            Some((brev, bprice)) => {
                if revenue > *brev || (revenue == *brev && price < *bprice) {
                    *brev = revenue;
                    *bprice = price;
                }
            }
        }
    };

    for (s, (value, budget)) in levels.iter().enumerate() {
        if value > &Rat::zero() {
            consider(value.clone(), uniform_revenue_at(budget, supply, value));
        }
        // Interior breakpoint B/k of the interval (next_value, value): the
        // lowest price where revenue on this interval plateaus at B.
        let lower = levels.get(s + 1).map(|(v, _)| v.clone()).unwrap_or_else(Rat::zero);
        let crossing = budget / supply;
        if crossing > lower && crossing < *value && crossing > Rat::zero() {
            consider(crossing.clone(), uniform_revenue_at(budget, supply, &crossing));
        }
    }

    match best {
        Some((revenue, price)) => (PriceQuote::Price(price), revenue),
        None => (PriceQuote::NoSale, Rat::zero()),
    }
}

/// Optimal revenue with heterogeneous prices: allocate the divisible supply
/// greedily by decreasing value, each agent absorbing up to `budget/value`
/// items, and collect `min(v_i * x_i, b_i)` from each.
pub fn opt_hetero(agents: &[AgentRef], supply: &Rat) -> Rat {
    let mut sorted: Vec<&AgentRef> =
        agents.iter().filter(|a| a.value > &Rat::zero()).collect();
    sorted.sort_by(|x, y| y.value.cmp(x.value));
    let mut remaining = supply.clone();
    let mut total = Rat::zero();
    for a in sorted {
        if remaining <= Rat::zero() {
            break;
        }
        let cap = a.budget / a.value;
        let take = cap.min(remaining.clone());
        remaining -= &take;
        total += (a.value * &take).min(a.budget.clone());
    }
    total
}

/// The market clearing price for one divisible unit: with values sorted
/// descending and `k` the largest index whose budget prefix sum stays at or
/// below the k-th value, the price is `max(prefix_k, value_{k+1})` (missing
/// terms read as zero). Empty or worthless markets yield `NoSale`.
pub fn clearing_price(agents: &[AgentRef]) -> PriceQuote {
    if agents.is_empty() {
        return PriceQuote::NoSale;
    }
    let mut sorted: Vec<&AgentRef> = agents.iter().collect();
    sorted.sort_by(|x, y| y.value.cmp(x.value));

    let mut prefix = Rat::zero();
    let mut best_prefix = Rat::zero(); // budget sum at the chosen k
    let mut k = 0usize;
    for (i, a) in sorted.iter().enumerate() {
        prefix += a.budget;
        if prefix <= *a.value {
            k = i + 1;
            best_prefix = prefix.clone();
        }
    }
    let next_value =
        if k < sorted.len() { sorted[k].value.clone() } else { Rat::zero() };
    let price = best_prefix.max(next_value);
    if price.is_zero() {
        PriceQuote::NoSale
    } else {
        PriceQuote::Price(price)
    }
}

/// Optimal liquid welfare from one divisible unit: greedy by decreasing
/// value, each agent taking `min(budget/value, remaining)`.
pub fn liquid_opt(agents: &[AgentRef]) -> Rat {
    opt_hetero(agents, &crate::rational::int(1))
}

/// Market-size parameter: largest budget over the optimal uniform revenue.
pub fn epsilon(agents: &[AgentRef], supply: &Rat) -> Result<Rat, PricingError> {
    let (_, opt) = uniform_opt_price(agents, supply);
    if opt.is_zero() {
        return Err(PricingError::ZeroOptimum);
    }
    let b_max =
        agents.iter().map(|a| a.budget).max().cloned().unwrap_or_else(Rat::zero);
    Ok(b_max / opt)
}

/// All benchmarks of a market in one pass.
pub fn compute_benchmarks(agents: &[AgentRef], supply: &Rat) -> Benchmarks {
    let (_, opt_uniform) = uniform_opt_price(agents, supply);
    let hetero = opt_hetero(agents, supply);
    let b_max =
        agents.iter().map(|a| a.budget).max().cloned().unwrap_or_else(Rat::zero);
    let epsilon =
        if opt_uniform.is_zero() { None } else { Some(&b_max / &opt_uniform) };
    Benchmarks { opt_uniform, opt_hetero: hetero, b_max, epsilon }
}

/// A pricing function over agent sets, as consumed by the random-sampling
/// mechanism prototype. Implementations may keep internal memo state.
pub trait PricingRule {
    fn quote(&mut self, agents: &[AgentRef]) -> PriceQuote;
}

/// Revenue pricing: the optimal uniform price for selling a fixed
/// per-side supply to the given set.
#[derive(Debug, Clone)]
pub struct RevenuePricing {
    pub per_side_supply: Rat,
}

impl PricingRule for RevenuePricing {
    fn quote(&mut self, agents: &[AgentRef]) -> PriceQuote {
        uniform_opt_price(agents, &self.per_side_supply).0
    }
}

/// Market-clearing pricing for the single divisible unit.
#[derive(Debug, Clone, Default)]
pub struct ClearingPricing;

impl PricingRule for ClearingPricing {
    fn quote(&mut self, agents: &[AgentRef]) -> PriceQuote {
        clearing_price(agents)
    }
}

/// Memoizes quotes by agent-id subset. Only valid while every agent id maps
/// to a fixed (value, budget) report, i.e. for repeated trials on one fixed
/// report set; create a fresh cache when reports change. Sets with ids
/// beyond 127 bypass the cache.
pub struct CachedPricing<R> {
    inner: R,
    memo: BTreeMap<u128, PriceQuote>,
}

impl<R: PricingRule> CachedPricing<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, memo: BTreeMap::new() }
    }

    fn key(agents: &[AgentRef]) -> Option<u128> {
        let mut mask = 0u128;
        for a in agents {
            if a.id >= 128 {
                return None;
            }
            mask |= 1u128 << a.id;
        }
        Some(mask)
    }
}

impl<R: PricingRule> PricingRule for CachedPricing<R> {
    fn quote(&mut self, agents: &[AgentRef]) -> PriceQuote {
        match Self::key(agents) {
            None => self.inner.quote(agents),
            Some(mask) => match self.memo.get(&mask) {
                Some(q) => q.clone(),
                None => {
                    let q = self.inner.quote(agents);
                    self.memo.insert(mask, q.clone());
                    q
                }
            },
        }
    }
}

/// Convenience for tests and oracles: build refs over parallel id/value/
/// budget triples.
pub fn refs<'a>(entries: &'a [(AgentId, Rat, Rat)]) -> Vec<AgentRef<'a>> {
    entries.iter().map(|(id, v, b)| AgentRef { id: *id, value: v, budget: b }).collect()
}
