//! Online and offline auction mechanisms.
//!
//! The centerpiece is [`rs_online`], a random-sampling online mechanism
//! parameterized by a pricing function and an allocation procedure. Agents
//! arriving before a coin-determined boundary form the sampling set `A`,
//! split at the boundary's arrival time into `A1`/`A2`; each side is priced
//! against the other and served a quarter of the supply. Later arrivals
//! form the performance set `B`: each is assigned by a fair coin to one
//! side and served *as if she had been in that side's sampling run*, at
//! that side's price, capped by the side's remaining quarter.
//!
//! Note one deliberate asymmetry of the procedure: during the sampling
//! phase `A1` is priced against all of `A2` (boundary agent included),
//! while the revenue phase prices `B1` arrivals against `A2` *without* the
//! boundary agent.
//!
//! Instantiations:
//! * [`rev_mechanism`]: revenue pricing (optimal uniform price for a
//!   quarter of the supply), divisible or indivisible allocation;
//! * [`rs_liquid`]: market-clearing pricing on a single divisible unit;
//! * [`liquid_div`]: probabilistic mix of [`mvcg`] and [`rs_liquid`];
//! * [`mvcg`]: the online modified VCG mechanism for one divisible item;
//! * offline baselines [`rev_offline`], [`sell_div`], [`sell_modif`], and
//!   the n<100 fallback [`trivial_random`].

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Zero;

use crate::allocation::{alloc, AllocError, AllocRandomness, AllocRule};
use crate::model::{
    arrival_order, AgentOutcome, AgentRef, CoinTranscript, ModelError, Outcome, Report, SetLabel,
    Time, Trace,
};
use crate::pricing::{CachedPricing, ClearingPricing, PriceQuote, PricingRule, RevenuePricing};
use crate::rational::{int, rat, unit_fraction, Rat};
use crate::rng::TrialRng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MechanismError {
    #[error("mechanism run on an empty instance")]
    EmptyInstance,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("negative supply")]
    NegativeSupply,
    #[error("indivisible supply must be an integer divisible by 4, got {0}")]
    IndivisibleSupply(alloc::string::String),
    #[error("{0}")]
    InvalidParameter(&'static str),
}

/// Which mechanism an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MechanismMode {
    RevDiv,
    RevIndiv,
    RsLiquid,
    LiquidDiv,
    Mvcg,
    RevOffline,
    TrivialRandom,
}

/// Mechanism selection plus parameters. `mu` and `gamma` only matter for
/// the liquid-welfare mechanisms, `supply` for the revenue mechanisms and
/// the offline baseline (the liquid-welfare setting normalizes supply to a
/// single divisible unit).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MechanismConfig {
    pub mode: MechanismMode,
    pub supply: Rat,
    pub mu: Rat,
    pub gamma: Rat,
    pub seed: u64,
}

impl MechanismConfig {
    pub fn new(mode: MechanismMode, supply: Rat, seed: u64) -> Self {
        Self { mode, supply, mu: rat(1, 10), gamma: rat(10001, 10000), seed }
    }

    pub fn validate(&self) -> Result<(), MechanismError> {
        if self.supply < Rat::zero() {
            return Err(MechanismError::NegativeSupply);
        }
        if self.mu < Rat::zero() || self.mu > Rat::from_integer(1.into()) {
            return Err(MechanismError::InvalidParameter("mu must lie in [0, 1]"));
        }
        if self.gamma <= Rat::from_integer(1.into()) {
            return Err(MechanismError::InvalidParameter("gamma must exceed 1"));
        }
        if self.mode == MechanismMode::RevIndiv {
            check_indivisible_supply(&self.supply)?;
        }
        Ok(())
    }

    /// A stateful runner for repeated trials on a fixed report set.
    pub fn runner(&self) -> MechanismRunner {
        MechanismRunner {
            config: self.clone(),
            rev_pricing: CachedPricing::new(RevenuePricing {
                per_side_supply: &self.supply / int(4),
            }),
            clearing_pricing: CachedPricing::new(ClearingPricing),
            fingerprint: None,
        }
    }
}

fn check_indivisible_supply(supply: &Rat) -> Result<(), MechanismError> {
    let quarter = supply / int(4);
    if supply < &Rat::zero() || !quarter.is_integer() {
        return Err(MechanismError::IndivisibleSupply(crate::rational::format_rat(supply)));
    }
    Ok(())
}

/// Runs one configured mechanism per call, memoizing subset prices across
/// trials. The memo is invalidated automatically when the reports change
/// between calls, so reuse across trials is always sound; it only pays off
/// while the report set stays fixed.
pub struct MechanismRunner {
    config: MechanismConfig,
    rev_pricing: CachedPricing<RevenuePricing>,
    clearing_pricing: CachedPricing<ClearingPricing>,
    fingerprint: Option<Vec<(Rat, Rat)>>,
}

impl MechanismRunner {
    pub fn config(&self) -> &MechanismConfig {
        &self.config
    }

    fn refresh_cache(&mut self, reports: &[Report]) {
        let matches = self.fingerprint.as_ref().is_some_and(|fp| {
            fp.len() == reports.len()
                && reports.iter().all(|r| {
                    let (v, b) = &fp[r.agent_id];
                    v == &r.declared.value && b == &r.declared.budget
                })
        });
        if !matches {
            let mut fp = vec![(Rat::zero(), Rat::zero()); reports.len()];
            for r in reports {
                fp[r.agent_id] = (r.declared.value.clone(), r.declared.budget.clone());
            }
            self.fingerprint = Some(fp);
            self.rev_pricing = CachedPricing::new(RevenuePricing {
                per_side_supply: &self.config.supply / int(4),
            });
            self.clearing_pricing = CachedPricing::new(ClearingPricing);
        }
    }

    pub fn run(&mut self, reports: &[Report], rng: &mut TrialRng) -> Result<Outcome, MechanismError> {
        self.config.validate()?;
        self.refresh_cache(reports);
        match self.config.mode {
            MechanismMode::RevDiv => {
                let ts = CoinTranscript::draw(reports.len(), rng);
                let supply = self.config.supply.clone();
                rs_online_with(reports, &supply, &mut self.rev_pricing, AllocRule::Divisible, &ts)
                    .map(|(o, _)| o)
            }
            MechanismMode::RevIndiv => {
                check_indivisible_supply(&self.config.supply)?;
                let ts = CoinTranscript::draw(reports.len(), rng);
                let supply = self.config.supply.clone();
                rs_online_with(reports, &supply, &mut self.rev_pricing, AllocRule::Indivisible, &ts)
                    .map(|(o, _)| o)
            }
            MechanismMode::RsLiquid => {
                let ts = CoinTranscript::draw(reports.len(), rng);
                rs_online_with(
                    reports,
                    &int(1),
                    &mut self.clearing_pricing,
                    AllocRule::Divisible,
                    &ts,
                )
                .map(|(o, _)| o)
            }
            MechanismMode::LiquidDiv => {
                let ts = CoinTranscript::draw(reports.len(), rng);
                let (mu, gamma) = (self.config.mu.clone(), self.config.gamma.clone());
                liquid_div_with(reports, &mu, &gamma, &mut self.clearing_pricing, &ts)
            }
            MechanismMode::Mvcg => {
                let ts = CoinTranscript::draw(reports.len(), rng);
                mvcg_with(reports, &self.config.gamma, &ts)
            }
            MechanismMode::RevOffline => rev_offline(reports, &self.config.supply, rng),
            MechanismMode::TrivialRandom => trivial_random(reports, rng),
        }
    }
}

fn refs_at<'a>(reports: &'a [Report], idx: &[usize]) -> Vec<AgentRef<'a>> {
    idx.iter().map(|&i| AgentRef::of(&reports[i])).collect()
}

fn payment_for(charged: &Rat, price: &PriceQuote) -> Rat {
    match price.price() {
        Some(p) => charged * p,
        None => Rat::zero(),
    }
}

/// The random-sampling online prototype. Draws a fresh coin transcript and
/// delegates to [`rs_online_with`].
pub fn rs_online<P: PricingRule>(
    reports: &[Report],
    supply: &Rat,
    pricing: &mut P,
    rule: AllocRule,
    rng: &mut TrialRng,
) -> Result<(Outcome, Trace), MechanismError> {
    let ts = CoinTranscript::draw(reports.len(), rng);
    rs_online_with(reports, supply, pricing, rule, &ts)
}

/// The random-sampling online prototype on a pre-drawn transcript.
pub fn rs_online_with<P: PricingRule>(
    reports: &[Report],
    supply: &Rat,
    pricing: &mut P,
    rule: AllocRule,
    ts: &CoinTranscript,
) -> Result<(Outcome, Trace), MechanismError> {
    let n = reports.len();
    if n == 0 {
        return Err(MechanismError::EmptyInstance);
    }
    debug_assert!(ts.set_coins.len() == n && ts.boundary_coins.len() == n - 1);
    if supply < &Rat::zero() {
        return Err(MechanismError::NegativeSupply);
    }
    if rule == AllocRule::Indivisible {
        check_indivisible_supply(supply)?;
    }
    let quarter = supply / int(4);
    let order = arrival_order(reports)?;

    // Partition: the boundary index is the tail count plus one; the first
    // j arrivals form the sampling set.
    let j = ts.boundary_index();
    debug_assert!((1..=n).contains(&j));
    let boundary_report = &reports[order[j - 1]];
    let boundary = boundary_report.agent_id;
    let t0 = boundary_report.declared.arrival.clone();

    let mut labels = vec![SetLabel::A2; n];
    let mut a1_idx = Vec::new();
    let mut a2_idx = Vec::new();
    for (pos, &ri) in order[..j].iter().enumerate() {
        let id = reports[ri].agent_id;
        // The boundary agent always joins A2.
        if pos + 1 < j && ts.set_coins[id] {
            labels[id] = SetLabel::A1;
            a1_idx.push(ri);
        } else {
            labels[id] = SetLabel::A2;
            a2_idx.push(ri);
        }
    }
    let a2_minus_idx: Vec<usize> =
        a2_idx.iter().copied().filter(|&ri| reports[ri].agent_id != boundary).collect();

    let a1_refs = refs_at(reports, &a1_idx);
    let a2_refs = refs_at(reports, &a2_idx);
    let a2_minus_refs = refs_at(reports, &a2_minus_idx);

    let price_a2 = pricing.quote(&a2_refs); // prices the A1 side
    let price_a1 = pricing.quote(&a1_refs); // prices the A2 and B2 sides
    let price_a2_minus = pricing.quote(&a2_minus_refs); // prices the B1 side

    let mut agents = vec![AgentOutcome::untouched(); n];

    // Sampling phase: each side is allocated a quarter of the supply at the
    // other side's price. Agents who already departed by the boundary's
    // arrival still occupy their slot in the pass but receive and pay
    // nothing.
    let a1_randomness =
        AllocRandomness::Transcript { order_keys: &ts.a1_keys, lottery: &ts.lottery };
    let pair1 = alloc(rule, &a1_refs, &price_a2, &quarter, a1_randomness)?;
    let a2_randomness =
        AllocRandomness::Transcript { order_keys: &ts.a2_keys, lottery: &ts.lottery };
    let pair2 = alloc(rule, &a2_refs, &price_a1, &quarter, a2_randomness)?;
    for (side_idx, pair, price) in
        [(&a1_idx, &pair1, &price_a2), (&a2_idx, &pair2, &price_a1)]
    {
        for (pos, &ri) in side_idx.iter().enumerate() {
            let r = &reports[ri];
            if r.declared.departure < t0 {
                continue;
            }
            let out = &mut agents[r.agent_id];
            out.delivered = pair.delivered[pos].clone();
            out.charged = pair.charged[pos].clone();
            out.payment = payment_for(&out.charged, price);
            out.delivery_time = Some(t0.clone());
            out.within_frame = r.declared.in_frame(&t0);
        }
    }

    // Revenue collection phase: each later arrival is served as if
    // inserted into one side's sampling pass, at that side's price, capped
    // by the side's remaining quarter.
    let mut m1 = quarter.clone();
    let mut m2 = quarter.clone();
    for &ri in &order[j..] {
        let r = &reports[ri];
        let id = r.agent_id;
        let (base_refs, price, keys, budget_left) = if ts.b_coins[id] {
            labels[id] = SetLabel::B1;
            (&a1_refs, &price_a2_minus, &ts.a1_keys, &mut m1)
        } else {
            labels[id] = SetLabel::B2;
            (&a2_minus_refs, &price_a1, &ts.a2_keys, &mut m2)
        };
        let mut entries = base_refs.clone();
        entries.push(AgentRef::of(r));
        let pos = entries.len() - 1;
        let randomness = AllocRandomness::Transcript { order_keys: keys, lottery: &ts.lottery };
        let pair = alloc(rule, &entries, price, &quarter, randomness)?;
        let delivered = pair.delivered[pos].clone().min(budget_left.clone());
        let charged = pair.charged[pos].clone().min(budget_left.clone());
        debug_assert!(delivered <= pair.delivered[pos] && delivered <= *budget_left);
        *budget_left -= &delivered;
        let out = &mut agents[id];
        out.delivered = delivered;
        out.charged = charged;
        out.payment = payment_for(&out.charged, price);
        out.delivery_time = Some(r.declared.arrival.clone());
        out.within_frame = true; // served on reported arrival
    }

    let outcome = Outcome::assemble(agents, reports);
    debug_assert!(outcome.total_delivered() <= *supply);
    debug_assert!(reports
        .iter()
        .all(|r| outcome.agents[r.agent_id].payment <= r.declared.budget));
    let trace = Trace { boundary, boundary_position: j, t0, labels, transcript: ts.clone() };
    Ok((outcome, trace))
}

/// Revenue mechanism: random sampling with optimal-uniform-price quotes for
/// a quarter of the supply, under the chosen allocation rule. Indivisible
/// supply must be an integer divisible by 4.
pub fn rev_mechanism(
    reports: &[Report],
    supply: &Rat,
    rule: AllocRule,
    rng: &mut TrialRng,
) -> Result<Outcome, MechanismError> {
    let mut pricing = RevenuePricing { per_side_supply: supply / int(4) };
    rs_online(reports, supply, &mut pricing, rule, rng).map(|(o, _)| o)
}

/// Liquid-welfare random sampling: one divisible unit at market-clearing
/// prices.
pub fn rs_liquid(reports: &[Report], rng: &mut TrialRng) -> Result<Outcome, MechanismError> {
    let mut pricing = ClearingPricing;
    rs_online(reports, &int(1), &mut pricing, AllocRule::Divisible, rng).map(|(o, _)| o)
}

/// Online modified VCG for one divisible item. The first half of the
/// arrivals (rounded up) forms set `A`; at the last of their arrivals the
/// top liquid-value agent may buy the whole item at `gamma` times the
/// second liquid value (heads), or the first later arrival clearing
/// `gamma` times the top liquid value buys it (tails).
pub fn mvcg(reports: &[Report], gamma: &Rat, rng: &mut TrialRng) -> Result<Outcome, MechanismError> {
    let ts = CoinTranscript::draw(reports.len(), rng);
    mvcg_with(reports, gamma, &ts)
}

pub fn mvcg_with(
    reports: &[Report],
    gamma: &Rat,
    ts: &CoinTranscript,
) -> Result<Outcome, MechanismError> {
    let n = reports.len();
    if n == 0 {
        return Err(MechanismError::EmptyInstance);
    }
    if gamma <= &Rat::from_integer(1.into()) {
        return Err(MechanismError::InvalidParameter("gamma must exceed 1"));
    }
    let order = arrival_order(reports)?;
    let half = n.div_ceil(2);
    let t_half = reports[order[half - 1]].declared.arrival.clone();

    // Sampling half, ordered by reported liquid value; ties keep arrival
    // order (stable sort), so equal-valued agents cannot influence their
    // rank by reporting.
    let mut by_liquid: Vec<usize> = order[..half].to_vec();
    by_liquid.sort_by(|&x, &y| {
        let lx = reports[x].declared.liquid_value();
        let ly = reports[y].declared.liquid_value();
        ly.cmp(&lx)
    });
    let top = &reports[by_liquid[0]];
    let top_liquid = top.declared.liquid_value();
    let second_liquid =
        by_liquid.get(1).map(|&i| reports[i].declared.liquid_value()).unwrap_or_else(Rat::zero);
    let price_for_top = gamma * &second_liquid;
    let price_for_rest = gamma * &top_liquid;

    let mut agents = vec![AgentOutcome::untouched(); n];
    if ts.mech_coin {
        // Heads: sell to the top sampling-half agent if she clears the
        // threshold and has not departed.
        if top_liquid >= price_for_top && top.declared.departure >= t_half {
            let out = &mut agents[top.agent_id];
            out.delivered = int(1);
            out.charged = int(1);
            out.payment = price_for_top;
            out.delivery_time = Some(t_half.clone());
            out.within_frame = top.declared.in_frame(&t_half);
        }
    } else {
        // Tails: first later arrival whose liquid value clears the
        // threshold buys on arrival.
        for &ri in &order[half..] {
            let r = &reports[ri];
            if r.declared.liquid_value() >= price_for_rest {
                let out = &mut agents[r.agent_id];
                out.delivered = int(1);
                out.charged = int(1);
                out.payment = price_for_rest;
                out.delivery_time = Some(r.declared.arrival.clone());
                out.within_frame = true;
                break;
            }
        }
    }
    Ok(Outcome::assemble(agents, reports))
}

/// Probabilistic combination: modified VCG with probability `mu`, liquid
/// random sampling otherwise.
pub fn liquid_div(
    reports: &[Report],
    mu: &Rat,
    gamma: &Rat,
    rng: &mut TrialRng,
) -> Result<Outcome, MechanismError> {
    let ts = CoinTranscript::draw(reports.len(), rng);
    let mut pricing = ClearingPricing;
    liquid_div_with(reports, mu, gamma, &mut pricing, &ts)
}

fn liquid_div_with<P: PricingRule>(
    reports: &[Report],
    mu: &Rat,
    gamma: &Rat,
    pricing: &mut P,
    ts: &CoinTranscript,
) -> Result<Outcome, MechanismError> {
    if mu < &Rat::zero() || mu > &Rat::from_integer(1.into()) {
        return Err(MechanismError::InvalidParameter("mu must lie in [0, 1]"));
    }
    if unit_fraction(ts.mix) < *mu {
        mvcg_with(reports, gamma, ts)
    } else {
        rs_online_with(reports, &int(1), pricing, AllocRule::Divisible, ts).map(|(o, _)| o)
    }
}

/// Offline random-sampling baseline: split into halves by fair coins, price
/// each half optimally for half the supply, and cross-sell half the supply
/// to each side at the other side's price. Fractional allocations are
/// delivered as-is (divisible reading of the final lottery step).
pub fn rev_offline(
    reports: &[Report],
    supply: &Rat,
    rng: &mut TrialRng,
) -> Result<Outcome, MechanismError> {
    use rand::Rng;
    if reports.is_empty() {
        return Err(MechanismError::EmptyInstance);
    }
    if supply < &Rat::zero() {
        return Err(MechanismError::NegativeSupply);
    }
    let half = supply / int(2);
    let mut s1_idx = Vec::new();
    let mut s2_idx = Vec::new();
    for (i, _) in reports.iter().enumerate() {
        if rng.gen::<bool>() {
            s1_idx.push(i);
        } else {
            s2_idx.push(i);
        }
    }
    let s1_refs = refs_at(reports, &s1_idx);
    let s2_refs = refs_at(reports, &s2_idx);
    let p1 = crate::pricing::uniform_opt_price(&s1_refs, &half).0;
    let p2 = crate::pricing::uniform_opt_price(&s2_refs, &half).0;

    let mut agents = vec![AgentOutcome::untouched(); reports.len()];
    for (idx, own_refs, price) in [(&s1_idx, &s1_refs, &p2), (&s2_idx, &s2_refs, &p1)] {
        let pair = crate::allocation::div_alloc(
            own_refs,
            price,
            &half,
            AllocRandomness::Rng(rng),
        )?;
        for (pos, &ri) in idx.iter().enumerate() {
            let out = &mut agents[reports[ri].agent_id];
            out.delivered = pair.delivered[pos].clone();
            out.charged = pair.charged[pos].clone();
            out.payment = payment_for(&out.charged, price);
        }
    }
    Ok(Outcome::assemble(agents, reports))
}

/// Sells at a fixed posted price via one divisible allocation pass.
pub fn sell_div(
    reports: &[Report],
    price: &PriceQuote,
    supply: &Rat,
    rng: &mut TrialRng,
) -> Result<Outcome, MechanismError> {
    let all: Vec<usize> = (0..reports.len()).collect();
    let refs = refs_at(reports, &all);
    let pair = crate::allocation::div_alloc(&refs, price, supply, AllocRandomness::Rng(rng))?;
    let mut agents = vec![AgentOutcome::untouched(); reports.len()];
    for (pos, r) in reports.iter().enumerate() {
        let out = &mut agents[r.agent_id];
        out.delivered = pair.delivered[pos].clone();
        out.charged = pair.charged[pos].clone();
        out.payment = payment_for(&out.charged, price);
    }
    Ok(Outcome::assemble(agents, reports))
}

/// Restricted posted-price sale used to relate the online mechanism to its
/// offline counterpart: each agent joins the selling side `S1` with
/// probability `z`; selling-side agents are served in arrival order, each
/// receiving (up to the remaining supply) the allocation of a fresh
/// divisible pass over the non-selling side plus herself.
pub fn sell_modif(
    reports: &[Report],
    price: &PriceQuote,
    supply: &Rat,
    z: &Rat,
    rng: &mut TrialRng,
) -> Result<Outcome, MechanismError> {
    use rand::Rng;
    if z < &Rat::zero() || z > &Rat::from_integer(1.into()) {
        return Err(MechanismError::InvalidParameter("z must lie in [0, 1]"));
    }
    let order = arrival_order(reports)?;
    let mut in_s1 = vec![false; reports.len()];
    for flag in in_s1.iter_mut() {
        *flag = unit_fraction(rng.gen::<u64>()) < *z;
    }
    let s2_refs: Vec<AgentRef> = reports
        .iter()
        .enumerate()
        .filter(|(i, _)| !in_s1[*i])
        .map(|(_, r)| AgentRef::of(r))
        .collect();

    let mut agents = vec![AgentOutcome::untouched(); reports.len()];
    let mut remaining = supply.clone();
    for &ri in &order {
        if !in_s1[ri] {
            continue;
        }
        let r = &reports[ri];
        let mut entries = s2_refs.clone();
        entries.push(AgentRef::of(r));
        let pos = entries.len() - 1;
        let pair =
            crate::allocation::div_alloc(&entries, price, supply, AllocRandomness::Rng(rng))?;
        let delivered = pair.delivered[pos].clone().min(remaining.clone());
        remaining -= &delivered;
        let out = &mut agents[r.agent_id];
        out.payment = payment_for(&delivered, price);
        out.delivered = delivered.clone();
        out.charged = delivered;
    }
    Ok(Outcome::assemble(agents, reports))
}

/// Gives the whole item to a uniformly chosen agent for free. The trivial
/// liquid-welfare fallback for small markets.
pub fn trivial_random(reports: &[Report], rng: &mut TrialRng) -> Result<Outcome, MechanismError> {
    use rand::Rng;
    if reports.is_empty() {
        return Err(MechanismError::EmptyInstance);
    }
    let winner = &reports[rng.gen_range(0..reports.len())];
    let mut agents = vec![AgentOutcome::untouched(); reports.len()];
    let out = &mut agents[winner.agent_id];
    out.delivered = int(1);
    out.charged = int(1);
    out.delivery_time = Some(winner.declared.arrival.clone());
    out.within_frame = true;
    Ok(Outcome::assemble(agents, reports))
}

/// The reported arrival timestamp of an agent, for event rendering.
pub fn reported_arrival(reports: &[Report], agent: usize) -> Option<Time> {
    reports.iter().find(|r| r.agent_id == agent).map(|r| r.declared.arrival.clone())
}
