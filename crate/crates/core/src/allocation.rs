//! Greedy posted-price allocation of divisible and indivisible items.
//!
//! Both procedures walk the agents in a uniformly random order and serve
//! every agent whose value weakly exceeds the price as much as her budget
//! affords, capped by the remaining supply. The divisible procedure charges
//! exactly what it delivers. The indivisible one charges the fractional
//! demand and resolves the delivered quantity by an uncorrelated rounding
//! lottery, so the charged quantity can exceed the delivered one.
//!
//! [`expected_alloc`] computes exact expectations over the procedure's
//! internal randomness by enumerating every processing order and every
//! lottery branch; it is the reference oracle for the allocation
//! properties (allocation monotonicity under agent removal, the factor-2
//! rounding-loss bound, and per-agent lottery fairness).

use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};

use crate::model::{AgentRef, AllocationPair};
use crate::pricing::PriceQuote;
use crate::rational::Rat;
use crate::rng::TrialRng;

/// Which allocation procedure a mechanism runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocRule {
    Divisible,
    Indivisible,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AllocError {
    #[error("price 0 with an eligible nonzero-budget agent: demand is unbounded")]
    ZeroPrice,
    #[error("negative price")]
    NegativePrice,
    #[error("negative supply")]
    NegativeSupply,
    #[error("indivisible supply must be a nonnegative integer")]
    FractionalSupply,
    #[error("exact expectation supports at most {max} agents, got {n}")]
    TooManyAgents { n: usize, max: usize },
}

/// Randomness source for one allocation pass.
///
/// `Transcript` mode orders agents by pre-drawn per-agent keys and resolves
/// rounding lotteries from pre-drawn per-agent draws; it is what the online
/// mechanisms use so that an agent inserted into a set "as if" she had been
/// there lands in the same relative position in every pass.
pub enum AllocRandomness<'a> {
    Rng(&'a mut TrialRng),
    Transcript { order_keys: &'a [u64], lottery: &'a [u64] },
}

const ENUMERATION_MAX: usize = 8;

fn validate(
    agents: &[AgentRef],
    price: &PriceQuote,
    supply: &Rat,
) -> Result<Option<Rat>, AllocError> {
    if supply.is_negative() {
        return Err(AllocError::NegativeSupply);
    }
    let p = match price {
        PriceQuote::NoSale => return Ok(None),
        PriceQuote::Price(p) => p,
    };
    if p.is_negative() {
        return Err(AllocError::NegativePrice);
    }
    if p.is_zero() {
        let unbounded =
            agents.iter().any(|a| a.value >= p && a.budget > &Rat::zero());
        if unbounded {
            return Err(AllocError::ZeroPrice);
        }
        // Price zero with only zero-budget eligible agents sells nothing.
        return Ok(None);
    }
    Ok(Some(p.clone()))
}

fn order_of(agents: &[AgentRef], randomness: &mut AllocRandomness) -> Vec<usize> {
    let mut order: Vec<usize> = (0..agents.len()).collect();
    match randomness {
        AllocRandomness::Rng(rng) => {
            use rand::Rng;
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
        }
        AllocRandomness::Transcript { order_keys, .. } => {
            order.sort_by_key(|&pos| {
                let id = agents[pos].id;
                (order_keys[id], id)
            });
        }
    }
    order
}

/// Divisible allocation at a posted price: every eligible agent receives
/// `min(budget/price, remaining)`; delivered and charged coincide.
pub fn div_alloc(
    agents: &[AgentRef],
    price: &PriceQuote,
    supply: &Rat,
    mut randomness: AllocRandomness,
) -> Result<AllocationPair, AllocError> {
    let order = order_of(agents, &mut randomness);
    div_alloc_ordered(agents, &order, price, supply)
}

/// Divisible allocation with a caller-fixed processing order (the oracle
/// path and the "as if in the sampling set" computations use this).
pub fn div_alloc_ordered(
    agents: &[AgentRef],
    order: &[usize],
    price: &PriceQuote,
    supply: &Rat,
) -> Result<AllocationPair, AllocError> {
    let mut pair = AllocationPair::zeros(agents.len());
    let p = match validate(agents, price, supply)? {
        None => return Ok(pair),
        Some(p) => p,
    };
    let mut remaining = supply.clone();
    for &pos in order {
        let a = &agents[pos];
        if a.value >= &p {
            let x = (a.budget / &p).min(remaining.clone());
            remaining -= &x;
            pair.charged[pos] = x.clone();
            pair.delivered[pos] = x;
        }
    }
    Ok(pair)
}

/// Indivisible allocation at a posted price. An eligible agent takes the
/// whole remaining supply when she can afford it; otherwise she is charged
/// her fractional demand `budget/price` and the delivered quantity rounds
/// up with probability equal to the fractional part.
pub fn indiv_alloc(
    agents: &[AgentRef],
    price: &PriceQuote,
    supply: &Rat,
    mut randomness: AllocRandomness,
) -> Result<AllocationPair, AllocError> {
    let order = order_of(agents, &mut randomness);
    let mut pair = AllocationPair::zeros(agents.len());
    if !supply.is_integer() {
        return Err(AllocError::FractionalSupply);
    }
    let p = match validate(agents, price, supply)? {
        None => return Ok(pair),
        Some(p) => p,
    };
    let mut remaining = supply.clone();
    for &pos in &order {
        let a = &agents[pos];
        if a.value < &p {
            continue;
        }
        let demand = a.budget / &p;
        let (delivered, charged) = if remaining <= demand {
            (remaining.clone(), remaining.clone())
        } else {
            let floor = demand.floor();
            let frac = &demand - &floor;
            let up = if frac.is_zero() {
                false
            } else {
                let u = match &mut randomness {
                    AllocRandomness::Rng(rng) => {
                        use rand::Rng;
                        rng.gen::<u64>()
                    }
                    AllocRandomness::Transcript { lottery, .. } => lottery[a.id],
                };
                crate::rational::unit_fraction(u) < frac
            };
            let x = if up { floor + Rat::one() } else { floor };
            debug_assert!(x <= remaining, "lottery rounded past the remaining supply");
            (x, demand)
        };
        remaining -= &delivered;
        pair.delivered[pos] = delivered;
        pair.charged[pos] = charged;
    }
    debug_assert!(pair.delivered.iter().all(|x| x.is_integer()));
    Ok(pair)
}

/// One allocation pass under either rule.
pub fn alloc(
    rule: AllocRule,
    agents: &[AgentRef],
    price: &PriceQuote,
    supply: &Rat,
    randomness: AllocRandomness,
) -> Result<AllocationPair, AllocError> {
    match rule {
        AllocRule::Divisible => div_alloc(agents, price, supply, randomness),
        AllocRule::Indivisible => indiv_alloc(agents, price, supply, randomness),
    }
}

/// Exact expected delivered and charged vectors under the procedure's
/// internal randomness: all `|S|!` processing orders, and for indivisible
/// items all rounding-lottery branches, each weighted by its exact
/// probability. Limited to small sets.
pub fn expected_alloc(
    rule: AllocRule,
    agents: &[AgentRef],
    price: &PriceQuote,
    supply: &Rat,
) -> Result<AllocationPair, AllocError> {
    let n = agents.len();
    if n > ENUMERATION_MAX {
        return Err(AllocError::TooManyAgents { n, max: ENUMERATION_MAX });
    }
    // Validate eagerly so error cases do not depend on the order walk.
    if rule == AllocRule::Indivisible && !supply.is_integer() {
        return Err(AllocError::FractionalSupply);
    }
    validate(agents, price, supply)?;

    let mut acc = AllocationPair::zeros(n);
    let mut orders = 0u64;
    let mut order: Vec<usize> = (0..n).collect();
    for_each_permutation(&mut order, n, &mut |order| {
        orders += 1;
        match rule {
            AllocRule::Divisible => {
                let pair = div_alloc_ordered(agents, order, price, supply)
                    .expect("validated above");
                for i in 0..n {
                    acc.delivered[i] += &pair.delivered[i];
                    acc.charged[i] += &pair.charged[i];
                }
            }
            AllocRule::Indivisible => {
                indiv_branches(agents, order, price, supply, &mut acc);
            }
        }
    });
    let weight = Rat::new((orders as i64).into(), 1.into());
    for i in 0..n {
        acc.delivered[i] /= &weight;
        acc.charged[i] /= &weight;
    }
    Ok(acc)
}

/// Adds, for one fixed order, the probability-weighted outcome of every
/// lottery branch of the indivisible procedure into `acc`.
fn indiv_branches(
    agents: &[AgentRef],
    order: &[usize],
    price: &PriceQuote,
    supply: &Rat,
    acc: &mut AllocationPair,
) {
    let p = match price {
        PriceQuote::NoSale => return, // zero contribution
        PriceQuote::Price(p) if p.is_zero() => return,
        PriceQuote::Price(p) => p.clone(),
    };

    struct Walk<'w> {
        agents: &'w [AgentRef<'w>],
        order: &'w [usize],
        price: Rat,
        acc: &'w mut AllocationPair,
    }

    fn go(
        w: &mut Walk,
        step: usize,
        remaining: Rat,
        prob: Rat,
        delivered: &mut Vec<Rat>,
        charged: &mut Vec<Rat>,
    ) {
        if step == w.order.len() {
            for i in 0..delivered.len() {
                w.acc.delivered[i] += &prob * &delivered[i];
                w.acc.charged[i] += &prob * &charged[i];
            }
            return;
        }
        let pos = w.order[step];
        let a = &w.agents[pos];
        if a.value < &w.price {
            go(w, step + 1, remaining, prob, delivered, charged);
            return;
        }
        let demand = a.budget / &w.price;
        if remaining <= demand {
            delivered[pos] = remaining.clone();
            charged[pos] = remaining.clone();
            go(w, step + 1, Rat::zero(), prob, delivered, charged);
        } else {
            let floor = demand.floor();
            let frac = &demand - &floor;
            charged[pos] = demand;
            if frac.is_zero() {
                delivered[pos] = floor.clone();
                let rem = &remaining - &floor;
                go(w, step + 1, rem, prob, delivered, charged);
            } else {
                let up = &floor + Rat::one();
                delivered[pos] = up.clone();
                go(w, step + 1, &remaining - &up, &prob * &frac, delivered, charged);
                delivered[pos] = floor.clone();
                let down_prob = &prob * (Rat::one() - &frac);
                go(w, step + 1, &remaining - &floor, down_prob, delivered, charged);
            }
        }
        delivered[pos] = Rat::zero();
        charged[pos] = Rat::zero();
    }

    let n = agents.len();
    let mut w = Walk { agents, order, price: p, acc };
    go(&mut w, 0, supply.clone(), Rat::one(), &mut vec![Rat::zero(); n], &mut vec![Rat::zero(); n]);
}

/// Heap's algorithm; calls `f` with each permutation of `arr`.
fn for_each_permutation(arr: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        f(arr);
        return;
    }
    for i in 0..k {
        for_each_permutation(arr, k - 1, f);
        if k % 2 == 0 {
            arr.swap(i, k - 1);
        } else {
            arr.swap(0, k - 1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AgentId;
    use crate::pricing::refs;
    use crate::rational::{int, rat};
    use crate::rng::{seed_rng, trial_rng};

    fn market(pairs: &[(i64, i64)]) -> Vec<(AgentId, Rat, Rat)> {
        pairs.iter().enumerate().map(|(i, (v, b))| (i, int(*v), int(*b))).collect()
    }

    #[test]
    fn div_alloc_hand_traces() {
        // In the fixed order [0, 1]: agent 0 takes 6/5, agent 1 is priced out.
        let m = market(&[(10, 6), (4, 8)]);
        let pair =
            div_alloc_ordered(&refs(&m), &[0, 1], &PriceQuote::Price(int(5)), &int(2)).unwrap();
        assert_eq!(pair.delivered, vec![rat(6, 5), int(0)]);
        assert_eq!(pair.charged, pair.delivered);

        // Price above every value: nothing sold.
        let pair =
            div_alloc_ordered(&refs(&m), &[0, 1], &PriceQuote::Price(int(99)), &int(2)).unwrap();
        assert_eq!(pair.total_delivered(), int(0));

        // Deep pockets are capped by the supply.
        let m = market(&[(10, 100)]);
        let pair =
            div_alloc_ordered(&refs(&m), &[0], &PriceQuote::Price(int(5)), &int(2)).unwrap();
        assert_eq!(pair.delivered, vec![int(2)]);
    }

    #[test]
    fn no_sale_and_zero_price() {
        let m = market(&[(10, 6)]);
        let pair = div_alloc(
            &refs(&m),
            &PriceQuote::NoSale,
            &int(2),
            AllocRandomness::Rng(&mut seed_rng(0)),
        )
        .unwrap();
        assert_eq!(pair.total_delivered(), int(0));

        let err = div_alloc(
            &refs(&m),
            &PriceQuote::Price(int(0)),
            &int(2),
            AllocRandomness::Rng(&mut seed_rng(0)),
        )
        .unwrap_err();
        assert_eq!(err, AllocError::ZeroPrice);

        // Zero price with only zero-budget eligible agents degenerates to
        // an empty sale instead of an error.
        let broke = market(&[(10, 0)]);
        let pair = div_alloc(
            &refs(&broke),
            &PriceQuote::Price(int(0)),
            &int(2),
            AllocRandomness::Rng(&mut seed_rng(0)),
        )
        .unwrap();
        assert_eq!(pair.total_delivered(), int(0));
    }

    #[test]
    fn indiv_alloc_branches() {
        // Whole remaining supply when affordable: k' = 1 <= b/p = 2.
        let m = market(&[(10, 10)]);
        let pair = indiv_alloc(
            &refs(&m),
            &PriceQuote::Price(int(5)),
            &int(1),
            AllocRandomness::Rng(&mut seed_rng(0)),
        )
        .unwrap();
        assert_eq!(pair.delivered, vec![int(1)]);
        assert_eq!(pair.charged, vec![int(1)]);

        // Integral demand makes the lottery degenerate: x = xt = 2.
        let pair = indiv_alloc(
            &refs(&m),
            &PriceQuote::Price(int(5)),
            &int(3),
            AllocRandomness::Rng(&mut seed_rng(0)),
        )
        .unwrap();
        assert_eq!(pair.delivered, vec![int(2)]);
        assert_eq!(pair.charged, vec![int(2)]);

        // Fractional supply is rejected.
        assert_eq!(
            indiv_alloc(
                &refs(&m),
                &PriceQuote::Price(int(5)),
                &rat(3, 2),
                AllocRandomness::Rng(&mut seed_rng(0)),
            )
            .unwrap_err(),
            AllocError::FractionalSupply
        );
    }

    #[test]
    fn indiv_lottery_frequencies() {
        // (v=10, b=7) at p=5, k=3: charged 7/5; delivered 2 w.p. 2/5, else 1.
        let m = market(&[(10, 7)]);
        let mut ups = 0u32;
        let trials = 100_000u32;
        for s in 0..trials {
            let mut rng = trial_rng(5, s as u64);
            let pair = indiv_alloc(
                &refs(&m),
                &PriceQuote::Price(int(5)),
                &int(3),
                AllocRandomness::Rng(&mut rng),
            )
            .unwrap();
            assert_eq!(pair.charged, vec![rat(7, 5)]);
            match &pair.delivered[0] {
                x if x == &int(2) => ups += 1,
                x => assert_eq!(x, &int(1)),
            }
        }
        let freq = f64::from(ups) / f64::from(trials);
        assert!((freq - 0.4).abs() < 0.01, "up-rounding frequency {freq}");
    }

    #[test]
    fn expected_alloc_examples() {
        // Single agent: expectation equals the single-order expectation.
        let m = market(&[(10, 7)]);
        let e = expected_alloc(
            AllocRule::Indivisible,
            &refs(&m),
            &PriceQuote::Price(int(5)),
            &int(3),
        )
        .unwrap();
        assert_eq!(e.delivered, vec![rat(7, 5)]);
        assert_eq!(e.charged, vec![rat(7, 5)]);

        // Divisible two agents, one priced out: order-independent.
        let m = market(&[(10, 6), (4, 8)]);
        let e = expected_alloc(
            AllocRule::Divisible,
            &refs(&m),
            &PriceQuote::Price(int(5)),
            &int(2),
        )
        .unwrap();
        assert_eq!(e.delivered, vec![rat(6, 5), int(0)]);

        let too_big = market(&[(1, 1); 9]);
        assert!(matches!(
            expected_alloc(
                AllocRule::Divisible,
                &refs(&too_big),
                &PriceQuote::Price(int(1)),
                &int(1),
            ),
            Err(AllocError::TooManyAgents { n: 9, max: 8 })
        ));
    }

    #[test]
    fn expected_alloc_matches_sampling() {
        // Competitive indivisible market: enumeration must agree with a
        // seeded Monte Carlo run of the real procedure.
        let m = market(&[(10, 7), (8, 12), (6, 4)]);
        let price = PriceQuote::Price(int(5));
        let supply = int(3);
        let exact =
            expected_alloc(AllocRule::Indivisible, &refs(&m), &price, &supply).unwrap();
        let trials = 200_000u32;
        let mut sums = vec![Rat::zero(); 3];
        for s in 0..trials {
            let mut rng = trial_rng(11, s as u64);
            let pair =
                indiv_alloc(&refs(&m), &price, &supply, AllocRandomness::Rng(&mut rng)).unwrap();
            assert!(pair.total_delivered() <= supply);
            for i in 0..3 {
                sums[i] += &pair.delivered[i];
            }
        }
        for i in 0..3 {
            let sampled = crate::rational::to_f64(&sums[i]) / f64::from(trials);
            let expect = crate::rational::to_f64(&exact.delivered[i]);
            assert!((sampled - expect).abs() < 0.01, "agent {i}: {sampled} vs {expect}");
        }
    }

    #[test]
    fn feasibility_and_budget_hold_per_run() {
        use rand::Rng;
        let mut rng = seed_rng(23);
        for _ in 0..300 {
            let n = rng.gen_range(1..=6usize);
            let entries: Vec<(AgentId, Rat, Rat)> = (0..n)
                .map(|i| (i, rat(rng.gen_range(1..=40), 4), rat(rng.gen_range(0..=40), 4)))
                .collect();
            let agents = refs(&entries);
            let supply = int(rng.gen_range(0..=4));
            let price = rat(rng.gen_range(1..=40), 4);
            for rule in [AllocRule::Divisible, AllocRule::Indivisible] {
                let pair = alloc(
                    rule,
                    &agents,
                    &PriceQuote::Price(price.clone()),
                    &supply,
                    AllocRandomness::Rng(&mut rng),
                )
                .unwrap();
                assert!(pair.total_delivered() <= supply);
                for (i, charged) in pair.charged.iter().enumerate() {
                    assert!(charged * &price <= entries[i].2);
                }
            }
        }
    }

    #[test]
    fn transcript_ordering_is_stable_under_insertion() {
        // An agent joining a set under the same keys keeps everyone's
        // relative order.
        let m = market(&[(10, 6), (9, 4), (8, 2)]);
        let agents = refs(&m);
        let keys = vec![30u64, 10, 20];
        let lottery = vec![0u64; 3];
        let base = div_alloc(
            &agents[..2],
            &PriceQuote::Price(int(5)),
            &int(10),
            AllocRandomness::Transcript { order_keys: &keys, lottery: &lottery },
        )
        .unwrap();
        // Keys order the pair as [1, 0]; both fit under ample supply.
        assert_eq!(base.delivered, vec![rat(6, 5), rat(4, 5)]);
        let with_third = div_alloc(
            &agents,
            &PriceQuote::Price(int(5)),
            &int(10),
            AllocRandomness::Transcript { order_keys: &keys, lottery: &lottery },
        )
        .unwrap();
        // Insertion order is [1, 2, 0]; allocations unchanged under ample
        // supply.
        assert_eq!(with_third.delivered, vec![rat(6, 5), rat(4, 5), rat(2, 5)]);
    }
}
