//! Truthfulness, individual-rationality and feasibility auditing.
//!
//! [`audit_truthfulness`] estimates an agent's expected utility under her
//! truthful report and under every deviation in a [`DeviationGrid`], using
//! common random numbers: trial `t` replays the same coin transcript for
//! every deviation, so the comparison of means is sharp. A mechanism fails
//! the audit when some deviation's estimated gain exceeds three combined
//! confidence half-widths; agents are risk neutral, so only means are
//! compared, never per-run utilities.
//!
//! [`check_run`] validates a single outcome against the hard per-run
//! guarantees: never oversell, never charge above the reported budget,
//! never deliver outside a truthful agent's frame.

use alloc::vec::Vec;

use num_traits::Zero;

use crate::mechanisms::MechanismError;
use crate::model::{
    truthful_reports, utility, AgentId, AgentOutcome, AgentType, Outcome, Report, Time,
};
use crate::rational::{half_width_99, int, rat, to_f64, ExtValue, MomentSums, Rat};
use crate::rng::{trial_rng, TrialRng};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuditError {
    #[error("agent {0} is not part of the instance")]
    NoSuchAgent(AgentId),
    #[error("at least one trial is required")]
    ZeroTrials,
}

/// Candidate misreports for one agent, explored one dimension at a time.
/// The truthful report is always evaluated as the baseline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviationGrid {
    /// Candidate reported arrival times.
    pub arrival_shifts: Vec<Time>,
    /// Candidate reported departure times.
    pub departure_options: Vec<Time>,
    /// Positive factors applied to the true value.
    pub value_multipliers: Vec<Rat>,
    /// Positive factors applied to the true budget.
    pub budget_multipliers: Vec<Rat>,
}

impl DeviationGrid {
    /// The default grid: arrival moved into every other inter-arrival gap
    /// (and before/after everyone), departure one slot earlier and later,
    /// and value/budget scaled by {1/4, 1/2, 2, 4}. In tie-break mode,
    /// arrivals earlier than the true one are omitted (reports may not
    /// precede the true arrival there).
    pub fn default_for(
        realized: &[(AgentId, AgentType)],
        agent_id: AgentId,
        tie_break_mode: bool,
    ) -> Self {
        let me = realized
            .iter()
            .find(|(id, _)| *id == agent_id)
            .map(|(_, t)| t)
            .expect("agent in instance");
        let mut arrivals: Vec<Time> = realized.iter().map(|(_, t)| t.arrival.clone()).collect();
        arrivals.sort();
        arrivals.dedup();

        let mut shifts = Vec::new();
        if let (Some(first), Some(last)) = (arrivals.first(), arrivals.last()) {
            shifts.push(first - int(1));
            for w in arrivals.windows(2) {
                shifts.push((&w[0] + &w[1]) / int(2));
            }
            shifts.push(last + int(1));
        }
        if tie_break_mode {
            shifts.retain(|a| a >= &me.arrival);
        }

        let one_slot = int(1);
        let departures = alloc::vec![&me.departure - &one_slot, &me.departure + &one_slot];
        let multipliers = alloc::vec![rat(1, 4), rat(1, 2), int(1), int(2), int(4)];
        Self {
            arrival_shifts: shifts,
            departure_options: departures,
            value_multipliers: multipliers.clone(),
            budget_multipliers: multipliers,
        }
    }

    /// All declared types to evaluate; index 0 is the truthful report.
    /// Reports are kept internally consistent (departure never precedes
    /// arrival) and exact duplicates are dropped.
    pub fn deviations(&self, truthful: &AgentType) -> Vec<AgentType> {
        let mut out = alloc::vec![truthful.clone()];
        let mut push = |d: AgentType| {
            if !out.contains(&d) {
                out.push(d);
            }
        };
        for a in &self.arrival_shifts {
            let mut d = truthful.clone();
            d.arrival = a.clone();
            if d.departure < d.arrival {
                d.departure = d.arrival.clone();
            }
            push(d);
        }
        for dep in &self.departure_options {
            let mut d = truthful.clone();
            d.departure = dep.clone().max(truthful.arrival.clone());
            push(d);
        }
        for m in &self.value_multipliers {
            let mut d = truthful.clone();
            d.value = &truthful.value * m;
            push(d);
        }
        for m in &self.budget_multipliers {
            let mut d = truthful.clone();
            d.budget = &truthful.budget * m;
            push(d);
        }
        out
    }
}

/// Per-deviation audit statistics. A mean of minus infinity records that
/// some trial bankrupted the agent (payment above her true budget) or that
/// the mechanism rejected the deviation outright.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationStats {
    pub declared: AgentType,
    pub mean: f64,
    pub half_width: f64,
    /// Mean minus the truthful mean.
    pub gain: f64,
    /// Trials whose utility was minus infinity.
    pub infeasible_trials: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditVerdict {
    pub agent_id: AgentId,
    pub truthful_mean: f64,
    pub truthful_half_width: f64,
    pub deviations: Vec<DeviationStats>,
    pub trials: u64,
    /// True iff no deviation's gain exceeds three combined half-widths.
    pub pass: bool,
}

struct ArmStats {
    mean: f64,
    half_width: f64,
    infeasible: u64,
}

fn run_arm<M>(
    runner: &mut M,
    reports: &[Report],
    agent_id: AgentId,
    true_type: &AgentType,
    trials: u64,
    seed: u64,
) -> ArmStats
where
    M: FnMut(&[Report], &mut TrialRng) -> Result<Outcome, MechanismError>,
{
    let mut moments = MomentSums::default();
    let mut infeasible = 0u64;
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        match runner(reports, &mut rng) {
            // A rejected report counts as unboundedly bad for the agent.
            Err(_) => {
                infeasible = trials;
                break;
            }
            Ok(out) => match utility_in_outcome(&out, agent_id, true_type) {
                ExtValue::NegInf => infeasible += 1,
                ExtValue::Finite(u) => moments.push(&u),
            },
        }
    }
    if infeasible > 0 {
        ArmStats { mean: f64::NEG_INFINITY, half_width: 0.0, infeasible }
    } else {
        let mean = moments.mean().map(|m| to_f64(&m)).unwrap_or(0.0);
        ArmStats { mean, half_width: half_width_99(&moments), infeasible }
    }
}

/// The audited agent's realized utility in one outcome, judged against her
/// *true* type: payments above the true budget are minus infinity, and
/// deliveries outside the true frame earn nothing but still cost their
/// payment. Outcomes without a delivery timestamp count as in-frame.
pub fn utility_in_outcome(
    outcome: &Outcome,
    agent_id: AgentId,
    true_type: &AgentType,
) -> ExtValue {
    let ao = &outcome.agents[agent_id];
    let within = ao.delivery_time.as_ref().map(|t| true_type.in_frame(t)).unwrap_or(true);
    utility(true_type, &ao.delivered, &ao.payment, within)
}

/// Estimates the audited agent's expected utility under her truthful
/// report and under every grid deviation, with common random numbers, and
/// passes iff no deviation's `gain - 3 * combined half-width` is positive.
///
/// `factory` builds a fresh mechanism runner per deviation so that any
/// memoized pricing state never leaks across report sets. Trial counts of
/// 10^4 or more are intended; smaller counts make the thresholds noisy.
pub fn audit_truthfulness<F, M>(
    factory: F,
    realized: &[(AgentId, AgentType)],
    agent_id: AgentId,
    grid: &DeviationGrid,
    trials: u64,
    seed: u64,
) -> Result<AuditVerdict, AuditError>
where
    F: Fn() -> M,
    M: FnMut(&[Report], &mut TrialRng) -> Result<Outcome, MechanismError>,
{
    if trials == 0 {
        return Err(AuditError::ZeroTrials);
    }
    let (position, true_type) = realized
        .iter()
        .enumerate()
        .find(|(_, (id, _))| *id == agent_id)
        .map(|(pos, (_, t))| (pos, t.clone()))
        .ok_or(AuditError::NoSuchAgent(agent_id))?;
    let base = truthful_reports(realized);
    let all = grid.deviations(&true_type);

    let mut truthful_arm = None;
    let mut deviations = Vec::with_capacity(all.len().saturating_sub(1));
    for (k, declared) in all.iter().enumerate() {
        let mut reports = base.clone();
        reports[position].declared = declared.clone();
        let mut runner = factory();
        let arm = run_arm(&mut runner, &reports, agent_id, &true_type, trials, seed);
        if k == 0 {
            truthful_arm = Some(arm);
        } else {
            deviations.push((declared.clone(), arm));
        }
    }
    let truthful = truthful_arm.expect("grid always contains the truthful point");

    let mut pass = true;
    let deviations: Vec<DeviationStats> = deviations
        .into_iter()
        .map(|(declared, arm)| {
            let gain = if arm.mean == f64::NEG_INFINITY && truthful.mean == f64::NEG_INFINITY {
                0.0
            } else {
                arm.mean - truthful.mean
            };
            let combined =
                libm::sqrt(arm.half_width * arm.half_width + truthful.half_width * truthful.half_width);
            if gain - 3.0 * combined > 0.0 {
                pass = false;
            }
            DeviationStats {
                declared,
                mean: arm.mean,
                half_width: arm.half_width,
                gain,
                infeasible_trials: arm.infeasible,
            }
        })
        .collect();

    Ok(AuditVerdict {
        agent_id,
        truthful_mean: truthful.mean,
        truthful_half_width: truthful.half_width,
        deviations,
        trials,
        pass,
    })
}

/// A hard per-run guarantee that failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// More items delivered than the supply.
    Feasibility { delivered: Rat, supply: Rat },
    /// An agent charged above her reported budget.
    BudgetFeasibility { agent: AgentId, payment: Rat, budget: Rat },
    /// A truthful agent served outside her frame.
    OutOfFrame { agent: AgentId, time: Time },
}

/// Checks one outcome of a *truthful* run against the per-run guarantees:
/// total delivery within supply, payments within (reported = true) budgets,
/// and timestamped deliveries inside the agents' frames.
pub fn check_run(
    outcome: &Outcome,
    realized: &[(AgentId, AgentType)],
    supply: &Rat,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    let delivered = outcome.total_delivered();
    if &delivered > supply {
        violations.push(Violation::Feasibility { delivered, supply: supply.clone() });
    }
    for (id, t) in realized {
        let ao = &outcome.agents[*id];
        if ao.payment > t.budget {
            violations.push(Violation::BudgetFeasibility {
                agent: *id,
                payment: ao.payment.clone(),
                budget: t.budget.clone(),
            });
        }
        if ao.delivered > Rat::zero() {
            if let Some(time) = &ao.delivery_time {
                if !t.in_frame(time) {
                    violations.push(Violation::OutOfFrame { agent: *id, time: time.clone() });
                }
            }
        }
    }
    violations
}

/// Which aggregate a metric estimate tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Revenue,
    LiquidWelfare,
}

/// A seeded Monte-Carlo estimate: exact mean, 99% normal half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricEstimate {
    pub mean: Rat,
    pub half_width: f64,
    pub trials: u64,
}

/// Mean of a metric over independent seeded trials. The mean is exact
/// (floating point enters only the half-width).
pub fn estimate_metric<M>(
    runner: &mut M,
    reports: &[Report],
    metric: Metric,
    trials: u64,
    seed: u64,
) -> Result<MetricEstimate, MechanismError>
where
    M: FnMut(&[Report], &mut TrialRng) -> Result<Outcome, MechanismError>,
{
    assert!(trials >= 1, "at least one trial");
    let mut moments = MomentSums::default();
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        let out = runner(reports, &mut rng)?;
        let x = match metric {
            Metric::Revenue => out.revenue,
            Metric::LiquidWelfare => out.liquid_welfare,
        };
        moments.push(&x);
    }
    Ok(MetricEstimate {
        mean: moments.mean().expect("trials >= 1"),
        half_width: half_width_99(&moments),
        trials,
    })
}

/// A deliberately non-truthful fixture: a first-price sale of the whole
/// item to the highest reported value. It exists to validate that the
/// audit catches untruthful mechanisms (underbidding gains utility).
pub fn broken_first_price(
    reports: &[Report],
    _rng: &mut TrialRng,
) -> Result<Outcome, MechanismError> {
    if reports.is_empty() {
        return Err(MechanismError::EmptyInstance);
    }
    let winner = reports
        .iter()
        .max_by(|x, y| {
            x.declared
                .value
                .cmp(&y.declared.value)
                .then_with(|| y.agent_id.cmp(&x.agent_id))
        })
        .expect("non-empty");
    let mut agents = alloc::vec![AgentOutcome::untouched(); reports.len()];
    let out = &mut agents[winner.agent_id];
    out.delivered = int(1);
    out.charged = int(1);
    out.payment = winner.declared.value.clone();
    out.delivery_time = Some(winner.declared.arrival.clone());
    out.within_frame = true;
    Ok(Outcome::assemble(agents, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{MechanismConfig, MechanismMode};
    use crate::model::Report;
    use crate::rng::seed_rng;

    fn agent(a: i64, d: i64, v: i64, b: i64) -> AgentType {
        AgentType::new(int(a), int(d), int(v), int(b))
    }

    fn realized_small() -> Vec<(AgentId, AgentType)> {
        vec![
            (0, agent(1, 9, 8, 4)),
            (1, agent(2, 6, 5, 5)),
            (2, agent(3, 9, 10, 2)),
            (3, agent(4, 9, 3, 6)),
        ]
    }

    #[test]
    fn default_grid_contains_truthful_and_clamps() {
        let realized = realized_small();
        let grid = DeviationGrid::default_for(&realized, 1, false);
        let devs = grid.deviations(&realized[1].1);
        assert_eq!(devs[0], realized[1].1);
        for d in &devs {
            assert!(d.departure >= d.arrival);
            assert!(d.value >= int(0) && d.budget >= int(0));
        }
        // Earlier-than-true arrivals are present by default and filtered
        // out in tie-break mode.
        assert!(devs.iter().any(|d| d.arrival < realized[1].1.arrival));
        let tb = DeviationGrid::default_for(&realized, 1, true);
        assert!(tb.arrival_shifts.iter().all(|a| a >= &realized[1].1.arrival));
    }

    #[test]
    fn first_price_fixture_fails_on_underbidding() {
        // Two agents, values 10 and 4, ample budgets. Truthful utility of
        // agent 0 is 10 - 10 = 0; reporting value 5 still wins and nets
        // 10 - 5 = 5.
        let realized = vec![(0, agent(1, 9, 10, 20)), (1, agent(2, 9, 4, 20))];
        let grid = DeviationGrid::default_for(&realized, 0, false);
        let verdict = audit_truthfulness(
            || broken_first_price,
            &realized,
            0,
            &grid,
            200,
            7,
        )
        .unwrap();
        assert!(!verdict.pass);
        let underbid = verdict
            .deviations
            .iter()
            .find(|d| d.declared.value == int(5))
            .expect("value multiplier 1/2 present");
        assert_eq!(underbid.gain, 5.0);
        assert_eq!(underbid.half_width, 0.0);
    }

    #[test]
    fn zero_budget_agent_passes_trivially() {
        let mut realized = realized_small();
        realized[2].1.budget = int(0);
        let grid = DeviationGrid::default_for(&realized, 2, false);
        let cfg = MechanismConfig::new(MechanismMode::RevDiv, int(1), 0);
        let verdict = audit_truthfulness(
            || {
                let mut runner = cfg.runner();
                move |r: &[Report], g: &mut TrialRng| runner.run(r, g)
            },
            &realized,
            2,
            &grid,
            500,
            11,
        )
        .unwrap();
        assert!(verdict.pass);
        assert_eq!(verdict.truthful_mean, 0.0);
        for d in &verdict.deviations {
            assert!(d.mean <= 0.0);
        }
    }

    #[test]
    fn verdict_is_bit_identical_per_seed() {
        let realized = realized_small();
        let grid = DeviationGrid::default_for(&realized, 1, false);
        let cfg = MechanismConfig::new(MechanismMode::RsLiquid, int(1), 0);
        let run = || {
            audit_truthfulness(
                || {
                    let mut runner = cfg.runner();
                    move |r: &[Report], g: &mut TrialRng| runner.run(r, g)
                },
                &realized,
                1,
                &grid,
                400,
                123,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn check_run_flags_constructed_violations() {
        let realized = realized_small();
        let reports = truthful_reports(&realized);
        let mut agents = alloc::vec![AgentOutcome::untouched(); 4];
        agents[0].delivered = int(3); // supply will be 2
        agents[1].payment = int(9); // budget is 5
        agents[2].delivered = int(1);
        agents[2].delivery_time = Some(int(100)); // frame ends at 9
        let out = Outcome::assemble(agents, &reports);
        let violations = check_run(&out, &realized, &int(2));
        assert_eq!(violations.len(), 3);
        assert!(matches!(violations[0], Violation::Feasibility { .. }));
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::BudgetFeasibility { agent: 1, .. })));
        assert!(violations.iter().any(|v| matches!(v, Violation::OutOfFrame { agent: 2, .. })));

        // A clean run has no violations.
        let cfg = MechanismConfig::new(MechanismMode::RevDiv, int(2), 0);
        let mut runner = cfg.runner();
        let out = runner.run(&reports, &mut seed_rng(5)).unwrap();
        assert!(check_run(&out, &realized, &int(2)).is_empty());
    }

    #[test]
    fn estimate_metric_behaviour() {
        let realized = realized_small();
        let reports = truthful_reports(&realized);

        // Deterministic mechanism: zero half-width.
        let mut constant = |r: &[Report], g: &mut TrialRng| broken_first_price(r, g);
        let est = estimate_metric(&mut constant, &reports, Metric::Revenue, 50, 3).unwrap();
        assert_eq!(est.half_width, 0.0);
        assert_eq!(est.mean, int(10));

        // trivial_random mean liquid welfare approaches the closed form
        // (1/n) * sum of liquid values = (4 + 5 + 2 + 3) / 4.
        let mut tr =
            |r: &[Report], g: &mut TrialRng| crate::mechanisms::trivial_random(r, g);
        let est =
            estimate_metric(&mut tr, &reports, Metric::LiquidWelfare, 40_000, 9).unwrap();
        let closed = rat(14, 4);
        let diff = to_f64(&est.mean) - to_f64(&closed);
        assert!(diff.abs() < est.half_width.max(0.02), "diff {diff} hw {}", est.half_width);

        // Quadrupling the trials roughly halves the half-width.
        let est_small =
            estimate_metric(&mut tr, &reports, Metric::LiquidWelfare, 10_000, 9).unwrap();
        let ratio = est.half_width / est_small.half_width;
        assert!(ratio > 0.4 && ratio < 0.62, "ratio {ratio}");
    }
}
