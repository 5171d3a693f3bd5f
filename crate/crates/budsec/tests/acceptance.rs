//! Acceptance gate: every release-blocking property, one test per
//! criterion, each printing a single pass/fail line (run with
//! `--nocapture` to see them). Exact-arithmetic criteria enumerate; the
//! statistical ones pin their trial counts, seeds and conservative floors.

use std::time::Instant;

use budsec::generator::{generate, GenParams};
use budsec::oracle::{
    check_abrams_bound, check_clearing_lemma, check_lottery_fairness, check_monotonicity,
    check_restriction_bound, check_rounding_bound, random_markets,
};
use budsec_core::allocation::AllocRule;
use budsec_core::audit::{
    audit_truthfulness, broken_first_price, check_run, estimate_metric, DeviationGrid, Metric,
};
use budsec_core::mechanisms::{rs_online, MechanismConfig, MechanismMode};
use budsec_core::model::{
    realize_instance, sample_permutation, truthful_reports, AgentId, AgentType, MarketInstance,
    Report, SetLabel,
};
use budsec_core::pricing::{epsilon, liquid_opt, opt_hetero, refs, RevenuePricing};
use budsec_core::rational::{int, rat, to_f64, Rat};
use budsec_core::rng::trial_rng;
use budsec_core::TrialRng;

fn conclude(id: u32, label: &str, pass: bool, detail: &str, started: Instant, budget: u64) {
    let elapsed = started.elapsed();
    println!(
        "criterion {id} ({label}): {} — {detail} [{:.1}s]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    assert!(pass, "criterion {id} ({label}) failed: {detail}");
    if budget > 0 {
        assert!(
            elapsed.as_secs() < budget,
            "criterion {id} ({label}) exceeded its {budget}s budget ({elapsed:?})"
        );
    }
}

fn agent(a: i64, d: i64, v: i64, b: i64) -> AgentType {
    AgentType::new(int(a), int(d), int(v), int(b))
}

/// The six-agent audit corpus: mixed budgets, one early departure, prices
/// that exercise both fractional and whole-supply allocation branches.
fn audit_corpus() -> Vec<(AgentId, AgentType)> {
    vec![
        (0, agent(1, 9, 8, 4)),
        (1, agent(2, 4, 5, 5)),
        (2, agent(3, 9, 10, 2)),
        (3, agent(4, 6, 3, 6)),
        (4, agent(5, 9, 6, 3)),
        (5, agent(6, 9, 4, 4)),
    ]
}

fn entries_of(realized: &[(AgentId, AgentType)]) -> Vec<(AgentId, Rat, Rat)> {
    realized.iter().map(|(id, t)| (*id, t.value.clone(), t.budget.clone())).collect()
}

#[test]
fn criterion_01_rounding_bound() {
    let started = Instant::now();
    let markets = random_markets(101, 50, 6);
    let report = check_rounding_bound(&markets);
    conclude(1, "rounding loss at most half", report.pass, &report.detail, started, 60);
}

#[test]
fn criterion_02_allocation_monotonicity() {
    let started = Instant::now();
    let markets = random_markets(102, 30, 6);
    let report = check_monotonicity(&markets);
    // Lottery fairness rides on the same enumeration corpus.
    let fairness = check_lottery_fairness(&markets);
    let pass = report.pass && fairness.pass;
    let detail = format!("{}; {}", report.detail, fairness.detail);
    conclude(2, "allocation monotonicity", pass, &detail, started, 60);
}

#[test]
fn criterion_03_partition_frequencies() {
    let started = Instant::now();
    let n = 8usize;
    let frames: Vec<(Rat, Rat)> = (1..=n as i64).map(|i| (int(i), int(10))).collect();
    let pairs: Vec<(Rat, Rat)> = [(8, 4), (5, 5), (10, 2), (3, 6), (6, 3), (4, 4), (7, 1), (2, 8)]
        .iter()
        .map(|(v, b)| (int(*v), int(*b)))
        .collect();

    let trials = 100_000u64;
    let mut counts = vec![[0u64; 4]; n];
    let mut present = vec![0u64; n];
    for t in 0..trials {
        let mut rng = trial_rng(303, t);
        let permutation = sample_permutation(n, &mut rng).unwrap();
        let instance =
            MarketInstance { frames: frames.clone(), pairs: pairs.clone(), permutation };
        let realized = realize_instance(&instance, false).unwrap();
        let reports = truthful_reports(&realized);
        let mut pricing = RevenuePricing { per_side_supply: rat(1, 4) };
        let (_, trace) =
            rs_online(&reports, &int(1), &mut pricing, AllocRule::Divisible, &mut rng).unwrap();
        for pos in 0..n {
            if trace.boundary == pos {
                continue;
            }
            let pair_id = instance.permutation[pos];
            present[pair_id] += 1;
            let slot = match trace.labels[pos] {
                SetLabel::A1 => 0,
                SetLabel::A2 => 1,
                SetLabel::B1 => 2,
                SetLabel::B2 => 3,
            };
            counts[pair_id][slot] += 1;
        }
    }

    let mut pass = true;
    let mut worst = 0.25f64;
    for pair_id in 0..n {
        for slot in 0..4 {
            let freq = counts[pair_id][slot] as f64 / present[pair_id] as f64;
            if (freq - 0.25).abs() > (worst - 0.25).abs() {
                worst = freq;
            }
            pass &= (0.24..=0.26).contains(&freq);
        }
    }
    let detail = format!(
        "{} runs, {} agents x 4 sets, worst frequency {worst:.4} (target 0.25 +- 0.01)",
        trials, n
    );
    conclude(3, "four-set partition frequencies", pass, &detail, started, 120);
}

#[test]
fn criterion_04_clearing_price_bounds() {
    let started = Instant::now();
    let markets = random_markets(104, 1000, 7);
    let report = check_clearing_lemma(&markets);
    conclude(4, "clearing-price bounds", report.pass, &report.detail, started, 60);
}

#[test]
fn criterion_05_uniform_price_half_optimum() {
    let started = Instant::now();
    let markets = random_markets(105, 1000, 7);
    let report = check_abrams_bound(&markets);
    conclude(5, "uniform price vs heterogeneous optimum", report.pass, &report.detail, started, 60);
}

#[test]
fn criterion_06_restricted_sale_bound() {
    let started = Instant::now();
    let markets = random_markets(106, 20, 5);
    let report = check_restriction_bound(&markets, &[rat(1, 3), rat(1, 2)]);
    conclude(6, "restricted-sale revenue bound", report.pass, &report.detail, started, 120);
}

fn paper_mechanisms() -> Vec<(&'static str, MechanismConfig)> {
    vec![
        ("rev_div", MechanismConfig::new(MechanismMode::RevDiv, int(1), 0)),
        ("rev_indiv", MechanismConfig::new(MechanismMode::RevIndiv, int(4), 0)),
        ("rs_liquid", MechanismConfig::new(MechanismMode::RsLiquid, int(1), 0)),
        ("mvcg", MechanismConfig::new(MechanismMode::Mvcg, int(1), 0)),
        ("liquid_div", MechanismConfig::new(MechanismMode::LiquidDiv, int(1), 0)),
    ]
}

#[test]
fn criterion_07_truthfulness_audits() {
    let started = Instant::now();
    let realized = audit_corpus();
    let trials = 100_000u64;
    let mut pass = true;
    let mut details = Vec::new();

    for (name, cfg) in paper_mechanisms() {
        for agent_id in [2usize, 4] {
            let grid = DeviationGrid::default_for(&realized, agent_id, false);
            let verdict = audit_truthfulness(
                || {
                    let mut runner = cfg.runner();
                    move |r: &[Report], g: &mut TrialRng| runner.run(r, g)
                },
                &realized,
                agent_id,
                &grid,
                trials,
                707,
            )
            .unwrap();
            pass &= verdict.pass;
            details.push(format!(
                "{name}/agent{agent_id}={}",
                if verdict.pass { "PASS" } else { "FAIL" }
            ));
        }
    }

    // The deliberately broken first-price mechanism must fail its audit.
    let fixture = vec![(0usize, agent(1, 9, 10, 20)), (1, agent(2, 9, 4, 20))];
    let grid = DeviationGrid::default_for(&fixture, 0, false);
    let verdict =
        audit_truthfulness(|| broken_first_price, &fixture, 0, &grid, trials, 707).unwrap();
    pass &= !verdict.pass;
    details.push(format!(
        "first_price_fixture={}",
        if verdict.pass { "unexpected PASS" } else { "FAIL as expected" }
    ));

    let detail = format!("{} trials with shared coin streams: {}", trials, details.join(", "));
    conclude(7, "truthfulness audits", pass, &detail, started, 600);
}

/// The large-market family: 200 agents, values in [1,2], budgets in
/// [1/100, 1/50], everyone present to the end.
fn large_market() -> Vec<(AgentId, AgentType)> {
    let params = GenParams { n: 200, ..GenParams::default() };
    let instance = generate(&params, 808).unwrap();
    realize_instance(&instance, false).unwrap()
}

#[test]
fn criterion_08_revenue_floors_large_market() {
    let started = Instant::now();
    let realized = large_market();
    let entries = entries_of(&realized);
    let agents = refs(&entries);
    let reports = truthful_reports(&realized);
    let trials = 500u64;
    let mut pass = true;
    let mut details = Vec::new();

    for (mode, supply, divisor, seed) in [
        (MechanismMode::RevDiv, int(1), 32i64, 809u64),
        (MechanismMode::RevIndiv, int(400), 64, 810),
    ] {
        let eps = epsilon(&agents, &supply).unwrap();
        let eps_ok = eps <= rat(1, 20);
        let benchmark = opt_hetero(&agents, &supply);
        let cfg = MechanismConfig::new(mode, supply, 0);
        let mut runner = cfg.runner();
        let est = estimate_metric(
            &mut |r: &[Report], g: &mut TrialRng| runner.run(r, g),
            &reports,
            Metric::Revenue,
            trials,
            seed,
        )
        .unwrap();
        let floor_ok = &est.mean * int(divisor) >= benchmark;
        pass &= eps_ok && floor_ok;
        details.push(format!(
            "{mode:?}: eps={:.4} mean={:.4} optimum/{divisor}={:.4}{}",
            to_f64(&eps),
            to_f64(&est.mean),
            to_f64(&benchmark) / divisor as f64,
            if eps_ok && floor_ok { "" } else { " VIOLATED" }
        ));
    }
    let detail = format!("{trials} trials each; {}", details.join("; "));
    conclude(8, "revenue floors on the large market", pass, &detail, started, 300);
}

/// Liquid-welfare families, 120 agents each. `two_dominant` keeps the top
/// two liquid values within the threshold factor of each other;
/// `one_dominant` separates them.
fn liquid_families() -> Vec<(&'static str, Vec<(AgentId, AgentType)>)> {
    let base = |i: usize| -> AgentType {
        // Small agents: values near 1, budgets a few hundredths.
        AgentType::new(
            int(1 + i as i64),
            int(122),
            int(1) + rat(i as i64 % 11, 110),
            rat(1, 100) + rat(i as i64 % 7, 700),
        )
    };
    let n = 120usize;
    let no_dominant: Vec<(AgentId, AgentType)> = (0..n).map(|i| (i, base(i))).collect();

    let mut two_dominant = no_dominant.clone();
    two_dominant[30].1.value = int(10);
    two_dominant[30].1.budget = int(10);
    two_dominant[90].1.value = rat(99999, 10000);
    two_dominant[90].1.budget = rat(99999, 10000);

    let mut one_dominant = no_dominant.clone();
    one_dominant[30].1.value = int(10);
    one_dominant[30].1.budget = int(10);

    vec![
        ("no-dominant", no_dominant),
        ("two-dominant", two_dominant),
        ("one-dominant", one_dominant),
    ]
}

#[test]
fn criterion_09_liquid_welfare_floor() {
    let started = Instant::now();
    let trials = 2000u64;
    let mut pass = true;
    let mut details = Vec::new();
    for (name, realized) in liquid_families() {
        let entries = entries_of(&realized);
        let optimum = liquid_opt(&refs(&entries));
        let reports = truthful_reports(&realized);
        let cfg = MechanismConfig::new(MechanismMode::LiquidDiv, int(1), 0);
        let mut runner = cfg.runner();
        let est = estimate_metric(
            &mut |r: &[Report], g: &mut TrialRng| runner.run(r, g),
            &reports,
            Metric::LiquidWelfare,
            trials,
            909,
        )
        .unwrap();
        let ok = &est.mean * int(2443) >= optimum;
        pass &= ok;
        details.push(format!(
            "{name}: mean={:.4} optimum/2443={:.6}{}",
            to_f64(&est.mean),
            to_f64(&optimum) / 2443.0,
            if ok { "" } else { " VIOLATED" }
        ));
    }
    let detail = format!("{trials} trials per family; {}", details.join("; "));
    conclude(9, "liquid-welfare floor", pass, &detail, started, 300);
}

#[test]
fn criterion_10_per_run_guarantees() {
    // Re-runs every randomized trial behind criteria 7-9 (truthful arms)
    // and validates each outcome exactly: items within supply, payments
    // within budgets, deliveries inside frames.
    let started = Instant::now();
    let mut violations = 0u64;
    let mut runs = 0u64;

    let corpus = audit_corpus();
    let corpus_reports = truthful_reports(&corpus);
    for (_, cfg) in paper_mechanisms() {
        let mut runner = cfg.runner();
        for t in 0..100_000u64 {
            let mut rng = trial_rng(707, t);
            let out = runner.run(&corpus_reports, &mut rng).unwrap();
            violations += check_run(&out, &corpus, &cfg.supply).len() as u64;
            runs += 1;
        }
    }

    let market = large_market();
    let market_reports = truthful_reports(&market);
    for (mode, supply, seed) in [
        (MechanismMode::RevDiv, int(1), 809u64),
        (MechanismMode::RevIndiv, int(400), 810),
    ] {
        let cfg = MechanismConfig::new(mode, supply, 0);
        let mut runner = cfg.runner();
        for t in 0..500u64 {
            let mut rng = trial_rng(seed, t);
            let out = runner.run(&market_reports, &mut rng).unwrap();
            violations += check_run(&out, &market, &cfg.supply).len() as u64;
            runs += 1;
        }
    }

    for (_, realized) in liquid_families() {
        let reports = truthful_reports(&realized);
        let cfg = MechanismConfig::new(MechanismMode::LiquidDiv, int(1), 0);
        let mut runner = cfg.runner();
        for t in 0..2000u64 {
            let mut rng = trial_rng(909, t);
            let out = runner.run(&reports, &mut rng).unwrap();
            violations += check_run(&out, &realized, &cfg.supply).len() as u64;
            runs += 1;
        }
    }

    let detail = format!("{runs} runs, {violations} violations");
    conclude(10, "per-run feasibility and budget checks", violations == 0, &detail, started, 0);
}

#[test]
fn criterion_11_trivial_fallback_bound() {
    let started = Instant::now();
    let mut pass = true;
    let mut details = Vec::new();

    let generated = {
        let params = GenParams { n: 99, ..GenParams::default() };
        realize_instance(&generate(&params, 1111).unwrap(), false).unwrap()
    };
    for (name, realized) in [("six-agent corpus", audit_corpus()), ("generated n=99", generated)] {
        let n = realized.len();
        assert!(n < 100);
        let entries = entries_of(&realized);
        let optimum = liquid_opt(&refs(&entries));
        // Closed-form expected liquid welfare of the uniform free handout.
        let expected: Rat = realized
            .iter()
            .map(|(_, t)| t.liquid_value())
            .sum::<Rat>()
            / int(n as i64);
        let ok = &expected * int(100) >= optimum;
        pass &= ok;
        details.push(format!(
            "{name}: expected={} optimum={}{}",
            to_f64(&expected),
            to_f64(&optimum),
            if ok { "" } else { " VIOLATED" }
        ));
    }
    conclude(
        11,
        "random-handout hundredfold bound",
        pass,
        &details.join("; "),
        started,
        0,
    );
}
