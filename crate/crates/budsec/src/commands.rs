//! Implementations of the CLI commands, kept IO-free for testability: each
//! takes resolved options and returns the text it would print plus the
//! success/failure signal.

use anyhow::{bail, Context, Result};

use budsec_core::audit::{
    audit_truthfulness, check_run, estimate_metric, DeviationGrid, Metric,
};
use budsec_core::mechanisms::MechanismConfig;
use budsec_core::model::{
    realize_instance, truthful_reports, AgentId, AgentType, MarketInstance, Report,
};
use budsec_core::pricing::{liquid_opt, opt_hetero, uniform_opt_price, PriceQuote};
use budsec_core::rational::{format_rat, int, MomentSums, Rat};
use budsec_core::rng::{splitmix64, trial_rng, unit_rat};
use budsec_core::TrialRng;

use crate::config::mechanism_name;
use crate::generator::{generate, GenParams};
use crate::oracle;
use crate::report::{f64_cell, rat_cells, CsvBuilder};

fn realized_entries(realized: &[(AgentId, AgentType)]) -> Vec<(AgentId, Rat, Rat)> {
    realized.iter().map(|(id, t)| (*id, t.value.clone(), t.budget.clone())).collect()
}

fn assign_tiebreaks(reports: &mut [Report], rng: &mut TrialRng) {
    for r in reports.iter_mut() {
        r.tiebreak = Some(unit_rat(rng));
    }
}

// === run ===

pub struct RunOptions {
    pub instance: MarketInstance,
    pub mech: MechanismConfig,
    pub trials: u64,
    pub seed: u64,
    pub tie_break: bool,
}

pub struct RunOutput {
    pub csv: String,
    pub violations: u64,
}

/// One CSV row per trial plus `mean` and `ci99` summary rows. Outcomes are
/// validated per trial; the caller turns a nonzero violation count into
/// exit code 2.
pub fn cmd_run(opts: &RunOptions) -> Result<RunOutput> {
    if opts.trials == 0 {
        bail!("at least one trial is required");
    }
    let realized = realize_instance(&opts.instance, opts.tie_break)?;
    let base = truthful_reports(&realized);
    let mut runner = opts.mech.runner();

    let mut csv = CsvBuilder::new(&[
        "trial",
        "revenue",
        "revenue_exact",
        "liquid_welfare",
        "liquid_welfare_exact",
        "items_sold",
        "items_sold_exact",
        "violations",
    ]);
    let mut revenue = MomentSums::default();
    let mut welfare = MomentSums::default();
    let mut items = MomentSums::default();
    let mut violations = 0u64;

    for t in 0..opts.trials {
        let mut rng = trial_rng(opts.seed, t);
        let mut reports = base.clone();
        if opts.tie_break {
            assign_tiebreaks(&mut reports, &mut rng);
        }
        let outcome = runner.run(&reports, &mut rng)?;
        let bad = check_run(&outcome, &realized, &opts.mech.supply);
        violations += bad.len() as u64;

        let sold = outcome.total_delivered();
        revenue.push(&outcome.revenue);
        welfare.push(&outcome.liquid_welfare);
        items.push(&sold);

        let (rev, rev_x) = rat_cells(&outcome.revenue);
        let (lw, lw_x) = rat_cells(&outcome.liquid_welfare);
        let (it, it_x) = rat_cells(&sold);
        csv.row(&[t.to_string(), rev, rev_x, lw, lw_x, it, it_x, bad.len().to_string()]);
    }

    let mean_row = |m: &MomentSums| rat_cells(&m.mean().expect("trials >= 1"));
    let (rev, rev_x) = mean_row(&revenue);
    let (lw, lw_x) = mean_row(&welfare);
    let (it, it_x) = mean_row(&items);
    csv.row(&["mean".into(), rev, rev_x, lw, lw_x, it, it_x, violations.to_string()]);
    csv.row(&[
        "ci99".into(),
        f64_cell(budsec_core::rational::half_width_99(&revenue)),
        String::new(),
        f64_cell(budsec_core::rational::half_width_99(&welfare)),
        String::new(),
        f64_cell(budsec_core::rational::half_width_99(&items)),
        String::new(),
        String::new(),
    ]);

    Ok(RunOutput { csv: csv.finish(), violations })
}

// === sweep ===

pub struct SweepOptions {
    pub ns: Vec<usize>,
    pub params: GenParams,
    pub mech: MechanismConfig,
    pub metric: Metric,
    pub trials: u64,
    pub seed: u64,
}

/// One CSV row per market size: realized market-size parameter, mean
/// metric, the offline benchmark, and their ratio.
pub fn cmd_sweep(opts: &SweepOptions) -> Result<String> {
    let metric_name = match opts.metric {
        Metric::Revenue => "revenue",
        Metric::LiquidWelfare => "liquid_welfare",
    };
    let benchmark_name = match opts.metric {
        Metric::Revenue => "opt_hetero",
        Metric::LiquidWelfare => "opt_liquid",
    };
    let mut csv = CsvBuilder::new(&[
        "n",
        "epsilon",
        "epsilon_exact",
        &format!("mean_{metric_name}"),
        &format!("mean_{metric_name}_exact"),
        "ci99",
        benchmark_name,
        &format!("{benchmark_name}_exact"),
        "ratio",
        "ratio_exact",
    ]);

    for &n in &opts.ns {
        let mut params = opts.params.clone();
        params.n = n;
        let gen_seed = splitmix64(opts.seed ^ n as u64);
        let instance = generate(&params, gen_seed)?;
        let realized = realize_instance(&instance, false)?;
        let entries = realized_entries(&realized);
        let agents = budsec_core::pricing::refs(&entries);

        let eps = budsec_core::pricing::epsilon(&agents, &opts.mech.supply)
            .context("family rejected: the optimal uniform revenue is zero")?;
        let benchmark = match opts.metric {
            Metric::Revenue => opt_hetero(&agents, &opts.mech.supply),
            Metric::LiquidWelfare => liquid_opt(&agents),
        };

        let reports = truthful_reports(&realized);
        let mut runner = opts.mech.runner();
        let estimate = estimate_metric(
            &mut |r: &[Report], g: &mut TrialRng| runner.run(r, g),
            &reports,
            opts.metric,
            opts.trials,
            opts.seed,
        )?;
        let ratio = &estimate.mean / &benchmark;

        let (e, e_x) = rat_cells(&eps);
        let (m, m_x) = rat_cells(&estimate.mean);
        let (b, b_x) = rat_cells(&benchmark);
        let (r, r_x) = rat_cells(&ratio);
        csv.row(&[
            n.to_string(),
            e,
            e_x,
            m,
            m_x,
            f64_cell(estimate.half_width),
            b,
            b_x,
            r,
            r_x,
        ]);
    }
    Ok(csv.finish())
}

// === audit ===

pub struct AuditOptions {
    pub instance: MarketInstance,
    pub mech: MechanismConfig,
    /// Agents to audit; `None` audits everyone.
    pub agents: Option<Vec<AgentId>>,
    pub trials: u64,
    pub seed: u64,
    pub tie_break: bool,
}

pub struct AuditOutput {
    pub text: String,
    pub all_pass: bool,
}

fn describe_type(t: &AgentType) -> String {
    format!(
        "arrival={} departure={} value={} budget={}",
        format_rat(&t.arrival),
        format_rat(&t.departure),
        format_rat(&t.value),
        format_rat(&t.budget)
    )
}

/// Audits each requested agent against the default deviation grid and
/// renders one record per deviation plus a verdict line per agent.
pub fn cmd_audit(opts: &AuditOptions) -> Result<AuditOutput> {
    let realized = realize_instance(&opts.instance, opts.tie_break)?;
    let ids: Vec<AgentId> = match &opts.agents {
        Some(ids) => ids.clone(),
        None => realized.iter().map(|(id, _)| *id).collect(),
    };

    let mut text = String::new();
    text.push_str(&format!(
        "# audit mech={} agents={} trials={} seed={}\n",
        mechanism_name(opts.mech.mode),
        ids.len(),
        opts.trials,
        opts.seed
    ));
    let mut all_pass = true;
    for id in ids {
        let grid = DeviationGrid::default_for(&realized, id, opts.tie_break);
        let tie = opts.tie_break;
        let mech = opts.mech.clone();
        let verdict = audit_truthfulness(
            || {
                let mut runner = mech.runner();
                move |reports: &[Report], rng: &mut TrialRng| {
                    if tie {
                        let mut with_draws = reports.to_vec();
                        assign_tiebreaks(&mut with_draws, rng);
                        runner.run(&with_draws, rng)
                    } else {
                        runner.run(reports, rng)
                    }
                }
            },
            &realized,
            id,
            &grid,
            opts.trials,
            opts.seed,
        )?;
        text.push_str(&format!(
            "agent={id} report=truthful mean={:.9} hw={:.9}\n",
            verdict.truthful_mean, verdict.truthful_half_width
        ));
        for d in &verdict.deviations {
            text.push_str(&format!(
                "agent={id} report=[{}] mean={:.9} hw={:.9} gain={:.9} infeasible={}\n",
                describe_type(&d.declared),
                d.mean,
                d.half_width,
                d.gain,
                d.infeasible_trials
            ));
        }
        text.push_str(&format!(
            "agent={id} verdict={}\n",
            if verdict.pass { "PASS" } else { "FAIL" }
        ));
        all_pass &= verdict.pass;
    }
    text.push_str(&format!("overall={}\n", if all_pass { "PASS" } else { "FAIL" }));
    Ok(AuditOutput { text, all_pass })
}

// === oracle ===

pub struct OracleOptions {
    /// Run the suite against this instance instead of the built-in random
    /// corpus.
    pub instance: Option<MarketInstance>,
    pub supply: Rat,
    pub seed: u64,
}

pub struct OracleOutput {
    pub text: String,
    pub all_pass: bool,
}

/// Runs the exact property suite and renders one pass/fail line per
/// property.
pub fn cmd_oracle(opts: &OracleOptions) -> Result<OracleOutput> {
    let reports = match &opts.instance {
        None => oracle::standard_suite(opts.seed),
        Some(instance) => {
            let realized = realize_instance(instance, false)?;
            let entries = realized_entries(&realized);
            let agents = budsec_core::pricing::refs(&entries);
            // Exercise the allocation checks at this market's own optimal
            // uniform price (falling back to 1 for worthless markets).
            let price = match uniform_opt_price(&agents, &opts.supply).0 {
                PriceQuote::Price(p) => p,
                PriceQuote::NoSale => int(1),
            };
            oracle::suite_for_market(&entries, &price, &opts.supply)
        }
    };
    let mut text = String::new();
    let mut all_pass = true;
    for r in &reports {
        all_pass &= r.pass;
        text.push_str(&format!(
            "{}: {} ({})\n",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        ));
    }
    text.push_str(&format!("overall={}\n", if all_pass { "PASS" } else { "FAIL" }));
    Ok(OracleOutput { text, all_pass })
}

// === gen ===

/// Renders a generated instance in the canonical file format.
pub fn cmd_gen(params: &GenParams, seed: u64) -> Result<String> {
    let instance = generate(params, seed)?;
    Ok(crate::formats::instance_to_string(&instance))
}
