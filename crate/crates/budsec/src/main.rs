//! `budsec` — seeded experiments on online budgeted-auction mechanisms.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use budsec::commands::{
    cmd_audit, cmd_gen, cmd_oracle, cmd_run, cmd_sweep, AuditOptions, OracleOptions, RunOptions,
    SweepOptions,
};
use budsec::config::{
    default_metric, parse_metric, resolve_gen_params, resolve_mechanism, resolve_seed, FileConfig,
};
use budsec::formats::load_instance;
use budsec::{formats, ExitStatus};
use budsec_core::rational::parse_rat;

#[derive(Parser)]
#[command(
    name = "budsec",
    version,
    about = "Deterministic experiments on online auctions with budgeted agents: \
             mechanism runs, market-size sweeps, truthfulness audits, exact oracles \
             and instance generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance file to operate on.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Mechanism: rev_div, rev_indiv, rs_liquid, liquid_div, mvcg,
    /// rev_offline, trivial_random.
    #[arg(long)]
    mech: Option<String>,
    /// Number of Monte-Carlo trials.
    #[arg(long)]
    trials: Option<u64>,
    /// Master seed (falls back to config, then $BUDSEC_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Item supply (rational, e.g. "1" or "3/2").
    #[arg(long)]
    supply: Option<String>,
    /// Probability of the modified-VCG branch in liquid_div.
    #[arg(long)]
    mu: Option<String>,
    /// Threshold factor of the modified-VCG mechanism (> 1).
    #[arg(long)]
    gamma: Option<String>,
    /// Allow equal reported arrivals, ordered by uniform tie-break draws.
    #[arg(long)]
    tie_break: bool,
}

#[derive(Args, Debug, Default, Clone)]
struct GenArgs {
    /// Number of agents.
    #[arg(long)]
    n: Option<usize>,
    /// Instance family: uniform or identical.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    value_lo: Option<String>,
    #[arg(long)]
    value_hi: Option<String>,
    #[arg(long)]
    budget_lo: Option<String>,
    #[arg(long)]
    budget_hi: Option<String>,
    /// Gap between consecutive arrivals.
    #[arg(long)]
    spacing: Option<String>,
    /// Frame length (default: agents stay until after the last arrival).
    #[arg(long)]
    frame_len: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mechanism on an instance; one CSV row per trial.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep generated market sizes and report means against the offline
    /// benchmark.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        gen: GenArgs,
        /// Market sizes, comma separated (e.g. 50,100,200).
        #[arg(long, value_delimiter = ',')]
        ns: Vec<usize>,
        /// Metric: revenue or liquid_welfare (defaults to the mechanism's
        /// natural one).
        #[arg(long)]
        metric: Option<String>,
    },
    /// Audit truthfulness of a mechanism on an instance.
    Audit {
        #[command(flatten)]
        common: CommonArgs,
        /// Agent ids to audit, comma separated (default: all agents).
        #[arg(long, value_delimiter = ',')]
        agent: Option<Vec<usize>>,
    },
    /// Run the exact property suite (random corpus, or one instance).
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate a seeded instance file.
    Gen {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        gen: GenArgs,
    },
}

fn file_config(common: &CommonArgs) -> Result<FileConfig> {
    match &common.config {
        Some(path) => FileConfig::load(path),
        None => Ok(FileConfig::default()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

struct Resolved {
    instance_path: Option<PathBuf>,
    mech: budsec_core::mechanisms::MechanismConfig,
    trials: u64,
    seed: u64,
    out: Option<PathBuf>,
    tie_break: bool,
    file: FileConfig,
}

fn resolve(common: &CommonArgs, default_trials: u64) -> Result<Resolved> {
    let file = file_config(common)?;
    let seed = resolve_seed(common.seed, file.seed)?;
    let mech = resolve_mechanism(
        common.mech.as_deref().or(file.mech.as_deref()),
        common.supply.as_deref().or(file.supply.as_deref()),
        common.mu.as_deref().or(file.mu.as_deref()),
        common.gamma.as_deref().or(file.gamma.as_deref()),
        seed,
    )?;
    Ok(Resolved {
        instance_path: common.instance.clone().or_else(|| file.instance.clone()),
        mech,
        trials: common.trials.or(file.trials).unwrap_or(default_trials),
        seed,
        out: common.out.clone().or_else(|| file.out.clone()),
        tie_break: common.tie_break || file.tie_break.unwrap_or(false),
        file,
    })
}

fn require_instance(r: &Resolved) -> Result<budsec_core::model::MarketInstance> {
    let path = r
        .instance_path
        .as_deref()
        .ok_or_else(|| anyhow::anyhow!("an instance file is required (--instance)"))?;
    Ok(load_instance(path)?)
}

fn gen_params_from(gen: &GenArgs, file: &FileConfig) -> Result<budsec::generator::GenParams> {
    resolve_gen_params(
        gen.n.or(file.n),
        gen.family.as_deref().or(file.family.as_deref()),
        gen.value_lo.as_deref().or(file.value_lo.as_deref()),
        gen.value_hi.as_deref().or(file.value_hi.as_deref()),
        gen.budget_lo.as_deref().or(file.budget_lo.as_deref()),
        gen.budget_hi.as_deref().or(file.budget_hi.as_deref()),
        gen.spacing.as_deref().or(file.spacing.as_deref()),
        gen.frame_len.as_deref().or(file.frame_len.as_deref()),
    )
}

fn dispatch(cli: Cli) -> Result<ExitStatus> {
    match cli.command {
        Command::Run { common } => {
            let r = resolve(&common, 1000)?;
            let opts = RunOptions {
                instance: require_instance(&r)?,
                mech: r.mech.clone(),
                trials: r.trials,
                seed: r.seed,
                tie_break: r.tie_break,
            };
            let output = cmd_run(&opts)?;
            emit(r.out.as_deref(), &output.csv)?;
            if output.violations > 0 {
                eprintln!("{} run-check violations", output.violations);
                return Ok(ExitStatus::PropertyFailure);
            }
            Ok(ExitStatus::Ok)
        }
        Command::Sweep { common, gen, ns, metric } => {
            let r = resolve(&common, 200)?;
            let metric = match metric.as_deref().or(r.file.metric.as_deref()) {
                Some(name) => parse_metric(name)?,
                None => default_metric(r.mech.mode),
            };
            let ns = if ns.is_empty() { r.file.ns.clone().unwrap_or_default() } else { ns };
            let opts = SweepOptions {
                ns,
                params: gen_params_from(&gen, &r.file)?,
                mech: r.mech.clone(),
                metric,
                trials: r.trials,
                seed: r.seed,
            };
            let csv = cmd_sweep(&opts)?;
            emit(r.out.as_deref(), &csv)?;
            Ok(ExitStatus::Ok)
        }
        Command::Audit { common, agent } => {
            let r = resolve(&common, 10_000)?;
            let agents = agent.or_else(|| r.file.agent.map(|a| vec![a]));
            let opts = AuditOptions {
                instance: require_instance(&r)?,
                mech: r.mech.clone(),
                agents,
                trials: r.trials,
                seed: r.seed,
                tie_break: r.tie_break,
            };
            let output = cmd_audit(&opts)?;
            emit(r.out.as_deref(), &output.text)?;
            Ok(if output.all_pass { ExitStatus::Ok } else { ExitStatus::PropertyFailure })
        }
        Command::Oracle { common } => {
            let r = resolve(&common, 0)?;
            let instance = match &r.instance_path {
                Some(path) => Some(load_instance(path)?),
                None => None,
            };
            let supply = match &common.supply {
                Some(s) => parse_rat(s).map_err(|e| anyhow::anyhow!("invalid supply: {e}"))?,
                None => budsec_core::rational::int(1),
            };
            let output = cmd_oracle(&OracleOptions { instance, supply, seed: r.seed })?;
            emit(r.out.as_deref(), &output.text)?;
            Ok(if output.all_pass { ExitStatus::Ok } else { ExitStatus::PropertyFailure })
        }
        Command::Gen { common, gen } => {
            let r = resolve(&common, 0)?;
            let params = gen_params_from(&gen, &r.file)?;
            if params.n == 0 {
                bail!("--n must be at least 1");
            }
            let text = cmd_gen(&params, r.seed)?;
            match &r.out {
                Some(path) => formats::save_instance(
                    path,
                    &formats::instance_from_str(&text).expect("generated instances parse"),
                )?,
                None => print!("{text}"),
            }
            Ok(ExitStatus::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(ExitStatus::ConfigError.code())
        }
    }
}
