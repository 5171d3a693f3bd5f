//! Experiment configuration: JSON config files, flag overrides, and the
//! `BUDSEC_SEED` fallback.
//!
//! Precedence for every setting: command-line flag, then config file, then
//! environment (seed only), then the built-in default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use budsec_core::audit::Metric;
use budsec_core::mechanisms::{MechanismConfig, MechanismMode};
use budsec_core::rational::{int, parse_rat, rat, Rat};

use crate::generator::{Family, GenParams};

/// Raw config file contents; every field optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub instance: Option<PathBuf>,
    pub mech: Option<String>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub supply: Option<String>,
    pub mu: Option<String>,
    pub gamma: Option<String>,
    pub agent: Option<usize>,
    pub metric: Option<String>,
    pub tie_break: Option<bool>,
    pub ns: Option<Vec<usize>>,
    pub n: Option<usize>,
    pub family: Option<String>,
    pub value_lo: Option<String>,
    pub value_hi: Option<String>,
    pub budget_lo: Option<String>,
    pub budget_hi: Option<String>,
    pub spacing: Option<String>,
    pub frame_len: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

pub fn parse_mechanism(name: &str) -> Result<MechanismMode> {
    Ok(match name {
        "rev_div" => MechanismMode::RevDiv,
        "rev_indiv" => MechanismMode::RevIndiv,
        "rs_liquid" => MechanismMode::RsLiquid,
        "liquid_div" => MechanismMode::LiquidDiv,
        "mvcg" => MechanismMode::Mvcg,
        "rev_offline" => MechanismMode::RevOffline,
        "trivial_random" => MechanismMode::TrivialRandom,
        other => bail!(
            "unknown mechanism {other:?}; expected one of rev_div, rev_indiv, rs_liquid, \
             liquid_div, mvcg, rev_offline, trivial_random"
        ),
    })
}

pub fn mechanism_name(mode: MechanismMode) -> &'static str {
    match mode {
        MechanismMode::RevDiv => "rev_div",
        MechanismMode::RevIndiv => "rev_indiv",
        MechanismMode::RsLiquid => "rs_liquid",
        MechanismMode::LiquidDiv => "liquid_div",
        MechanismMode::Mvcg => "mvcg",
        MechanismMode::RevOffline => "rev_offline",
        MechanismMode::TrivialRandom => "trivial_random",
    }
}

pub fn parse_metric(name: &str) -> Result<Metric> {
    Ok(match name {
        "revenue" => Metric::Revenue,
        "liquid_welfare" => Metric::LiquidWelfare,
        other => bail!("unknown metric {other:?}; expected revenue or liquid_welfare"),
    })
}

/// The natural metric of a mechanism: revenue for the revenue mechanisms,
/// liquid welfare for everything else.
pub fn default_metric(mode: MechanismMode) -> Metric {
    match mode {
        MechanismMode::RevDiv | MechanismMode::RevIndiv | MechanismMode::RevOffline => {
            Metric::Revenue
        }
        _ => Metric::LiquidWelfare,
    }
}

pub fn parse_family(name: &str) -> Result<Family> {
    Ok(match name {
        "uniform" => Family::Uniform,
        "identical" => Family::Identical,
        other => bail!("unknown family {other:?}; expected uniform or identical"),
    })
}

fn parse_rat_flag(what: &str, text: &str) -> Result<Rat> {
    parse_rat(text).with_context(|| format!("parsing {what} {text:?}"))
}

/// Seed resolution: flag, then file, then `BUDSEC_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var("BUDSEC_SEED") {
        Ok(text) => text
            .parse::<u64>()
            .with_context(|| format!("BUDSEC_SEED must be an unsigned integer, got {text:?}")),
        Err(_) => Ok(0),
    }
}

/// Builds the mechanism configuration from flag/file text fields.
pub fn resolve_mechanism(
    mech: Option<&str>,
    supply: Option<&str>,
    mu: Option<&str>,
    gamma: Option<&str>,
    seed: u64,
) -> Result<MechanismConfig> {
    let mode = parse_mechanism(mech.unwrap_or("rev_div"))?;
    let supply = match supply {
        Some(s) => parse_rat_flag("supply", s)?,
        None => int(1),
    };
    let mut config = MechanismConfig::new(mode, supply, seed);
    if let Some(m) = mu {
        config.mu = parse_rat_flag("mu", m)?;
    }
    if let Some(g) = gamma {
        config.gamma = parse_rat_flag("gamma", g)?;
    }
    config.validate().map_err(|e| anyhow::anyhow!("invalid mechanism config: {e}"))?;
    Ok(config)
}

/// Builds generator parameters from flag/file text fields.
pub fn resolve_gen_params(
    n: Option<usize>,
    family: Option<&str>,
    value_lo: Option<&str>,
    value_hi: Option<&str>,
    budget_lo: Option<&str>,
    budget_hi: Option<&str>,
    spacing: Option<&str>,
    frame_len: Option<&str>,
) -> Result<GenParams> {
    let mut params = GenParams::default();
    if let Some(n) = n {
        params.n = n;
    }
    if let Some(f) = family {
        params.family = parse_family(f)?;
    }
    if let Some(v) = value_lo {
        params.value_lo = parse_rat_flag("value-lo", v)?;
    }
    if let Some(v) = value_hi {
        params.value_hi = parse_rat_flag("value-hi", v)?;
    }
    if let Some(b) = budget_lo {
        params.budget_lo = parse_rat_flag("budget-lo", b)?;
    }
    if let Some(b) = budget_hi {
        params.budget_hi = parse_rat_flag("budget-hi", b)?;
    }
    if let Some(s) = spacing {
        params.spacing = parse_rat_flag("spacing", s)?;
    }
    if let Some(l) = frame_len {
        params.frame_len = Some(parse_rat_flag("frame-len", l)?);
    }
    Ok(params)
}

/// The paper-configured liquid mechanism: mu = 1/10, gamma = 1.0001.
pub fn liquid_defaults() -> (Rat, Rat) {
    (rat(1, 10), rat(10001, 10000))
}
