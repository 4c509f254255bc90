use std::io::Write;

use equiaffine::frame::FrameOptions;
use equiaffine::invariants::{report_at, InvariantReport};
use equiaffine::lagrangian::{decide, oracle_parallel_forms, oracle_samples, OracleResult, VerdictKind, ORACLE_MIN_SAMPLES};
use serde::Serialize;

use crate::config::{CliError, CommandKind, RunConfig};
use crate::{output, verify};

pub fn run(config: &RunConfig, out: &mut impl Write) -> Result<(), CliError> {
    match config.command {
        CommandKind::Invariants => invariants(config, out),
        CommandKind::Check => check(config, out),
        CommandKind::Verify => verify::run(config, out),
        CommandKind::Oracle => oracle(config, out),
    }
}

fn invariants(config: &RunConfig, out: &mut impl Write) -> Result<(), CliError> {
    let options = FrameOptions {
        order: config.order,
        choice: None,
    };
    let reports = config
        .sample_points()
        .into_iter()
        .map(|p| report_at(&config.chart, p, &options, config.tol_rank).map_err(|e| CliError::from(e).at(p)))
        .collect::<Result<Vec<InvariantReport>, _>>()?;
    output::invariants(config.format, &reports, out)
}

/// Verdict tagged with the surface it belongs to.
#[derive(Serialize)]
pub struct NamedVerdict<'a> {
    pub surface: &'a str,
    #[serde(flatten)]
    pub verdict: &'a equiaffine::lagrangian::LagrangianVerdict,
}

fn check(config: &RunConfig, out: &mut impl Write) -> Result<(), CliError> {
    let verdict = decide(&config.chart, &config.decide_config())?;
    let named = NamedVerdict {
        surface: &config.chart.name,
        verdict: &verdict,
    };
    output::verdict(config.format, &named, out)
}

#[derive(Serialize)]
pub struct NamedOracle<'a> {
    pub surface: &'a str,
    pub kind: VerdictKind,
    #[serde(flatten)]
    pub oracle: &'a OracleResult,
}

fn oracle(config: &RunConfig, out: &mut impl Write) -> Result<(), CliError> {
    let samples = if config.points.is_empty() {
        oracle_samples(&config.chart)
    } else {
        config.points.clone()
    };
    if samples.len() < ORACLE_MIN_SAMPLES {
        return Err(CliError::Usage(format!(
            "the oracle needs at least {ORACLE_MIN_SAMPLES} sample points, got {}",
            samples.len()
        )));
    }
    let result = oracle_parallel_forms(&config.chart, &samples)?;
    let named = NamedOracle {
        surface: &config.chart.name,
        kind: result.kind(),
        oracle: &result,
    };
    output::oracle(config.format, &named, out)
}
