//! Experiment runner behind the `gfx` binary.
//!
//! Every run reads one JSON configuration, executes one experiment with
//! per-replica random streams, and writes `report.json` plus CSV tables into
//! an output directory. Reports do not depend on the thread count.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod replicate;
pub mod report;

use std::path::PathBuf;
use std::time::Instant;

use serde_json::json;

pub use config::{Experiment, RunConfig};
pub use error::{CliError, Result};
pub use report::{Check, CheckKind, Outcome, Report, Table};

use experiments::{Ctx, Output};
use report::{sha256_hex, Provenance};

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "GFX_SEED";

#[derive(Clone, Debug)]
pub struct Options {
    pub experiment: Experiment,
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub threads: usize,
    pub out: Option<PathBuf>,
    pub assert: bool,
    pub set: Vec<(String, String)>,
    pub q: Option<Vec<f64>>,
    pub t: Option<Vec<f64>>,
}

/// Seed and where it came from: `--seed`, then `GFX_SEED`, then the
/// configuration, then zero.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: Option<u64>) -> Result<(u64, &'static str)> {
    if let Some(s) = flag {
        return Ok((s, "flag"));
    }
    if let Some(raw) = env.filter(|s| !s.trim().is_empty()) {
        let s = raw.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV}='{raw}' is not a u64")))?;
        return Ok((s, "env"));
    }
    match config {
        Some(s) => Ok((s, "config")),
        None => Ok((0, "default")),
    }
}

/// Runs `experiment` on a loaded configuration.
pub fn run_config(
    experiment: Experiment,
    cfg: &RunConfig,
    seed: u64,
    seed_source: &'static str,
    threads: usize,
) -> Result<Outcome> {
    let pool = replicate::pool(threads)?;
    let ctx = Ctx { cfg, seed, pool: &pool };
    let out: Output = match experiment {
        Experiment::Cumulant => experiments::cumulant(&ctx)?,
        Experiment::Simulate => experiments::simulate(&ctx)?,
        Experiment::MartingaleCheck => experiments::martingale_check(&ctx)?,
        Experiment::Extinction => experiments::extinction(&ctx)?,
        Experiment::Couple => experiments::couple(&ctx)?,
        Experiment::Spine => experiments::spine(&ctx)?,
        Experiment::Explode => experiments::explode(&ctx)?,
        Experiment::ChangeOfMeasure => experiments::change_of_measure(&ctx)?,
    };
    let config = serde_json::to_value(cfg)?;
    let mut report = Report {
        tool: "gfx",
        version: env!("CARGO_PKG_VERSION"),
        experiment: experiment.name(),
        config_hash: sha256_hex(&serde_json::to_vec(&config)?),
        config,
        rng: Provenance { seed, seed_source, generator: "chacha8" },
        counters: out.counters,
        checks: out.checks,
        results: out.results,
        tables: out.tables.iter().map(|t| format!("{}.csv", t.name)).collect(),
        report_hash: String::new(),
    };
    report.seal(&out.tables)?;
    Ok(Outcome { report, tables: out.tables })
}

/// Loads the configuration with all command-line overrides applied.
pub fn load_config(opts: &Options) -> Result<RunConfig> {
    let mut set = opts.set.clone();
    if let Some(n) = opts.replicas {
        set.push(("statistics.replicas".into(), n.to_string()));
    }
    if let Some(q) = &opts.q {
        set.push(("statistics.q".into(), serde_json::to_string(q)?));
    }
    if let Some(t) = &opts.t {
        set.push(("statistics.t".into(), serde_json::to_string(t)?));
    }
    let cfg = RunConfig::load(&opts.config, &set)?;
    if let Some(e) = cfg.experiment.filter(|&e| e != opts.experiment) {
        return Err(CliError::Config(format!(
            "configuration is for '{}' but '{}' was requested",
            e.name(),
            opts.experiment.name()
        )));
    }
    Ok(cfg)
}

/// Full command: load, run, write, summarise on stderr. Returns the exit code.
pub fn execute(opts: &Options) -> Result<i32> {
    let cfg = load_config(opts)?;
    let env = std::env::var(SEED_ENV).ok();
    let (seed, source) = resolve_seed(opts.seed, env.as_deref(), cfg.statistics.seed)?;
    let start = Instant::now();
    let outcome = run_config(opts.experiment, &cfg, seed, source, opts.threads)?;
    let elapsed = start.elapsed().as_secs_f64();
    let out = opts.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(opts.experiment.name()));
    let timing = json!({"seconds": elapsed, "threads": opts.threads});
    report::emit(&out, &outcome, Some(&timing))?;
    for c in &outcome.report.checks {
        eprintln!("{} {:?} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.kind, c.name, c.detail);
    }
    eprintln!("wrote {} ({elapsed:.2}s)", out.display());
    Ok(outcome.exit_code(opts.assert))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some("2"), Some(3)).unwrap(), (1, "flag"));
        assert_eq!(resolve_seed(None, Some("2"), Some(3)).unwrap(), (2, "env"));
        assert_eq!(resolve_seed(None, None, Some(3)).unwrap(), (3, "config"));
        assert_eq!(resolve_seed(None, Some(" "), None).unwrap(), (0, "default"));
        assert!(resolve_seed(None, Some("x"), None).is_err());
    }
}
