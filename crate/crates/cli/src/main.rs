use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gfx::{execute, Experiment, Options};

#[derive(Parser, Debug)]
#[command(name = "gfx", version, about = "Growth-fragmentation experiments")]
struct Cli {
    #[arg(value_enum)]
    experiment: Experiment,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; falls back to GFX_SEED, then the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output directory (default `runs/<experiment>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 1 when a statistical check fails.
    #[arg(long)]
    assert: bool,
    /// Override a configuration leaf, e.g. `--set simulation.x0=2`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_kv)]
    set: Vec<(String, String)>,
    /// Comma separated exponents, replaces `statistics.q`.
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<f64>>,
    /// Comma separated times, replaces `statistics.t`.
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got '{s}'"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let opts = Options {
        experiment: cli.experiment,
        config: cli.config,
        seed: cli.seed,
        replicas: cli.replicas,
        threads: cli.threads,
        out: cli.out,
        assert: cli.assert,
        set: cli.set,
        q: cli.q,
        t: cli.t,
    };
    match execute(&opts) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
