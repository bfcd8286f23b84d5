//! Command-line front end: argument parsing and command dispatch.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical degeneracy or an
//! intractable model, 4 I/O error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{exact_asymptotic_variance, exact_bias, exact_filter_bias, exact_filter_variance, DiscreteModel};
use crate::experiments::{
    ci_failure_rates, lag_sweep, long_run, replicate_variance_reference, single_run, ExperimentConfig,
    ModelConfig,
};
use crate::io;
use crate::models::simulate;
use crate::seed::{derive_seed, stream};
use crate::smc::Lag;
use crate::variance::Flow;

#[derive(Debug, Parser)]
#[command(name = "pfvar", version, about = "Fixed-lag variance estimation for particle filters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Override a configuration field, e.g. `--set N=8000` or `--set model.phi=0.9`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Output directory (defaults to the config's `output_path`, then `.`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads for replicated experiments.
    #[arg(long, global = true, value_name = "K")]
    pub threads: Option<usize>,

    /// Master seed; takes precedence over PFVAR_SEED and the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate an observation record from the configured model.
    Simulate,
    /// One filter pass with per-step estimates and confidence intervals.
    Run,
    /// Variance estimates at time n for every configured lag, over replicates.
    SweepLag,
    /// Long single run tracking the fixed-lag estimate, the CLE and ancestor counts.
    LongRun,
    /// Confidence-interval failure rates against Kalman truth (linear Gaussian only).
    CiFailure,
    /// Exact truncated variances and biases for a finite-state model.
    OracleExact,
    /// Brute-force variance reference from independent replicates.
    OracleReplicate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Run => "run",
            Command::SweepLag => "sweep-lag",
            Command::LongRun => "long-run",
            Command::CiFailure => "ci-failure",
            Command::OracleExact => "oracle-exact",
            Command::OracleReplicate => "oracle-replicate",
        }
    }
}

#[derive(Serialize)]
struct LagStats {
    lag: Lag,
    mean: f64,
    std_dev: f64,
}

#[derive(Serialize)]
struct SweepSummary {
    per_lag: Vec<LagStats>,
    reference: Option<f64>,
}

#[derive(Serialize)]
struct ExactRow {
    ell: usize,
    value: f64,
}

#[derive(Serialize)]
struct BiasRow {
    lag: Lag,
    bias: f64,
}

#[derive(Serialize)]
struct ExactSummary {
    flow: Flow,
    n: usize,
    terms: Vec<f64>,
    truncated: Vec<ExactRow>,
    bias: Vec<BiasRow>,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("--config PATH is required".into()))?;
    if !path.exists() {
        return Err(Error::InvalidConfig(format!("config file {} does not exist", path.display())));
    }
    let mut cfg = io::parse_config(path, &cli.overrides)?;
    io::resolve_seed(&mut cfg, cli.seed)?;
    Ok(cfg)
}

fn discrete_h(dm: &DiscreteModel, cfg: &ExperimentConfig) -> Vec<f64> {
    let h = cfg.test_function.to_function();
    (0..dm.num_states()).map(|s| h.eval(s as f64)).collect()
}

fn oracle_exact(cfg: &ExperimentConfig) -> Result<ExactSummary> {
    let dm = match &cfg.model {
        ModelConfig::Discrete(dm) => dm,
        _ => {
            return Err(Error::ModelNotTractable(
                "oracle-exact needs a finite-state (discrete) model".into(),
            ))
        }
    };
    let h = discrete_h(dm, cfg);
    let zs = cfg.observation_record()?;
    let n = cfg.n;
    let full = match cfg.flow {
        Flow::Predictor => exact_asymptotic_variance(dm, &zs, &h, 0)?,
        Flow::Filter => exact_filter_variance(dm, &zs, &h, 0)?,
    };
    let truncated = (0..=n)
        .map(|ell| ExactRow {
            ell,
            value: full.terms[ell..].iter().fold(0.0, |a, t| a + t),
        })
        .collect();
    let bias = cfg
        .lags
        .iter()
        .map(|&lag| {
            let b = match cfg.flow {
                Flow::Predictor => exact_bias(dm, &zs, &h, lag)?,
                Flow::Filter => exact_filter_bias(dm, &zs, &h, lag)?,
            };
            Ok(BiasRow { lag, bias: b })
        })
        .collect::<Result<_>>()?;
    Ok(ExactSummary {
        flow: cfg.flow,
        n,
        terms: full.terms,
        truncated,
        bias,
    })
}

/// Runs one command and returns the files it wrote.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = load_config(cli)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_path.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let out = |name: &str| out_dir.join(name);
    let name = cli.command.name();
    let mut written = Vec::new();
    let mut record = |p: &Path| written.push(p.to_path_buf());

    match cli.command {
        Command::Simulate => {
            let params = match &cfg.model {
                ModelConfig::LinearGaussian(p) => (*p).into(),
                ModelConfig::StochasticVolatility(p) => (*p).into(),
                _ => {
                    return Err(Error::ModelNotTractable(
                        "simulate supports the linear Gaussian and stochastic volatility models".into(),
                    ))
                }
            };
            let len = cfg.required_observations().max(1);
            let traj = simulate(params, len, derive_seed(cfg.seed, stream::OBSERVATIONS, 0))?;
            let csv = out("observations.csv");
            io::write_observations(&csv, &traj.observations)?;
            record(&csv);
            let json = out("simulate.json");
            io::write_summary(&json, name, &cfg, serde_json::json!({ "length": len }))?;
            record(&json);
        }
        Command::Run => {
            let rows = single_run(&cfg)?;
            let csv = out("run.csv");
            io::write_run_csv(&csv, &rows)?;
            record(&csv);
            let last = rows.last().copied();
            let json = out("run.json");
            io::write_summary(&json, name, &cfg, serde_json::json!({ "final": last }))?;
            record(&json);
        }
        Command::SweepLag => {
            let sweep = lag_sweep(&cfg)?;
            let csv = out("sweep.csv");
            io::write_sweep_csv(&csv, &sweep)?;
            record(&csv);
            let summary = SweepSummary {
                per_lag: sweep
                    .per_lag
                    .iter()
                    .map(|s| LagStats {
                        lag: s.lag,
                        mean: s.mean,
                        std_dev: s.std_dev,
                    })
                    .collect(),
                reference: sweep.reference.as_ref().map(|r| r.value),
            };
            let json = out("sweep.json");
            io::write_summary(&json, name, &cfg, summary)?;
            record(&json);
        }
        Command::LongRun => {
            let rows = long_run(&cfg)?;
            let csv = out("long_run.csv");
            io::write_long_run_csv(&csv, &rows)?;
            record(&csv);
            let collapse = rows.iter().find(|r| r.eve_count == 1).map(|r| r.n);
            let json = out("long_run.json");
            io::write_summary(
                &json,
                name,
                &cfg,
                serde_json::json!({ "rows": rows.len(), "first_reported_eve_collapse": collapse }),
            )?;
            record(&json);
        }
        Command::CiFailure => {
            let ci = ci_failure_rates(&cfg)?;
            let csv = out("ci_failure.csv");
            io::write_ci_csv(&csv, &ci.rates)?;
            record(&csv);
            let json = out("ci_failure.json");
            io::write_summary(&json, name, &cfg, serde_json::json!({ "average_failure_rate": ci.average }))?;
            record(&json);
        }
        Command::OracleExact => {
            let summary = oracle_exact(&cfg)?;
            let json = out("oracle_exact.json");
            io::write_summary(&json, name, &cfg, summary)?;
            record(&json);
        }
        Command::OracleReplicate => {
            let reference = replicate_variance_reference(&cfg)?;
            let json = out("oracle_replicate.json");
            io::write_summary(&json, name, &cfg, reference)?;
            record(&json);
        }
    }
    Ok(written)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("pfvar: warning: could not configure {k} threads: {e}");
        }
    }
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("pfvar {}: error: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
