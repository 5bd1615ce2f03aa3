//! `gammavol` batch front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gammavol::{Error, ErrorClass, Result};

use crate::commands::OutDir;

#[derive(Parser)]
#[command(name = "gammavol", version, about = "Simulate gamma-driven monotone SDEs and estimate their volatility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; its keys override the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Override any config key, e.g. `--set params.alpha=2` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args, Default)]
struct FitFlags {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    prior_alpha: Option<f64>,
    #[arg(long)]
    prior_beta: Option<f64>,
    #[arg(long)]
    level: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Euler-simulate a path and its hitting record.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        stop_level: Option<f64>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        record_every: Option<u64>,
    },
    /// Closed-form posterior from a hitting record or a path.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fit: FitFlags,
        #[arg(long)]
        n: Option<u64>,
    },
    /// Data-augmentation sampler for discretely observed paths.
    FitDiscrete {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fit: FitFlags,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
    },
    /// Realized quadratic variation fit of an equidistant series.
    Rqv {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fit: FitFlags,
        /// Use the sampler instead of grid-snapped hitting times.
        #[arg(long)]
        mcmc: bool,
    },
    /// Posterior contraction study.
    ExperimentContraction {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        n_values: Option<Vec<u64>>,
    },
    /// Frequentist coverage of the credible bands.
    ExperimentCoverage {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Monte Carlo checks of hitting-time concentration and the overshoot bound.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicates: Option<usize>,
    },
}

/// Collects `key=json` overrides for flags that were given.
#[derive(Default)]
struct Sets(Vec<String>);

impl Sets {
    fn put<T: serde::Serialize>(&mut self, key: &str, v: Option<T>) {
        if let Some(v) = v {
            let json = serde_json::to_string(&v).expect("flag values serialize");
            self.0.push(format!("{key}={json}"));
        }
    }

    fn fit(&mut self, f: FitFlags) {
        self.put("input", f.input);
        self.put("k", f.k);
        self.put("prior_alpha", f.prior_alpha);
        self.put("prior_beta", f.prior_beta);
        self.put("level", f.level);
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let mut s = Sets::default();
    match cli.command {
        Command::Simulate { common, n, dt, stop_level, bins, max_steps, record_every } => {
            s.put("n", n);
            s.put("dt", dt);
            s.put("stop_level", stop_level);
            s.put("bins", bins);
            s.put("max_steps", max_steps);
            s.put("record_every", record_every);
            s.put("seed", common.seed);
            execute(&common, s, commands::simulate)
        }
        Command::Fit { common, fit, n } => {
            s.fit(fit);
            s.put("n", n);
            execute(&common, s, commands::fit)
        }
        Command::FitDiscrete { common, fit, n, chains, iterations, burn_in } => {
            s.fit(fit);
            s.put("n", n);
            s.put("chains", chains);
            s.put("chain.iterations", iterations);
            s.put("chain.burn_in", burn_in);
            s.put("seed", common.seed);
            execute(&common, s, commands::fit_discrete)
        }
        Command::Rqv { common, fit, mcmc } => {
            s.fit(fit);
            s.put("mcmc", mcmc.then_some(true));
            s.put("seed", common.seed);
            execute(&common, s, commands::rqv)
        }
        Command::ExperimentContraction { common, replicates, n_values } => {
            s.put("replicates", replicates);
            s.put("n_values", n_values);
            s.put("seed", common.seed);
            execute(&common, s, commands::experiment_contraction)
        }
        Command::ExperimentCoverage { common, replicates, n, k, level } => {
            s.put("replicates", replicates);
            s.put("n", n);
            s.put("k", k);
            s.put("level", level);
            s.put("seed", common.seed);
            execute(&common, s, commands::experiment_coverage)
        }
        Command::Verify { common, replicates } => {
            s.put("hitting.replicates", replicates);
            s.put("overshoot.replicates", replicates);
            s.put("seed", common.seed);
            execute(&common, s, commands::verify)
        }
    }
}

/// Loads the config (file, then `--set`, then dedicated flags) and runs `body`.
fn execute<T, F>(common: &Common, flags: Sets, body: F) -> Result<Vec<PathBuf>>
where
    T: Default + serde::Serialize + serde::de::DeserializeOwned,
    F: FnOnce(&T, &mut OutDir) -> Result<()>,
{
    let mut sets = common.sets.clone();
    sets.extend(flags.0);
    let cfg = config::load(common.config.as_deref(), &sets)?;
    let mut out = prepare(common)?;
    body(&cfg, &mut out)?;
    Ok(out.into_written())
}

fn prepare(common: &Common) -> Result<OutDir> {
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Error::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Numerical(format!("cannot start thread pool: {e}")))?;
    }
    OutDir::new(&common.out)
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Validation => 2,
        ErrorClass::Io => 3,
        ErrorClass::Numerical => 4,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
