use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rcar::simulate::InitMode;
use rcar_cli::config::{parse_init, Config, Pathway};
use rcar_cli::error::{exit, CliError};
use rcar_cli::{cmd_analyze, cmd_estimate, cmd_mc, cmd_oracle, cmd_simulate, commands};

#[derive(Parser)]
#[command(name = "rcar", version, about = "Random-coefficient autoregressions: moments, simulation, estimation")]
struct Cli {
    /// Worker threads for simulation and experiments.
    #[arg(long, global = true, env = "RCAR_THREADS")]
    threads: Option<usize>,
    /// Print a configuration with every default written out, then exit.
    #[arg(long, exclusive = true)]
    config_reference: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long, env = "RCAR_SEED")]
    seed: Option<u64>,
    /// Series truncation tolerance (`analysis.series.tol`).
    #[arg(long)]
    tol: Option<f64>,
    /// Series term cap (`analysis.series.max_terms`).
    #[arg(long)]
    max_terms: Option<usize>,
    /// Initial state: exact_stationary, burn_in[:BURN] or ma_truncation:TERMS.
    #[arg(long, value_parser = parse_init)]
    init: Option<InitMode>,
    /// Write the report here instead of standard output.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Stationarity verdicts, covariance tables and spectral density for [model].
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a panel from [model] into a CSV file.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Panel CSV to write; the sidecar and manifest go next to it.
        #[arg(long)]
        panel: PathBuf,
        /// Also write the truth sidecar.
        #[arg(long)]
        keep_truth: bool,
    },
    /// Estimate covariances, Ω̂ and per-individual fits from a panel CSV.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Panel CSV to read.
        panel: PathBuf,
        /// cross_sectional, per_individual or both.
        #[arg(long)]
        pathway: Option<Pathway>,
        /// Autoregressive order of the panel.
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        max_lag: Option<usize>,
    },
    /// Run the Monte Carlo experiment in [experiment].
    Mc {
        #[command(flatten)]
        common: Common,
    },
    /// Print a reference value; `oracle list` shows the registry.
    Oracle { name: String, args: Vec<String> },
}

fn load(common: &Common) -> Result<(Config, u64), CliError> {
    let mut config = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::parse("")?,
    };
    if let Some(t) = common.tol {
        config.analysis.series.tol = t;
    }
    if let Some(m) = common.max_terms {
        config.analysis.series.max_terms = m;
    }
    if let Some(i) = &common.init {
        config.simulation.init = i.clone();
    }
    let seed = common.seed.unwrap_or(config.seed);
    config.seed = seed;
    Ok((config, seed))
}

fn reference_document() -> String {
    format!(
        "# rcar configuration reference: every key with its default value.\n\
         # [model] and [experiment] have no defaults; the values below are examples.\n\
         # Regenerate with `rcar --config-reference`.\n\n{}",
        Config::reference().to_toml()
    )
}

fn print_or_write(text: Option<String>) {
    if let Some(t) = text {
        print!("{t}");
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let Some(command) = cli.command else {
        if cli.config_reference {
            print!("{}", reference_document());
            return Ok(exit::OK);
        }
        return Err(CliError::Config("no subcommand given; see --help".into()));
    };
    match command {
        Command::Analyze { common } => {
            let (config, _) = load(&common)?;
            let report = cmd_analyze(&config)?;
            print_or_write(commands::emit(&report, common.out.as_deref())?);
            Ok(exit::OK)
        }
        Command::Simulate { common, panel, keep_truth } => {
            let (mut config, seed) = load(&common)?;
            config.simulation.keep_truth |= keep_truth;
            let (_, record) = cmd_simulate(&config, seed, &panel)?;
            eprintln!(
                "seed={} individuals={} horizon={} rows={} panel={}",
                seed,
                record.result.individuals,
                record.result.horizon,
                record.result.rows,
                panel.display()
            );
            if let Some(out) = &common.out {
                record.write(out)?;
            }
            Ok(exit::OK)
        }
        Command::Estimate { common, panel, pathway, order, max_lag } => {
            let (mut config, _) = load(&common)?;
            if let Some(p) = pathway {
                config.estimation.pathway = p;
            }
            if order.is_some() {
                config.estimation.order = order;
            }
            if let Some(u) = max_lag {
                config.estimation.max_lag = u;
            }
            let report = cmd_estimate(&config, &panel)?;
            print_or_write(commands::emit(&report, common.out.as_deref())?);
            Ok(exit::OK)
        }
        Command::Mc { common } => {
            let (config, seed) = load(&common)?;
            let report = cmd_mc(&config, seed)?;
            print_or_write(commands::emit(&report, common.out.as_deref())?);
            for c in &report.result.checks {
                eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if report.result.passed { exit::OK } else { exit::ACCEPTANCE })
        }
        Command::Oracle { name, args } => {
            print!("{}", cmd_oracle(&name, &args)?);
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("rcar: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

