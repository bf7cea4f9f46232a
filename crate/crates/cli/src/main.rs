use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rhoreg::simlab::Estimator;
use rhoreg_cli::commands::{self, DataSource, FitRequest};
use rhoreg_cli::config::ExperimentConfig;
use rhoreg_cli::exit;

/// Robust regression by rho-estimation in one-parameter exponential
/// families.
///
/// Exit codes: 0 success, 1 usage, configuration or I/O error, 2 the
/// requested estimator does not exist on the data (MLE on separable data).
#[derive(Parser)]
#[command(name = "rhoreg", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit one estimator on a data file or on data drawn from a scenario.
    Fit(FitArgs),
    /// Monte-Carlo risk study over the scenarios of a config file.
    Simulate(SimArgs),
    /// Render the reports of a simulate run as text tables.
    Table {
        /// Directory holding the JSON reports.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RhoFlags {
    /// Stop once υ falls to this level.
    #[arg(long)]
    early_stop: Option<f64>,
    /// Iteration cap of the ρ search.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Evaluation budget per start of the sup search.
    #[arg(long)]
    max_evals: Option<usize>,
    /// Starts of the sup search.
    #[arg(long)]
    restarts: Option<usize>,
    /// Initial step of the sup search, as a fraction of the box width.
    #[arg(long)]
    sigma0_fraction: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV (header w1..wd,y,flag).
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    data: Option<PathBuf>,
    /// Built-in scenario to draw a dataset from.
    #[arg(long)]
    scenario: Option<String>,
    /// rho, mle or median.
    #[arg(long, default_value = "rho")]
    estimator: String,
    /// bernoulli, poisson, exponential or gaussian_fixed_sigma[:<sigma>].
    #[arg(long)]
    family: Option<String>,
    /// linear, loglog1pexp or log1pexp.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    box_half_width: Option<f64>,
    /// Write the JSON result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also save the fitted dataset as CSV.
    #[arg(long)]
    write_data: Option<PathBuf>,
    #[command(flatten)]
    rho: RhoFlags,
}

#[derive(Args)]
struct SimArgs {
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
    /// 100 replications unless `replications` is set.
    #[arg(long)]
    fast: bool,
    #[arg(long)]
    seed: Option<u64>,
}

fn apply_rho_flags(cfg: &mut ExperimentConfig, f: &RhoFlags) {
    cfg.rho.early_stop = f.early_stop.or(cfg.rho.early_stop);
    cfg.rho.max_iters = f.max_iters.or(cfg.rho.max_iters);
    cfg.sup_search.max_evals = f.max_evals.or(cfg.sup_search.max_evals);
    cfg.sup_search.restarts = f.restarts.or(cfg.sup_search.restarts);
    cfg.sup_search.sigma0_fraction = f.sigma0_fraction.or(cfg.sup_search.sigma0_fraction);
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.cmd {
        Cmd::Fit(a) => {
            let mut cfg = match &a.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            cfg.seed = a.seed.unwrap_or(cfg.seed);
            cfg.n = a.n.or(cfg.n);
            cfg.family = a.family.or(cfg.family);
            cfg.model = a.model.or(cfg.model);
            cfg.box_half_width = a.box_half_width.or(cfg.box_half_width);
            apply_rho_flags(&mut cfg, &a.rho);
            cfg.validate()?;
            let source = match (a.data, a.scenario) {
                (Some(p), _) => DataSource::File(p),
                (None, Some(s)) => DataSource::Scenario(s),
                (None, None) => anyhow::bail!("give --data or --scenario"),
            };
            commands::fit(&FitRequest {
                config: cfg,
                source,
                estimator: Estimator::from_id(&a.estimator)?,
                out: a.out,
                write_data: a.write_data,
            })
        }
        Cmd::Simulate(a) => {
            let mut cfg = ExperimentConfig::load(&a.config)?;
            cfg.output_dir = a.out.or(cfg.output_dir);
            cfg.replications = a.replications.or(cfg.replications);
            cfg.fast |= a.fast;
            cfg.seed = a.seed.unwrap_or(cfg.seed);
            cfg.validate()?;
            commands::install_thread_pool(&cfg)?;
            commands::simulate(&cfg, &PathBuf::from("reports"))
        }
        Cmd::Table { dir } => commands::table(&dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::ERROR } else { exit::OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::ERROR)
        }
    }
}
