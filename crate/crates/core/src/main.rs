use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spatial_bnp::harness::{
    read_sample, run_power_comparison, run_power_study, run_single_test, run_single_two_sample, Method, PriorConfig,
    SingleOptions, StudyConfig, FULL_SCALE_REPLICATIONS,
};
use spatial_bnp::Error;

#[derive(Parser)]
#[command(name = "spatial-bnp", version, about = "Dirichlet-process tests for multivariate location")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-sample test of H0: spatial median = theta0.
    Test1 {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated null location.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        theta0: Vec<f64>,
        #[command(flatten)]
        common: TestArgs,
    },
    /// Two-sample test of equal spatial medians.
    Test2 {
        #[arg(long)]
        data1: PathBuf,
        #[arg(long)]
        data2: PathBuf,
        #[command(flatten)]
        common: TestArgs,
    },
    /// Monte Carlo power table from a study file.
    Power(StudyArgs),
    /// Theoretical against empirical local power from a power-curve file.
    Powercmp(StudyArgs),
}

#[derive(Args)]
struct TestArgs {
    /// Comma-separated methods: npbayes, bootstrap, sign, rank, signed_rank, hotelling.
    #[arg(long, value_delimiter = ',', default_value = "npbayes")]
    method: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Posterior draws B.
    #[arg(long)]
    draws: Option<usize>,
    /// Prior mass M.
    #[arg(long)]
    mass: Option<f64>,
    /// Stick-breaking truncation; automatic when omitted.
    #[arg(long)]
    truncation: Option<usize>,
    /// Sign-flip resamples for one-sample score methods.
    #[arg(long)]
    flips: Option<usize>,
    /// Skip one header line in each data file.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the CSV table here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restore the full replication count.
    #[arg(long, conflicts_with = "reps")]
    full_scale: bool,
    /// Worker threads; overrides the config file and SPATIAL_BNP_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
}

fn options(args: &TestArgs) -> Result<SingleOptions, Error> {
    let methods = args.method.iter().map(|m| m.parse()).collect::<Result<Vec<Method>, _>>()?;
    if methods.is_empty() {
        return Err(Error::Config("at least one method is required".into()));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", args.alpha)));
    }
    let mut prior = PriorConfig::default();
    if let Some(d) = args.draws {
        prior.draws = d;
    }
    if let Some(m) = args.mass {
        if m <= 0.0 {
            return Err(Error::Config("mass must be positive".into()));
        }
        prior.mass = m;
    }
    prior.truncation = args.truncation;
    Ok(SingleOptions { methods, alpha: args.alpha, seed: args.seed, prior, flips: args.flips })
}

fn study(args: &StudyArgs) -> Result<StudyConfig, Error> {
    let mut config = StudyConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    if args.full_scale {
        config = config.with_replications(FULL_SCALE_REPLICATIONS)?;
    } else if let Some(reps) = args.reps {
        config = config.with_replications(reps)?;
    }
    if args.workers.is_some() {
        config.file.workers = args.workers;
    }
    Ok(config)
}

fn write_out(path: &Option<PathBuf>, csv: &str) -> Result<(), Error> {
    if let Some(path) = path {
        std::fs::write(Path::new(path), csv)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Test1 { data, theta0, common } => {
            let opts = options(&common)?;
            let sample = read_sample(&data, common.header)?;
            let report = run_single_test(&sample, &theta0, &opts)?;
            print!("{report}");
            Ok(!report.any_failed())
        }
        Command::Test2 { data1, data2, common } => {
            let opts = options(&common)?;
            let s1 = read_sample(&data1, common.header)?;
            let s2 = read_sample(&data2, common.header)?;
            let report = run_single_two_sample(&s1, &s2, &opts)?;
            print!("{report}");
            Ok(!report.any_failed())
        }
        Command::Power(args) => {
            let config = study(&args)?;
            let table = run_power_study(&config)?;
            print!("{}", table.to_markdown());
            write_out(&args.out, &table.to_csv())?;
            Ok(table.rows.iter().all(|r| r.cells.iter().all(|c| c.error.is_none())))
        }
        Command::Powercmp(args) => {
            let config = study(&args)?;
            let table = run_power_comparison(&config)?;
            print!("{}", table.to_markdown());
            write_out(&args.out, &table.to_csv())?;
            Ok(table.rows.iter().all(|r| r.error.is_none()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
