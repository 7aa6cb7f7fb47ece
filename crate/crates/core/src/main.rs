use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use cape_core::harness::{
    emit_report, exit_code, load_report, run_experiment, sensitivity_csv, sensitivity_sweep,
    wealth_table_csv, CapeMode, ExperimentSpec, ReportFormat, StrategyKind, BENCHMARK_GAMMAS,
};
use cape_core::market_data::{generate_synthetic, write_csv_file, SyntheticMarketSpec};
use cape_core::{Error, Result};

#[derive(Parser)]
#[command(name = "cape", version, about = "Commission-aware portfolio ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the strategies of a config and write the report.
    Run(RunArgs),
    /// Run every strategy over the published commission grid.
    Sweep(RunArgs),
    /// Compare naive and walk-forward CAPE.
    Calibrate(RunArgs),
    /// Walk-forward CAPE wealth as a function of the window size.
    Sensitivity {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated window sizes.
        #[arg(long, value_delimiter = ',', default_values_t = vec![10usize, 25, 50, 100])]
        windows: Vec<usize>,
    },
    /// Write a synthetic market to CSV.
    Synth(SynthArgs),
    /// Re-emit tables from a saved report.json.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Commission rates; replaces the config's list.
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// Fixed lambda for naive CAPE.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    t: usize,
    #[arg(long, value_enum, default_value_t = Model::Iid)]
    model: Model,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 0.02)]
    sigma: f64,
    #[arg(long, default_value_t = 1.05)]
    up: f64,
    #[arg(long, default_value_t = 0.95)]
    down: f64,
    #[arg(long, default_value_t = 0.5)]
    switch_probability: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Naive,
    Wf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Iid,
    Mr,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
            Format::Both => ReportFormat::Both,
        }
    }
}

fn load_spec(args: &RunArgs) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(&args.config)?;
    if !args.gamma.is_empty() {
        spec.gammas = args.gamma.clone();
    }
    if let Some(l) = args.lambda {
        spec.cape.lambda = l;
    }
    if let Some(m) = args.mode {
        spec.cape.mode = match m {
            Mode::Naive => CapeMode::Naive,
            Mode::Wf => CapeMode::Wf,
        };
    }
    if let Some(out) = &args.out {
        spec.output_dir = out.clone();
    }
    if args.seed.is_some() {
        spec.seed = args.seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn run_and_emit(spec: &ExperimentSpec, format: Format) -> Result<()> {
    let report = run_experiment(spec)?;
    for cell in report.cells.iter().filter(|c| c.error.is_some()) {
        warn!(
            "{} at gamma {}: {}",
            cell.strategy,
            cell.gamma,
            cell.error.as_deref().unwrap_or("")
        );
    }
    let written = emit_report(&report, &spec.output_dir, format.into())?;
    info!(
        "wrote {} files to {}",
        written.len(),
        spec.output_dir.display()
    );
    print!("{}", wealth_table_csv(&report));
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run_and_emit(&load_spec(&args)?, args.format),
        Command::Sweep(args) => {
            let mut spec = load_spec(&args)?;
            if args.gamma.is_empty() {
                spec.gammas = BENCHMARK_GAMMAS.to_vec();
            }
            run_and_emit(&spec, args.format)
        }
        Command::Calibrate(args) => {
            let mut spec = load_spec(&args)?;
            spec.strategies = vec![StrategyKind::CapeNaive, StrategyKind::CapeWf];
            run_and_emit(&spec, args.format)
        }
        Command::Sensitivity { run, windows } => {
            let spec = load_spec(&run)?;
            let rows = sensitivity_sweep(&spec, &windows)?;
            let csv = sensitivity_csv(&rows);
            std::fs::create_dir_all(&spec.output_dir).map_err(|source| Error::Io {
                path: spec.output_dir.clone(),
                source,
            })?;
            let path = spec.output_dir.join("sensitivity.csv");
            std::fs::write(&path, &csv).map_err(|source| Error::Io { path, source })?;
            print!("{csv}");
            Ok(())
        }
        Command::Synth(a) => {
            let spec = match a.model {
                Model::Iid => SyntheticMarketSpec::iid_lognormal(a.n, a.t, a.mu, a.sigma, a.seed),
                Model::Mr => SyntheticMarketSpec::mean_reverting(
                    a.n,
                    a.t,
                    a.up,
                    a.down,
                    a.switch_probability,
                    a.seed,
                ),
            };
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
            let market = generate_synthetic(&spec)?;
            write_csv_file(&market, &a.out)
        }
        Command::Report { input, out, format } => {
            let report = load_report(&input)?;
            emit_report(&report, &out, format.into())?;
            print!("{}", wealth_table_csv(&report));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
