//! Batch front end: `simulate`, `fit`, `report` and `predict-grid`.
//!
//! Exit codes: 0 success, 2 usage, 3 validation or I/O, 4 numerical failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::path::PathBuf;

use mmm_core::Error;

mod fit;
mod predict;
mod report;
mod simulate;

pub use fit::fit;
pub use predict::predict_grid;
pub use report::report;
pub use simulate::simulate;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "mmm", version, about = "Multivariate mixed membership models for grouped categorical data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with its ground truth.
    Simulate(SimulateArgs),
    /// Run a chain and write (or extend) a chain archive.
    Fit(FitArgs),
    /// Posterior predictive and summary tables from an archive.
    Report(ReportArgs),
    /// Predict the spatial effects of a space-time fit on a grid.
    PredictGrid(PredictArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// 1, 2, 3, 4 or misspec.
    #[arg(long, value_parser = ["1", "2", "3", "4", "misspec"])]
    pub scenario: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Variables per group.
    #[arg(long, default_value_t = 5)]
    pub group_size: usize,
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Output directory (dataset.csv, schema.json, truth.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Plain,
    Spatiotemporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Order {
    MeanFirst,
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Field {
    Kernels,
    Lambda,
    Z,
    Omega,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Archive directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Variant::Plain)]
    pub variant: Variant,
    /// Total sweeps, including burn-in and any sweeps already archived.
    #[arg(long, default_value_t = 5000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Per-draw fields kept besides μ and Σ.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Field::Kernels, Field::Lambda])]
    pub retain: Vec<Field>,
    #[arg(long, value_enum, default_value_t = Order::MeanFirst)]
    pub order: Order,
    /// Hyperparameter JSON replacing the defaults.
    #[arg(long)]
    pub hyper: Option<PathBuf>,
    /// Space-time hyperparameter JSON.
    #[arg(long)]
    pub st_hyper: Option<PathBuf>,
    /// Continue the chain archived in `--out` up to `--iterations`; the
    /// other chain settings come from its manifest.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Output directory for the CSV tables and summary.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.9])]
    pub quantiles: Vec<f64>,
    /// Write the admissible-condition table.
    #[arg(long)]
    pub admissibility: bool,
    #[arg(long, default_value_t = 1.7)]
    pub c1: f64,
    #[arg(long, default_value_t = 0.35)]
    pub c2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// One outcome rate per subject (single-column CSV with a header).
    #[arg(long)]
    pub rates: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub min_count: usize,
    /// 1-based groups for the expected odds ratio, e.g. `2,1`.
    #[arg(long, value_delimiter = ',')]
    pub odds: Option<Vec<usize>>,
    /// Credible level of the correlation intervals.
    #[arg(long, default_value_t = 0.9)]
    pub level: f64,
    #[arg(long, default_value_t = 200)]
    pub pilot: usize,
    #[arg(long, default_value_t = 0)]
    pub max_switches: usize,
    /// Ground truth from `simulate`, for score errors.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// CSV with `x` and `y` columns.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        _ if e.is_numeric() => EXIT_NUMERIC,
        Error::Argument(_) => EXIT_USAGE,
        Error::AtIteration { source, .. } => exit_code(source),
        _ => EXIT_VALIDATION,
    }
}

pub fn execute(cli: Cli) -> mmm_core::Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Fit(a) => fit(&a),
        Command::Report(a) => report(&a),
        Command::PredictGrid(a) => predict_grid(&a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn csv_err(path: &std::path::Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Config(format!("{}: {e}", path.display()))
}

fn io_err(path: &std::path::Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.into(), source }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Numeric("chol".into())), EXIT_NUMERIC);
        let wrapped = Error::AtIteration { iteration: 3, source: Box::new(Error::Numeric("x".into())) };
        assert_eq!(exit_code(&wrapped), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::Validation("v".into())), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::Config("c".into())), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::Argument("a".into())), EXIT_USAGE);
    }

    #[test]
    fn fit_defaults() {
        let cli = Cli::try_parse_from(["mmm", "fit", "--data", "d.csv", "--schema", "s.json", "--out", "o"]).unwrap();
        let Command::Fit(a) = cli.command else { panic!("not fit") };
        assert_eq!((a.iterations, a.burn_in, a.thin, a.seed), (5000, 1000, 1, 1));
        assert_eq!(a.retain, [Field::Kernels, Field::Lambda]);
        assert_eq!(a.variant, Variant::Plain);
        assert!(!a.resume);
    }

    #[test]
    fn report_defaults() {
        let cli =
            Cli::try_parse_from(["mmm", "report", "--archive", "a", "--data", "d", "--schema", "s", "--out", "o"])
                .unwrap();
        let Command::Report(a) = cli.command else { panic!("not report") };
        assert_eq!((a.c1, a.c2, a.threshold), (1.7, 0.35, 0.5));
        assert_eq!(a.quantiles, [0.1, 0.9]);
        assert_eq!(a.min_count, 3);
    }
}
