//! `charnet`: extract, aggregate, compare and chart character networks.

mod commands;
mod report;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use charnet_core::corpus::UnitKind;
use clap::{ArgAction, Args, Parser, Subcommand};
use thiserror::Error;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (bad or missing flags)
  3  input/output error (missing file, unwritable directory)
  4  malformed input file (the message names file and line)
  5  character registry rejected
  6  analysis failed (e.g. constant network, too few nodes)
  7  survey server failed";

#[derive(Debug, Parser)]
#[command(name = "charnet", version, about, after_help = EXIT_CODES)]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the co-occurrence network of a story.
    Extract(ExtractArgs),
    /// Turn survey responses into one normalized network per task.
    SurveyAggregate(SurveyArgs),
    /// Pearson correlation of two networks with a QAP p-value.
    Compare(CompareArgs),
    /// Importance curves over narrative time.
    Climax(ClimaxArgs),
    /// Node and edge counts, density and average degree.
    Metrics(MetricsArgs),
    /// Logistic regression of respondent factors on task agreement.
    Regress(RegressArgs),
    /// Run the survey collector.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct StoryArgs {
    /// Plain-text story; paragraphs separated by blank lines.
    #[arg(long)]
    story: PathBuf,
    /// Character registry (TOML).
    #[arg(long)]
    registry: PathBuf,
    /// Co-occurrence window.
    #[arg(long, default_value = "paragraph")]
    unit: UnitKind,
    /// Use the bare frequency product, without the +1.
    #[arg(long)]
    no_plus_one: bool,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[command(flatten)]
    story: StoryArgs,
    /// Also write a copy scaled so its strongest link equals this value.
    #[arg(long, value_parser = positive)]
    pattern_max: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SurveyArgs {
    /// Response bundle (JSON) or line file.
    #[arg(long)]
    responses: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    /// Strongest averaged link is scaled to this value.
    #[arg(long, default_value_t = 10.0, value_parser = positive)]
    pattern_max: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Preprocess {
    /// Delete links more than K standard deviations from the mean first.
    #[arg(long, value_parser = positive)]
    sigma: Option<f64>,
    /// Binarize at weight >= T first.
    #[arg(long, value_parser = positive, conflicts_with = "sigma")]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Edge-list or matrix file.
    a: PathBuf,
    b: PathBuf,
    #[arg(long, default_value_t = 1000)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Leave out pairs that are zero in both networks.
    #[arg(long)]
    exclude_zero_pairs: bool,
    #[command(flatten)]
    pre: Preprocess,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClimaxArgs {
    #[command(flatten)]
    story: StoryArgs,
    /// Add the human curve from these responses' Task 1 entries.
    #[arg(long)]
    responses: Option<PathBuf>,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    parts: u32,
    #[arg(long, default_value_t = 0.05, value_parser = non_negative)]
    tolerance: f64,
    /// Skip the SVG charts.
    #[arg(long)]
    no_chart: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    network: PathBuf,
    #[command(flatten)]
    pre: Preprocess,
    /// Also report 2m / (n (n - 1)).
    #[arg(long)]
    undirected_density: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RegressArgs {
    /// CSV with a header and a 0/1 `outcome` column.
    #[arg(long, conflicts_with_all = ["responses", "registry"], required_unless_present = "responses")]
    design: Option<PathBuf>,
    /// Build the design from complete respondents instead.
    #[arg(long, requires = "registry")]
    responses: Option<PathBuf>,
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Agreement cut-off for outcome 1; the median when omitted.
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Registry of a story to offer (repeatable).
    #[arg(long, required = true)]
    registry: Vec<PathBuf>,
    #[arg(long, default_value = "charnet-data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a non-negative number")),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {message}")]
    Registry { path: String, message: String },
    #[error("{0}")]
    Analysis(String),
    #[error("server: {0}")]
    Server(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 3,
            CliError::Format { .. } => 4,
            CliError::Registry { .. } => 5,
            CliError::Analysis(_) => 6,
            CliError::Server(_) => 7,
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let style = if std::env::var_os("NO_COLOR").is_some() {
        env_logger::WriteStyle::Never
    } else {
        env_logger::WriteStyle::Auto
    };
    env_logger::Builder::new()
        .filter_level(level)
        .write_style(style)
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Extract(a) => commands::extract(a),
        Command::SurveyAggregate(a) => commands::survey_aggregate(a),
        Command::Compare(a) => commands::compare(a),
        Command::Climax(a) => commands::climax(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Regress(a) => commands::regress(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("charnet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
