//! `msm`: validate maps, detect shifts, trace them, simulate data.
#![allow(clippy::result_large_err)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use msm_core::attribution::{AttributionConfig, Mode};
use msm_core::dataset::DatasetError;
use msm_core::format::FormatError;
use msm_core::mechanisms::{Divergence, FitConfig, ShiftConfig};
use msm_core::report::{ConfigEcho, ReportDocument};
use msm_core::simulator::{generate, Scenario, ScenarioConfig, SimulatorError};
use msm_core::traversal::{detect_alerts, trace, TraceConfig, TraceError, DEFAULT_ALERT_LEVEL};
use msm_core::{parse_map, serialize_map, SystemMap, WindowedDataset};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "msm", version, about = "Trace distribution shifts through a layered map of an ML system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a map file and report positioned diagnostics.
    Validate { map: PathBuf },
    /// Run a shift test on every system-view variable.
    Detect(DetectArgs),
    /// Trace an alert from the system view towards its source.
    Trace(TraceArgs),
    /// Write simulated churn-system data and the matching map.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Exact,
    Sampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum DivergenceArg {
    Jsd,
    Tv,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    map: PathBuf,
    data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALERT_LEVEL)]
    alpha: f64,
    /// Permutations per shift test.
    #[arg(long, default_value_t = 1000)]
    permutations: usize,
    #[arg(long, default_value_t = 8)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct TraceArgs {
    map: PathBuf,
    data: PathBuf,
    /// System-view variable to trace, e.g. system.promo_ranking.
    #[arg(long)]
    alert: String,
    #[arg(long, default_value_t = 8)]
    bins: usize,
    #[arg(long, default_value_t = 1.0)]
    smoothing: f64,
    #[arg(long, default_value_t = 10.0)]
    window_prior: f64,
    /// Minimum top share for a concentrated outcome.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Shifts below this are negligible.
    #[arg(long, default_value_t = 0.002)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.2)]
    branch_cutoff: f64,
    #[arg(long, value_enum, default_value = "auto")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "jsd")]
    divergence: DivergenceArg,
    /// Player orders sampled in sampled mode.
    #[arg(long, default_value_t = 500)]
    permutations: usize,
    #[arg(long, default_value_t = 3)]
    max_branches: usize,
    #[arg(long)]
    eager_environment: bool,
    /// Significance level of the alerts listed alongside the trace.
    #[arg(long, default_value_t = DEFAULT_ALERT_LEVEL)]
    alpha: f64,
    /// Permutations per shift test for the listed alerts.
    #[arg(long, default_value_t = 1000)]
    test_permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: String,
    /// Rows per window.
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_data: PathBuf,
    #[arg(long)]
    out_map: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{source}")]
    Map { path: PathBuf, source: FormatError },
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: DatasetError },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Data { source: DatasetError::Io(_), .. } => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn load_map(path: &Path) -> Result<SystemMap, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_map(&text).map_err(|source| CliError::Map { path: path.to_path_buf(), source })
}

fn load_data(map: &SystemMap, path: &Path) -> Result<WindowedDataset, CliError> {
    WindowedDataset::load_csv_path(map, path).map_err(|source| CliError::Data { path: path.to_path_buf(), source })
}

fn emit(output: &Output, doc: &ReportDocument) -> Result<(), CliError> {
    let text = match output.format {
        Format::Text => doc.to_text(),
        Format::Json => doc.to_json(),
    };
    match &output.out {
        Some(path) => fs::write(path, text).map_err(io_err(path)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn validate(path: &Path) -> Result<(), CliError> {
    let map = load_map(path)?;
    let views = map.views().len();
    let nodes = map.nodes().count();
    println!("{}: ok (map '{}', {views} views, {nodes} nodes)", path.display(), map.name());
    Ok(())
}

fn detect(args: &DetectArgs) -> Result<(), CliError> {
    let map = load_map(&args.map)?;
    let ds = load_data(&map, &args.data)?;
    let shift = ShiftConfig { permutations: args.permutations, bins: args.bins, seed: args.seed };
    let alerts = detect_alerts(&map, &ds, args.alpha, &shift)?;
    let mut trace_config = TraceConfig::default();
    trace_config.fit.bins = args.bins;
    trace_config.attribution.seed = args.seed;
    let mut doc = ReportDocument::new(map.name(), ConfigEcho::new(&trace_config, &shift, args.alpha), alerts, None);
    doc.warnings = ds.warnings().to_vec();
    emit(&args.output, &doc)
}

fn run_trace(args: &TraceArgs) -> Result<(), CliError> {
    let map = load_map(&args.map)?;
    let ds = load_data(&map, &args.data)?;
    let config = TraceConfig {
        fit: FitConfig { bins: args.bins, smoothing: args.smoothing, window_prior: args.window_prior },
        attribution: AttributionConfig {
            divergence: match args.divergence {
                DivergenceArg::Jsd => Divergence::JensenShannon,
                DivergenceArg::Tv => Divergence::TotalVariation,
            },
            mode: match args.mode {
                ModeArg::Auto => Mode::Auto,
                ModeArg::Exact => Mode::Exact,
                ModeArg::Sampled => Mode::Sampled,
            },
            tau: args.tau,
            epsilon: args.epsilon,
            branch_cutoff: args.branch_cutoff,
            permutations: args.permutations,
            seed: args.seed,
            ..AttributionConfig::default()
        },
        max_branches: args.max_branches,
        eager_environment: args.eager_environment,
    };
    let report = trace(&map, &ds, &args.alert, &config)?;
    let shift = ShiftConfig { permutations: args.test_permutations, bins: args.bins, seed: args.seed };
    let alerts = detect_alerts(&map, &ds, args.alpha, &shift)?;
    let doc = ReportDocument::new(map.name(), ConfigEcho::new(&config, &shift, args.alpha), alerts, Some(report));
    emit(&args.output, &doc)
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let scenario: Scenario = args.scenario.parse()?;
    let (map, ds) = generate(&ScenarioConfig::new(scenario, args.n, args.seed))?;
    let mut csv = Vec::new();
    ds.write_csv(&mut csv).map_err(|source| CliError::Data { path: args.out_data.clone(), source })?;
    fs::write(&args.out_data, csv).map_err(io_err(&args.out_data))?;
    if let Some(path) = &args.out_map {
        fs::write(path, serialize_map(&map)).map_err(io_err(path))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { map } => validate(map),
        Command::Detect(args) => detect(args),
        Command::Trace(args) => run_trace(args),
        Command::Simulate(args) => simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
