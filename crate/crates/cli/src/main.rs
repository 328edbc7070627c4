//! `aniso`: fit, score and evaluate isolation-forest detectors from the
//! command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use aniso::io::{LabelColumn, LoadOptions};
use aniso::{Alpha, ScorerChoice};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "aniso", version, about = "Isolation forest with tunable aggregation and volume scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a detector and write it to a model file.
    Fit {
        #[command(flatten)]
        input: DataArgs,
        #[command(flatten)]
        detector: DetectorArgs,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a dataset with a saved model (`index,score` CSV).
    Score {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: DataArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the AUCROC of a saved or freshly fitted detector on labeled data.
    Eval {
        /// Saved model; when omitted a detector is fitted on `--data`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Column holding 0/1 labels (index or `last`).
        #[arg(long, default_value = "last", value_parser = parse_label_column)]
        label_column: LabelColumn,
        #[arg(long, default_value_t = ',', value_parser = parse_delimiter)]
        delimiter: char,
        #[arg(long)]
        header: bool,
        #[command(flatten)]
        detector: DetectorArgs,
    },
    /// Run the synthetic cube / sphere experiments and emit a JSON report.
    Toy(ToyArgs),
    /// Evaluate detector variants on every CSV in a directory and rank them.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Column holding 0/1 labels (index or `last`); it is not used as a feature.
    #[arg(long, value_parser = parse_label_column)]
    label_column: Option<LabelColumn>,
    #[arg(long, default_value_t = ',', value_parser = parse_delimiter)]
    delimiter: char,
    /// The first row is a header.
    #[arg(long)]
    header: bool,
}

impl DataArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions { label_column: self.label_column, delimiter: self.delimiter as u8, has_header: self.header }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BoundingArg {
    PerTree,
    Global,
}

#[derive(Debug, Args)]
struct DetectorArgs {
    #[arg(long, default_value = "depth", value_parser = parse_scorer)]
    scorer: ScorerChoice,
    #[arg(long, default_value = "0", value_parser = parse_alpha, allow_hyphen_values = true)]
    alpha: Alpha,
    #[arg(long, default_value_t = 100)]
    n_estimators: usize,
    #[arg(long, default_value_t = 256)]
    subsample: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Expected anomaly fraction in (0, 0.5]; fits the decision threshold.
    #[arg(long, conflicts_with = "tau")]
    contamination: Option<f64>,
    /// Fixed decision threshold on the aggregate score.
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<f64>,
    /// Score leaves by depth / c(psi) without the multi-point correction.
    #[arg(long)]
    strict_depth: bool,
    /// Reference box of the volume scorer.
    #[arg(long, value_enum, default_value_t = BoundingArg::PerTree)]
    bounding: BoundingArg,
    /// Total relative growth of the reference box per dimension.
    #[arg(long, default_value_t = aniso::scoring::DEFAULT_BOUNDING_MARGIN)]
    margin: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Cube,
    Sphere,
}

#[derive(Debug, Args)]
struct ToyArgs {
    #[arg(long, value_enum)]
    experiment: ExperimentArg,
    /// Dimension(s), comma separated; several values give a JSON array.
    #[arg(long, value_delimiter = ',', required = true)]
    d: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,inf", value_parser = parse_alpha, allow_hyphen_values = true)]
    alphas: Vec<Alpha>,
    #[arg(long, value_delimiter = ',', default_value = "depth", value_parser = parse_scorer)]
    scorers: Vec<ScorerChoice>,
    #[arg(long, default_value_t = 127)]
    n_inliers: usize,
    /// First coordinate of the cube outlier.
    #[arg(long, default_value_t = 1.05)]
    offset: f64,
    /// Gaussian noise added to sphere inliers.
    #[arg(long, default_value_t = aniso::experiments::DEFAULT_SPHERE_NOISE)]
    noise: f64,
    #[arg(long, default_value_t = 100)]
    n_estimators: usize,
    #[arg(long, default_value_t = 256)]
    subsample: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the sorted per-tree scores of every point of trial 0
    /// (first dimension, first scorer) as CSV.
    #[arg(long)]
    profiles: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Directory of CSV files with the 0/1 label in the last column.
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,inf", value_parser = parse_alpha, allow_hyphen_values = true)]
    alphas: Vec<Alpha>,
    #[arg(long, value_delimiter = ',', default_value = "depth,volume", value_parser = parse_scorer)]
    scorers: Vec<ScorerChoice>,
    #[arg(long, default_value_t = 100)]
    n_estimators: usize,
    #[arg(long, default_value_t = 256)]
    subsample: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = ',', value_parser = parse_delimiter)]
    delimiter: char,
    #[arg(long)]
    header: bool,
    /// Also write auc_matrix.csv, rank_table.csv and rank_table.json here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_alpha(s: &str) -> Result<Alpha, String> {
    s.parse().map_err(|e: aniso::Error| e.to_string())
}

fn parse_scorer(s: &str) -> Result<ScorerChoice, String> {
    s.parse().map_err(|e: aniso::Error| e.to_string())
}

fn parse_label_column(s: &str) -> Result<LabelColumn, String> {
    if s.eq_ignore_ascii_case("last") {
        return Ok(LabelColumn::Last);
    }
    s.parse().map(LabelColumn::Index).map_err(|_| format!("expected a column index or `last`, got {s:?}"))
}

fn parse_delimiter(s: &str) -> Result<char, String> {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii() => Ok(c),
        _ if s == "\\t" => Ok('\t'),
        _ => Err(format!("delimiter must be a single ASCII character, got {s:?}")),
    }
}

fn configure_threads() -> Result<(), commands::CliError> {
    let Ok(value) = std::env::var("ANISO_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| commands::CliError::Usage(format!("ANISO_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| commands::CliError::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|()| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
