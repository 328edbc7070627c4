use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use aniso::experiments::{self, CubeOutlierSpec, SphereOriginSpec, ToyExperiment, TrialReport};
use aniso::io::{self as model_io, LabelColumn, LoadOptions};
use aniso::{BoundingPolicy, Dataset, Detector, DetectorConfig, Error};

use crate::{BenchArgs, BoundingArg, Command, DetectorArgs, ExperimentArg, ToyArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Data(err) => err.fmt(f),
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match err {
            Error::Config(msg) | Error::InvalidAlpha(msg) => CliError::Usage(msg),
            other => CliError::Data(other),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(err: io::Error) -> Self {
        CliError::Data(Error::Io(err))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Fit { input, detector, out } => {
            let data = model_io::load_dataset(&input.data, &input.options())?;
            let det = Detector::fit(&data, detector_config(&detector))?;
            model_io::save_model(out, &det)?;
            Ok(())
        }
        Command::Score { model, input, out } => {
            let det = model_io::load_model(model)?;
            let data = model_io::load_dataset(&input.data, &input.options())?;
            let scores = det.score_samples(&data)?;
            with_output(out.as_deref(), |w| model_io::write_scores(w, &scores).map_err(Into::into))
        }
        Command::Eval { model, data, label_column, delimiter, header, detector } => {
            let options = LoadOptions { label_column: Some(label_column), delimiter: delimiter as u8, has_header: header };
            let data = model_io::load_dataset(&data, &options)?;
            let det = match model {
                Some(path) => model_io::load_model(path)?,
                None => Detector::fit(&data, detector_config(&detector))?,
            };
            println!("{}", evaluate(&det, &data)?);
            Ok(())
        }
        Command::Toy(args) => toy(&args),
        Command::Bench(args) => bench(&args),
    }
}

fn detector_config(args: &DetectorArgs) -> DetectorConfig {
    let bounding_policy = match args.bounding {
        BoundingArg::PerTree => BoundingPolicy::PerTree { margin: args.margin },
        BoundingArg::Global => BoundingPolicy::Global { margin: args.margin },
    };
    DetectorConfig {
        n_estimators: args.n_estimators,
        subsample_size: args.subsample,
        scorer: args.scorer,
        alpha: args.alpha,
        tau: args.tau,
        contamination: args.contamination,
        seed: args.seed,
        strict_paper_depth: args.strict_depth,
        bounding_policy,
    }
}

fn evaluate(det: &Detector, data: &Dataset) -> CliResult<f64> {
    let labels = data
        .labels()
        .ok_or_else(|| CliError::Data(Error::InvalidDataset("evaluation needs a label column".into())))?;
    let scores: Vec<f64> = det.score_samples(data)?.into_iter().map(|s| s.value()).collect();
    Ok(experiments::auc_roc(&scores, labels)?)
}

fn with_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> CliResult) -> CliResult {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            body(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)
        }
    }
}

fn toy_experiment(args: &ToyArgs, d: usize) -> ToyExperiment {
    match args.experiment {
        ExperimentArg::Cube => ToyExperiment::Cube(CubeOutlierSpec {
            d,
            n_inliers: args.n_inliers,
            outlier_offset: args.offset,
            seed: args.seed,
        }),
        ExperimentArg::Sphere => ToyExperiment::Sphere(SphereOriginSpec {
            d,
            n_inliers: args.n_inliers,
            noise_sigma: args.noise,
            seed: args.seed,
        }),
    }
}

fn toy_configs(args: &ToyArgs) -> Vec<DetectorConfig> {
    args.scorers
        .iter()
        .flat_map(|&scorer| {
            args.alphas.iter().map(move |&alpha| DetectorConfig {
                n_estimators: args.n_estimators,
                subsample_size: args.subsample,
                scorer,
                alpha,
                ..DetectorConfig::default()
            })
        })
        .collect()
}

fn toy(args: &ToyArgs) -> CliResult {
    let configs = toy_configs(args);
    let reports: Vec<TrialReport> = args
        .d
        .iter()
        .map(|&d| experiments::run_trials(&toy_experiment(args, d), &configs, args.trials))
        .collect::<Result<_, _>>()?;

    let json = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])
    } else {
        serde_json::to_string_pretty(&reports)
    }
    .expect("reports serialize");
    with_output(args.out.as_deref(), |w| Ok(writeln!(w, "{json}")?))?;

    if let Some(path) = &args.profiles {
        let experiment = toy_experiment(args, args.d[0]);
        let data = experiment.generate(0)?;
        let config = DetectorConfig { seed: experiment.detector_seed(0), ..configs[0].clone() };
        let det = Detector::fit(&data, config)?;
        let profiles = experiments::sorted_profiles(&det, &data)?;
        let labels = data.labels().expect("generated data is labeled");
        with_output(Some(path), |w| {
            let header: Vec<String> = (1..=det.model().n_estimators()).map(|k| format!("s{k}")).collect();
            writeln!(w, "index,label,{}", header.join(","))?;
            for (i, row) in profiles.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(f64::to_string).collect();
                writeln!(w, "{i},{},{}", labels[i], cells.join(","))?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn algorithm_name(config: &DetectorConfig) -> String {
    let prefix = match config.scorer {
        aniso::ScorerChoice::Depth => "IF",
        aniso::ScorerChoice::Volume => "PAC",
    };
    format!("{prefix}_{}", config.alpha)
}

fn csv_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(Error::InvalidDataset(format!("no .csv files in {}", dir.display()))));
    }
    Ok(files)
}

/// AUCROC of every config on one dataset; `None` when the labels hold a
/// single class.
fn bench_dataset(data: &Dataset, configs: &[DetectorConfig]) -> CliResult<Vec<Option<f64>>> {
    let labels = data
        .labels()
        .ok_or_else(|| CliError::Data(Error::InvalidDataset("benchmark data needs labels".into())))?;
    let mut fitted: Vec<Detector> = Vec::new();
    let mut out = Vec::with_capacity(configs.len());
    for cfg in configs {
        let fit_cfg = DetectorConfig { alpha: aniso::Alpha::ZERO, ..cfg.clone() };
        let idx = match fitted.iter().position(|d| d.config() == &fit_cfg) {
            Some(i) => i,
            None => {
                fitted.push(Detector::fit(data, fit_cfg)?);
                fitted.len() - 1
            }
        };
        let scores: Vec<f64> =
            fitted[idx].score_samples_with_alpha(data, cfg.alpha)?.into_iter().map(|s| s.value()).collect();
        match experiments::auc_roc(&scores, labels) {
            Ok(auc) => out.push(Some(auc)),
            Err(Error::DegenerateLabels) => out.push(None),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn bench(args: &BenchArgs) -> CliResult {
    let files = csv_files(&args.data_dir)?;
    let options =
        LoadOptions { label_column: Some(LabelColumn::Last), delimiter: args.delimiter as u8, has_header: args.header };
    let configs: Vec<DetectorConfig> = args
        .scorers
        .iter()
        .flat_map(|&scorer| {
            args.alphas.iter().map(move |&alpha| DetectorConfig {
                n_estimators: args.n_estimators,
                subsample_size: args.subsample,
                scorer,
                alpha,
                seed: args.seed,
                ..DetectorConfig::default()
            })
        })
        .collect();
    let algorithms: Vec<String> = configs.iter().map(algorithm_name).collect();

    let mut datasets = Vec::with_capacity(files.len());
    let mut auc = vec![Vec::with_capacity(files.len()); configs.len()];
    for path in &files {
        let data = model_io::load_dataset(path, &options)?;
        let row = bench_dataset(&data, &configs)?;
        for (a, v) in row.into_iter().enumerate() {
            auc[a].push(v);
        }
        datasets.push(path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    }

    let table = experiments::rank_table(&algorithms, &datasets, &auc)?;
    model_io::write_rank_table(io::stdout().lock(), &table)?;
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        model_io::write_auc_matrix(BufWriter::new(File::create(dir.join("auc_matrix.csv"))?), &table, &auc)?;
        model_io::write_rank_table(BufWriter::new(File::create(dir.join("rank_table.csv"))?), &table)?;
        let json = serde_json::to_string_pretty(&table).expect("rank table serializes");
        fs::write(dir.join("rank_table.json"), json + "\n")?;
    }
    Ok(())
}
