use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pseudosl::dataset::DatasetMetadata;
use pseudosl::harness::{
    evaluate_predictions, render_markdown, write_summary_csv, Evaluation, DEFAULT_GRID,
};
use pseudosl::learners::read_library;
use pseudosl::metrics::{predictiveness_curve, DEFAULT_SMOOTHING_SPAN};
use pseudosl::simulate::{read_truth_file, write_truth_file};
use pseudosl::{
    fit_superlearner_binary, fit_superlearner_pseudo, generate_scenario, pseudo_observations,
    read_csv, roc_pseudo, run_bench, write_csv, BenchConfig, BenchReport, BinaryOptions,
    CsvSchema, EnsembleModel, LibraryMode, Method, PseudoOptions, Scenario, ScenarioConfig,
    SCHEMA_VERSION,
};

#[derive(Parser)]
#[command(name = "pseudosl", version, about = "Competing-risks prediction with pseudo-observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a train/validation pair with latent truth side-files.
    Simulate(SimulateArgs),
    /// Fit a stacked ensemble to a training CSV.
    Fit(FitArgs),
    /// Score a fitted model on a validation CSV.
    Evaluate(EvaluateArgs),
    /// Run the replicate simulation study.
    Bench(BenchArgs),
    /// Render a bench report as a table.
    Report(ReportArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// One of 0, A, B, C, D.
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Target censored fraction (0.2 or 0.5 in the reference study).
    #[arg(long)]
    censoring: Option<f64>,
    /// Subjects per split.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "t-star")]
    t_star: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let base = match &self.config {
            Some(path) => ScenarioConfig::from_json(&read_text(path)?)
                .with_context(|| format!("invalid scenario config {}", path.display()))?,
            None => ScenarioConfig::new(self.scenario.unwrap_or(Scenario::A)),
        };
        self.apply(base)
    }

    fn apply(&self, mut cfg: ScenarioConfig) -> Result<ScenarioConfig> {
        if let Some(s) = self.scenario {
            cfg.scenario = s;
        }
        if let Some(c) = self.censoring {
            cfg.censoring_target = c;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(t) = self.t_star {
            cfg.t_star = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, env = "PSEUDOSL_OUT")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitMode {
    Pseudo,
    PseudoSingle,
    Binary,
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV (time, event, optional stratum, covariates).
    #[arg(long)]
    train: PathBuf,
    #[arg(long, value_enum, default_value = "pseudo")]
    mode: FitMode,
    /// Comma-separated pseudo-value grid for mode=pseudo.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long = "t-star", default_value_t = 26.5)]
    t_star: f64,
    #[arg(long, default_value_t = 1)]
    cause: u8,
    /// Library JSON; the built-in library for the mode if absent.
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long, default_value_t = pseudosl::ensemble::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = pseudosl::ensemble::DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Compute pseudo-values (or censoring weights) within strata.
    #[arg(long)]
    stratified: bool,
    #[arg(long, env = "PSEUDOSL_THREADS")]
    threads: Option<usize>,
    /// Output model JSON.
    #[arg(long, env = "PSEUDOSL_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Validation CSV.
    #[arg(long)]
    data: PathBuf,
    /// Truth side-file; `<data stem>_truth.csv` next to the data is used if present.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Evaluation time; the model's t* by default.
    #[arg(long = "t-star")]
    t_star: Option<f64>,
    /// Output directory for evaluation.json, roc.csv and predictiveness.csv.
    #[arg(long, env = "PSEUDOSL_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Bench config JSON (scenario, methods, libraries); flags override it.
    #[arg(long = "bench-config", conflicts_with = "config")]
    bench_config: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated subset of pseudo, pseudo.single, binary, true.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Library JSON for the pseudo methods.
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long, env = "PSEUDOSL_THREADS")]
    threads: Option<usize>,
    /// Output bench report JSON.
    #[arg(long, env = "PSEUDOSL_OUT")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Markdown,
}

#[derive(Args)]
struct ReportArgs {
    /// Bench report JSON.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "markdown")]
    format: ReportFormat,
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulationEcho<'a> {
    schema_version: u32,
    config: &'a ScenarioConfig,
    train: DatasetMetadata,
    validation: DatasetMetadata,
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = args.scenario.resolve()?;
    let draw = generate_scenario(&cfg)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write_csv(&draw.train, args.out.join("train.csv"))?;
    write_csv(&draw.validation, args.out.join("validation.csv"))?;
    write_truth_file(&draw.train_truth, &args.out.join("train_truth.csv"))?;
    write_truth_file(&draw.validation_truth, &args.out.join("validation_truth.csv"))?;
    let echo = SimulationEcho {
        schema_version: SCHEMA_VERSION,
        config: &cfg,
        train: draw.train.metadata(),
        validation: draw.validation.metadata(),
    };
    write_json(&args.out.join("simulation.json"), &echo)?;
    eprintln!(
        "scenario {}: wrote {} training and {} validation subjects to {}",
        cfg.scenario,
        draw.train.n(),
        draw.validation.n(),
        args.out.display()
    );
    Ok(())
}

fn fit(args: &FitArgs) -> Result<()> {
    set_threads(args.threads)?;
    let data = read_csv(&args.train, &CsvSchema::default())?;
    let library_mode = match args.mode {
        FitMode::Binary => LibraryMode::Binary,
        _ => LibraryMode::Pseudo,
    };
    let library = match &args.library {
        Some(path) => read_library(path, library_mode)?,
        None => pseudosl::builtin_library(library_mode),
    };
    let model = match args.mode {
        FitMode::Pseudo | FitMode::PseudoSingle => {
            let grid = match args.mode {
                FitMode::PseudoSingle => {
                    if args.grid.is_some() {
                        bail!("--grid does not apply to mode pseudo-single");
                    }
                    vec![args.t_star]
                }
                _ => args.grid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec()),
            };
            let mut opts = PseudoOptions::new(grid, args.t_star);
            opts.cause = args.cause;
            opts.folds = args.folds;
            opts.lambda = args.lambda;
            opts.stratified = args.stratified;
            opts.seed = args.seed;
            fit_superlearner_pseudo(&data, &library, &opts)?
        }
        FitMode::Binary => {
            if args.grid.is_some() {
                bail!("--grid does not apply to mode binary");
            }
            let mut opts = BinaryOptions::new(args.t_star);
            opts.cause = args.cause;
            opts.folds = args.folds;
            opts.stratified_weights = args.stratified;
            opts.seed = args.seed;
            fit_superlearner_binary(&data, &library, &opts)?
        }
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    model.save(&args.out)?;
    for l in &model.cv_report.learners {
        match (&l.failure, l.cv_score, l.alpha_star) {
            (Some(f), _, _) => eprintln!("{:<16} failed: {f}", l.name),
            (None, Some(s), Some(a)) => eprintln!("{:<16} cv {s:.4}  weight {a:.4}", l.name),
            _ => {}
        }
    }
    eprintln!("ensemble cv {:.4}", model.cv_report.ensemble_cv_score);
    Ok(())
}

#[derive(Serialize)]
struct EvaluationEcho {
    schema_version: u32,
    model: PathBuf,
    data: PathBuf,
    truth: Option<PathBuf>,
    t_star: f64,
    cause: u8,
    #[serde(flatten)]
    evaluation: Evaluation,
}

fn default_truth_path(data: &Path) -> Option<PathBuf> {
    let stem = data.file_stem()?.to_str()?;
    let p = data.with_file_name(format!("{stem}_truth.csv"));
    p.exists().then_some(p)
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let model = EnsembleModel::load(&args.model)?;
    let data = read_csv(&args.data, &CsvSchema::default())?;
    if data.feature_names() != model.feature_names.as_slice() {
        bail!(
            "validation columns {:?} do not match the model's features {:?}",
            data.feature_names(),
            model.feature_names
        );
    }
    let t_star = args.t_star.unwrap_or(model.t_star);
    let truth_path = args.truth.clone().or_else(|| default_truth_path(&args.data));
    let truth = match &truth_path {
        Some(p) => {
            let t = read_truth_file(p)?;
            if t.len() != data.n() {
                bail!("truth file {} has {} rows, data has {}", p.display(), t.len(), data.n());
            }
            Some(t)
        }
        None => None,
    };
    let scores = model.predict(data.covariates())?;
    let evaluation = evaluate_predictions(&data, truth.as_deref(), &scores, t_star, model.cause)?;
    let pseudo = pseudo_observations(&data, &[model.cause], &[t_star])?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let roc = roc_pseudo(&pseudo, model.cause, &scores, t_star)?;
    roc.write_csv(fs::File::create(args.out.join("roc.csv"))?)?;
    let curve = predictiveness_curve(&pseudo, model.cause, &scores, t_star, DEFAULT_SMOOTHING_SPAN)?;
    curve.write_csv(fs::File::create(args.out.join("predictiveness.csv"))?)?;
    let echo = EvaluationEcho {
        schema_version: SCHEMA_VERSION,
        model: args.model.clone(),
        data: args.data.clone(),
        truth: truth_path,
        t_star,
        cause: model.cause,
        evaluation,
    };
    write_json(&args.out.join("evaluation.json"), &echo)?;
    eprintln!("pauc {:.4}", evaluation.pauc);
    if let Some(tb) = evaluation.tbauc {
        eprintln!("tbauc {tb:.4}");
    }
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let mut cfg = match &args.bench_config {
        Some(path) => {
            let mut cfg: BenchConfig = serde_json::from_str(&read_text(path)?)
                .with_context(|| format!("invalid bench config {}", path.display()))?;
            cfg.scenario = args.scenario.apply(cfg.scenario)?;
            cfg
        }
        None => BenchConfig::new(args.scenario.resolve()?, 1),
    };
    // Replicate data seeds derive from the master seed.
    if let Some(seed) = args.scenario.seed {
        cfg.seed = seed;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(m) = &args.methods {
        cfg.methods = m.clone();
    }
    if let Some(g) = &args.grid {
        cfg.grid = g.clone();
    }
    if let Some(l) = args.lambda {
        cfg.lambda = l;
    }
    if let Some(v) = args.folds {
        cfg.folds = v;
    }
    if let Some(path) = &args.library {
        cfg.pseudo_library = Some(read_library(path, LibraryMode::Pseudo)?);
    }
    let report = run_bench(&cfg, args.threads)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_text(&args.out, &(report.to_json()? + "\n"))?;
    eprint!("{}", render_markdown(&report)?);
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let report = BenchReport::from_json(&read_text(&args.input)?)
        .with_context(|| format!("invalid bench report {}", args.input.display()))?;
    let text = match args.format {
        ReportFormat::Markdown => render_markdown(&report)?,
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            write_summary_csv(&report.summaries, &mut buf)?;
            String::from_utf8(buf)?
        }
    };
    match &args.out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(a) => simulate(&a),
        Command::Fit(a) => fit(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Bench(a) => bench(&a),
        Command::Report(a) => report(&a),
    }
}
