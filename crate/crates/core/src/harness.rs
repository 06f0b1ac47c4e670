//! Replicate harness: simulate, fit each method, score on the validation
//! split and aggregate into a comparison table.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SurvivalDataset;
use crate::ensemble::{
    fit_superlearner_binary, fit_superlearner_pseudo, BinaryOptions, PseudoOptions, DEFAULT_FOLDS,
    DEFAULT_LAMBDA,
};
use crate::error::{Error, Result};
use crate::estimators::pseudo_observations;
use crate::learners::{builtin_library, Learner, LibraryMode};
use crate::metrics::{auc_pseudo, auc_true_binary, roc_pseudo};
use crate::rng::derive_seed;
use crate::simulate::{generate_scenario, true_status, ScenarioConfig, TruthRecord};
use crate::SCHEMA_VERSION;

/// Pseudo-value grid used by the multi-time ensemble.
pub const DEFAULT_GRID: [f64; 4] = [17.5, 20.0, 26.5, 35.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "pseudo")]
    Pseudo,
    #[serde(rename = "pseudo.single")]
    PseudoSingle,
    #[serde(rename = "binary")]
    Binary,
    /// Scores each subject by its true cause-1 incidence.
    #[serde(rename = "true")]
    True,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pseudo, Method::PseudoSingle, Method::Binary, Method::True];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pseudo => "pseudo",
            Method::PseudoSingle => "pseudo.single",
            Method::Binary => "binary",
            Method::True => "true",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::param("methods", format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Validation-sample accuracy of one set of scores. Truth-based fields are
/// present only when latent truth is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n: usize,
    pub pauc: f64,
    pub tbauc: Option<f64>,
    pub bias: Option<f64>,
    pub sd_pred: f64,
    pub mse: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// AUC against the latent status at `t_star`: cause-1 events by `t_star`
/// versus subjects event-free at `t_star`.
pub fn true_binary_auc(truth: &[TruthRecord], scores: &[f64], t_star: f64) -> Result<f64> {
    if truth.len() != scores.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), actual: scores.len() });
    }
    let (labels, kept): (Vec<bool>, Vec<f64>) = truth
        .iter()
        .zip(scores)
        .filter_map(|(t, &s)| true_status(t, t_star).map(|b| (b, s)))
        .unzip();
    auc_true_binary(&labels, &kept)
}

/// Score `predictions` on `validation` at `t_star` for `cause`.
pub fn evaluate_predictions(
    validation: &SurvivalDataset,
    truth: Option<&[TruthRecord]>,
    predictions: &[f64],
    t_star: f64,
    cause: u8,
) -> Result<Evaluation> {
    let pseudo = pseudo_observations(validation, &[cause], &[t_star])?;
    evaluate_with_pseudo(&pseudo, truth, predictions, t_star, cause)
}

fn evaluate_with_pseudo(
    pseudo: &crate::estimators::PseudoMatrix,
    truth: Option<&[TruthRecord]>,
    predictions: &[f64],
    t_star: f64,
    cause: u8,
) -> Result<Evaluation> {
    let n = predictions.len();
    if pseudo.n() != n {
        return Err(Error::LengthMismatch { expected: pseudo.n(), actual: n });
    }
    let pauc = auc_pseudo(&roc_pseudo(pseudo, cause, predictions, t_star)?);
    let (tbauc, bias, mse) = match truth {
        Some(truth) => {
            if cause != 1 {
                return Err(Error::param("cause", "latent truth describes cause 1 only"));
            }
            let tb = true_binary_auc(truth, predictions, t_star)?;
            let diff: Vec<f64> = predictions.iter().zip(truth).map(|(p, t)| p - t.true_cif).collect();
            let b = mean(&diff);
            let m = diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
            (Some(tb), Some(b), Some(m))
        }
        None => (None, None, None),
    };
    Ok(Evaluation { n, pauc, tbauc, bias, sd_pred: sd(predictions), mse })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub tbauc: f64,
    pub pauc: f64,
    pub bias: f64,
    pub sd_pred: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenario: ScenarioConfig,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub grid: Vec<f64>,
    pub lambda: f64,
    pub folds: usize,
    /// Master seed; replicate `r` uses `derive_seed(seed, [r])`.
    pub seed: u64,
    /// Learners for the pseudo methods (built-in pseudo library if absent).
    #[serde(default)]
    pub pseudo_library: Option<Vec<Learner>>,
    /// Learners for the binary method (built-in binary library if absent).
    #[serde(default)]
    pub binary_library: Option<Vec<Learner>>,
}

impl BenchConfig {
    pub fn new(scenario: ScenarioConfig, replicates: usize) -> Self {
        BenchConfig {
            scenario,
            replicates,
            methods: Method::ALL.to_vec(),
            grid: DEFAULT_GRID.to_vec(),
            lambda: DEFAULT_LAMBDA,
            folds: DEFAULT_FOLDS,
            seed: 0,
            pseudo_library: None,
            binary_library: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.replicates == 0 {
            return Err(Error::param("replicates", "need at least one replicate"));
        }
        if self.methods.is_empty() {
            return Err(Error::param("methods", "no methods requested"));
        }
        for (k, m) in self.methods.iter().enumerate() {
            if self.methods[..k].contains(m) {
                return Err(Error::param("methods", format!("method {m} listed twice")));
            }
        }
        if self.methods.contains(&Method::Pseudo) && !self.grid.contains(&self.scenario.t_star) {
            return Err(Error::InvalidGrid(format!(
                "t_star {} is not on the grid {:?}",
                self.scenario.t_star, self.grid
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub method: Option<Method>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    /// Realized censored fraction of the training split.
    pub censored_fraction: f64,
    pub results: Vec<MethodResult>,
}

/// Aggregates for one method over its completed replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub replicates: usize,
    pub mean_tbauc: f64,
    pub sd_tbauc: f64,
    pub mean_pauc: f64,
    pub sd_pauc: f64,
    pub bias: f64,
    pub sd_pred: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub config: BenchConfig,
    pub replicates_completed: usize,
    pub failures: Vec<ReplicateFailure>,
    pub summaries: Vec<MethodSummary>,
    pub per_replicate: Vec<ReplicateResult>,
}

fn run_method(
    method: Method,
    config: &BenchConfig,
    draw: &crate::simulate::ScenarioDraw,
    seed: u64,
) -> Result<Vec<f64>> {
    let t_star = draw.config.t_star;
    let x_val = draw.validation.covariates();
    let pseudo_lib = || config.pseudo_library.clone().unwrap_or_else(|| builtin_library(LibraryMode::Pseudo));
    match method {
        Method::True => Ok(draw.validation_truth.iter().map(|t| t.true_cif).collect()),
        Method::Pseudo | Method::PseudoSingle => {
            let grid = if method == Method::Pseudo { config.grid.clone() } else { vec![t_star] };
            let mut opts = PseudoOptions::new(grid, t_star);
            opts.folds = config.folds;
            opts.lambda = config.lambda;
            opts.seed = seed;
            let model = fit_superlearner_pseudo(&draw.train, &pseudo_lib(), &opts)?;
            model.predict(x_val)
        }
        Method::Binary => {
            let lib = config.binary_library.clone().unwrap_or_else(|| builtin_library(LibraryMode::Binary));
            let mut opts = BinaryOptions::new(t_star);
            opts.folds = config.folds;
            opts.seed = seed;
            let model = fit_superlearner_binary(&draw.train, &lib, &opts)?;
            model.predict(x_val)
        }
    }
}

/// Outcome of one replicate: per-method results and failures.
fn run_replicate(config: &BenchConfig, r: usize) -> (Option<ReplicateResult>, Vec<ReplicateFailure>) {
    let seed = derive_seed(config.seed, &[r as u64]);
    let mut scenario = config.scenario.clone();
    scenario.seed = seed;
    let fail = |method, e: Error| ReplicateFailure { replicate: r, method, error: e.to_string() };
    let draw = match generate_scenario(&scenario) {
        Ok(d) => d,
        Err(e) => return (None, vec![fail(None, e)]),
    };
    let pseudo = match pseudo_observations(&draw.validation, &[1], &[scenario.t_star]) {
        Ok(p) => p,
        Err(e) => return (None, vec![fail(None, e)]),
    };
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (k, &method) in config.methods.iter().enumerate() {
        let outcome = run_method(method, config, &draw, derive_seed(seed, &[100 + k as u64])).and_then(|pred| {
            evaluate_with_pseudo(&pseudo, Some(&draw.validation_truth), &pred, scenario.t_star, 1)
        });
        match outcome {
            Ok(ev) => results.push(MethodResult {
                method,
                tbauc: ev.tbauc.expect("truth supplied"),
                pauc: ev.pauc,
                bias: ev.bias.expect("truth supplied"),
                sd_pred: ev.sd_pred,
                mse: ev.mse.expect("truth supplied"),
            }),
            Err(e) => failures.push(fail(Some(method), e)),
        }
    }
    let meta = draw.train.metadata();
    let censored_fraction = meta.censored as f64 / meta.n as f64;
    (Some(ReplicateResult { replicate: r, seed, censored_fraction, results }), failures)
}

fn summarize(method: Method, per_replicate: &[ReplicateResult]) -> Option<MethodSummary> {
    let rows: Vec<&MethodResult> =
        per_replicate.iter().flat_map(|r| r.results.iter().filter(|m| m.method == method)).collect();
    if rows.is_empty() {
        return None;
    }
    let col = |f: fn(&MethodResult) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let tb = col(|r| r.tbauc);
    let pa = col(|r| r.pauc);
    Some(MethodSummary {
        method,
        replicates: rows.len(),
        mean_tbauc: mean(&tb),
        sd_tbauc: sd(&tb),
        mean_pauc: mean(&pa),
        sd_pauc: sd(&pa),
        bias: mean(&col(|r| r.bias)),
        sd_pred: mean(&col(|r| r.sd_pred)),
        mse: mean(&col(|r| r.mse)),
    })
}

/// Run all replicates, in parallel on `threads` workers (rayon's default
/// when `None`). The report does not depend on the thread count.
pub fn run_bench(config: &BenchConfig, threads: Option<usize>) -> Result<BenchReport> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::param("threads", e.to_string()))?;
    let outcomes: Vec<_> =
        pool.install(|| (0..config.replicates).into_par_iter().map(|r| run_replicate(config, r)).collect());
    let mut per_replicate = Vec::new();
    let mut failures = Vec::new();
    for (res, fails) in outcomes {
        per_replicate.extend(res);
        failures.extend(fails);
    }
    let summaries: Vec<MethodSummary> =
        config.methods.iter().filter_map(|&m| summarize(m, &per_replicate)).collect();
    let replicates_completed = per_replicate
        .iter()
        .filter(|r| r.results.len() == config.methods.len())
        .count();
    Ok(BenchReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        replicates_completed,
        failures,
        summaries,
        per_replicate,
    })
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let report: BenchReport = serde_json::from_str(json)?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(Error::param(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", report.schema_version),
            ));
        }
        Ok(report)
    }
}

const CSV_HEADER: [&str; 9] = [
    "method", "replicates", "mean_tbauc", "sd_tbauc", "mean_pauc", "sd_pauc", "bias", "sd", "mse",
];

/// One row per method; floats in shortest round-trip form.
pub fn write_summary_csv<W: Write>(summaries: &[MethodSummary], writer: W) -> Result<()> {
    if summaries.is_empty() {
        return Err(Error::param("methods", "report has no methods"));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for s in summaries {
        w.write_record([
            s.method.name().to_string(),
            s.replicates.to_string(),
            format!("{:?}", s.mean_tbauc),
            format!("{:?}", s.sd_tbauc),
            format!("{:?}", s.mean_pauc),
            format!("{:?}", s.sd_pauc),
            format!("{:?}", s.bias),
            format!("{:?}", s.sd_pred),
            format!("{:?}", s.mse),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(reader: R) -> Result<Vec<MethodSummary>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::param("csv", "unexpected report header"));
    }
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let float = |k: usize| -> Result<f64> {
            rec[k].parse().map_err(|_| Error::param("csv", format!("row {}: bad number {:?}", row + 1, &rec[k])))
        };
        out.push(MethodSummary {
            method: rec[0].parse()?,
            replicates: rec[1]
                .parse()
                .map_err(|_| Error::param("csv", format!("row {}: bad count", row + 1)))?,
            mean_tbauc: float(2)?,
            sd_tbauc: float(3)?,
            mean_pauc: float(4)?,
            sd_pauc: float(5)?,
            bias: float(6)?,
            sd_pred: float(7)?,
            mse: float(8)?,
        });
    }
    Ok(out)
}

/// Markdown table in the layout of a simulation results table.
pub fn render_markdown(report: &BenchReport) -> Result<String> {
    if report.summaries.is_empty() {
        return Err(Error::param("methods", "report has no methods"));
    }
    let sc = &report.config.scenario;
    let mut out = String::new();
    out.push_str(&format!(
        "Scenario {}, {:.0}% censoring, n = {}, t* = {}, {} of {} replicates complete\n\n",
        sc.scenario,
        100.0 * sc.censoring_target,
        sc.n,
        sc.t_star,
        report.replicates_completed,
        report.config.replicates
    ));
    out.push_str("| method | mean.tbauc | sd.tbauc | mean.pauc | sd.pauc | bias | sd | mse |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for s in &report.summaries {
        out.push_str(&format!(
            "| {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.4} |\n",
            s.method, s.mean_tbauc, s.sd_tbauc, s.mean_pauc, s.sd_pauc, s.bias, s.sd_pred, s.mse
        ));
    }
    out.push_str("\nmse is the raw mean squared error (not multiplied by 100). ");
    out.push_str("CoxBoost and competing-risks random forest comparators are not implemented.\n");
    if !report.failures.is_empty() {
        out.push_str(&format!("\n{} method fit(s) failed:\n", report.failures.len()));
        for f in &report.failures {
            let m = f.method.map_or("data".to_string(), |m| m.to_string());
            out.push_str(&format!("- replicate {} ({m}): {}\n", f.replicate, f.error));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::Scenario;

    fn small_config() -> BenchConfig {
        let mut sc = ScenarioConfig::new(Scenario::A);
        sc.n = 120;
        let mut cfg = BenchConfig::new(sc, 2);
        cfg.methods = vec![Method::True];
        cfg.seed = 5;
        cfg
    }

    #[test]
    fn true_method_has_zero_error() {
        let report = run_bench(&small_config(), Some(1)).unwrap();
        assert_eq!(report.replicates_completed, 2);
        let s = &report.summaries[0];
        assert_eq!(s.replicates, 2);
        assert_eq!(s.bias, 0.0);
        assert_eq!(s.mse, 0.0);
        assert!(s.sd_tbauc.is_finite());
    }

    #[test]
    fn summary_csv_round_trip() {
        let report = run_bench(&small_config(), Some(2)).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&report.summaries, &mut buf).unwrap();
        assert_eq!(read_summary_csv(buf.as_slice()).unwrap(), report.summaries);
        let md = render_markdown(&report).unwrap();
        assert_eq!(md.lines().filter(|l| l.starts_with("| true")).count(), 1);
        assert!(write_summary_csv(&[], Vec::new()).is_err());
    }

    #[test]
    fn empty_methods_rejected() {
        let mut cfg = small_config();
        cfg.methods.clear();
        assert!(run_bench(&cfg, None).is_err());
    }

    #[test]
    fn constant_scores_give_half() {
        let mut sc = ScenarioConfig::new(Scenario::A);
        sc.n = 80;
        let draw = generate_scenario(&sc).unwrap();
        let ev = evaluate_predictions(&draw.validation, Some(&draw.validation_truth), &[0.3; 80], 26.5, 1).unwrap();
        assert!((ev.pauc - 0.5).abs() < 1e-12);
        assert!((ev.tbauc.unwrap() - 0.5).abs() < 1e-12);
        assert!(ev.sd_pred < 1e-12);
    }
}
