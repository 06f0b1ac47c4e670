//! Cross-validated stacking of base learners.
//!
//! Pseudo mode stacks the pseudo-values of a target cause over a time grid,
//! cross-fits every learner with all rows of a subject kept in one fold, and
//! chooses combination weights that maximize the pseudo-value AUC at
//! `t_star`. Binary mode dichotomizes the outcome at `t_star`, weights
//! subjects by inverse probability of censoring and stacks on the simplex
//! by weighted log-likelihood.

mod optimize;

use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::estimators::{pseudo_observations, stratified_pseudo_observations, PseudoMatrix};
use crate::learners::{FittedModel, Learner, Task};
use crate::metrics::{ipcw_weights, nn_loglik, weighted_auc};
use crate::rng::{derive_seed, rng_from_seed};
use crate::SCHEMA_VERSION;

pub use optimize::{
    optimize_auc_weights, optimize_nnloglik_weights, AucWeights, AUC_TIE,
    MAX_EVALS_PER_START, MIN_STARTS, SUM_MARGIN,
};

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_LAMBDA: f64 = 100.0;

const SEED_FOLDS: u64 = 0;
const SEED_CV: u64 = 1;
const SEED_REFIT: u64 = 2;
const SEED_WEIGHTS: u64 = 3;

/// Fold label per subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Folds {
    pub assignment: Vec<usize>,
    pub v: usize,
}

impl Folds {
    pub fn validation(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.v];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffle `0..n` with `seed` and cut the order into `v` contiguous blocks;
/// the first `n % v` blocks hold one extra subject.
pub fn make_folds(n: usize, v: usize, seed: u64) -> Result<Folds> {
    if v < 2 {
        return Err(Error::param("folds", format!("need at least 2 folds, got {v}")));
    }
    if v > n {
        return Err(Error::param("folds", format!("{v} folds for {n} subjects")));
    }
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let (base, extra) = (n / v, n % v);
    let mut assignment = vec![0; n];
    let mut pos = 0;
    for fold in 0..v {
        let size = base + usize::from(fold < extra);
        for &i in &order[pos..pos + size] {
            assignment[i] = fold;
        }
        pos += size;
    }
    Ok(Folds { assignment, v })
}

/// Subject-by-time stacked regression design: covariates plus a trailing
/// time column, `m` contiguous rows per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedDesign {
    pub x: Array2<f64>,
    pub outcome: Vec<f64>,
    pub subject: Vec<usize>,
    pub time_index: Vec<usize>,
    pub times: Vec<f64>,
    pub n_subjects: usize,
}

pub fn stack_time_grid(
    dataset: &SurvivalDataset,
    pseudo: &PseudoMatrix,
    cause: u8,
) -> Result<StackedDesign> {
    let (n, p, m) = (dataset.n(), dataset.p(), pseudo.times.len());
    if pseudo.n() != n {
        return Err(Error::InvalidGrid(format!(
            "pseudo-values cover {} subjects, dataset has {n}",
            pseudo.n()
        )));
    }
    let j = pseudo.cause_index(cause)?;
    let mut x = Array2::zeros((n * m, p + 1));
    let mut outcome = Vec::with_capacity(n * m);
    let mut subject = Vec::with_capacity(n * m);
    let mut time_index = Vec::with_capacity(n * m);
    let cov = dataset.covariates();
    for i in 0..n {
        for (l, &t) in pseudo.times.iter().enumerate() {
            let r = i * m + l;
            x.slice_mut(s![r, ..p]).assign(&cov.row(i));
            x[[r, p]] = t;
            outcome.push(pseudo.values[[i, l, j]]);
            subject.push(i);
            time_index.push(l);
        }
    }
    Ok(StackedDesign { x, outcome, subject, time_index, times: pseudo.times.clone(), n_subjects: n })
}

/// Covariates with a constant time column appended.
pub fn with_time_column(x: ArrayView2<'_, f64>, t: f64) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut out = Array2::from_elem((n, p + 1), t);
    out.slice_mut(s![.., ..p]).assign(&x);
    out
}

/// Out-of-fold predictions, one column per learner. Columns of learners that
/// failed on any fold are NaN and carry the failure message.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPredictions {
    pub predictions: Array2<f64>,
    pub failures: Vec<Option<String>>,
}

impl CvPredictions {
    pub fn usable(&self) -> Vec<usize> {
        (0..self.failures.len()).filter(|&k| self.failures[k].is_none()).collect()
    }
}

/// Training rows: `rows_x` with per-row subject labels in `row_subject`.
/// Queries: one row per subject in `query`.
struct CrossFit<'a> {
    rows_x: ArrayView2<'a, f64>,
    rows_y: &'a [f64],
    rows_w: Option<&'a [f64]>,
    row_subject: &'a [usize],
    query: ArrayView2<'a, f64>,
    task: Task,
}

fn cross_fit(library: &[Learner], data: &CrossFit<'_>, folds: &Folds, seed: u64) -> CvPredictions {
    let n = data.query.nrows();
    let jobs: Vec<(usize, usize)> =
        (0..library.len()).flat_map(|k| (0..folds.v).map(move |v| (k, v))).collect();
    let results: Vec<Result<(Vec<usize>, Vec<f64>)>> = jobs
        .par_iter()
        .map(|&(k, v)| {
            let train: Vec<usize> = (0..data.row_subject.len())
                .filter(|&r| folds.assignment[data.row_subject[r]] != v)
                .collect();
            let held_out = folds.validation(v);
            assert!(
                train.iter().all(|&r| folds.assignment[data.row_subject[r]] != v),
                "validation subject leaked into its training split"
            );
            let x = data.rows_x.select(Axis(0), &train);
            let y: Vec<f64> = train.iter().map(|&r| data.rows_y[r]).collect();
            let w: Option<Vec<f64>> = data.rows_w.map(|w| train.iter().map(|&r| w[r]).collect());
            let model = library[k].fit(
                x.view(),
                &y,
                w.as_deref(),
                data.task,
                derive_seed(seed, &[SEED_CV, k as u64, v as u64]),
            )?;
            let q = data.query.select(Axis(0), &held_out);
            let pred = model.predict(q.view())?;
            if pred.iter().any(|p| !p.is_finite()) {
                return Err(Error::Learner {
                    learner: library[k].name.clone(),
                    reason: "non-finite prediction".into(),
                });
            }
            Ok((held_out, pred))
        })
        .collect();

    let mut predictions = Array2::from_elem((n, library.len()), f64::NAN);
    let mut failures: Vec<Option<String>> = vec![None; library.len()];
    for (&(k, v), res) in jobs.iter().zip(results) {
        match res {
            Ok((rows, pred)) => {
                for (i, p) in rows.into_iter().zip(pred) {
                    predictions[[i, k]] = p;
                }
            }
            Err(e) => {
                if failures[k].is_none() {
                    failures[k] = Some(format!("fold {v}: {e}"));
                }
            }
        }
    }
    for (k, f) in failures.iter().enumerate() {
        if f.is_some() {
            predictions.column_mut(k).fill(f64::NAN);
        }
    }
    CvPredictions { predictions, failures }
}

/// Cross-fitted predictions of every learner at `(X_i, t_star)`. All rows of a
/// subject share its fold.
pub fn cv_base_predictions(
    library: &[Learner],
    stacked: &StackedDesign,
    folds: &Folds,
    t_star: f64,
    seed: u64,
) -> Result<CvPredictions> {
    if folds.assignment.len() != stacked.n_subjects {
        return Err(Error::LengthMismatch { expected: stacked.n_subjects, actual: folds.assignment.len() });
    }
    let m = stacked.times.len();
    let p = stacked.x.ncols() - 1;
    let covariates = stacked.x.slice(s![..;m, ..p]);
    let query = with_time_column(covariates, t_star);
    let data = CrossFit {
        rows_x: stacked.x.view(),
        rows_y: &stacked.outcome,
        rows_w: None,
        row_subject: &stacked.subject,
        query: query.view(),
        task: Task::Regression,
    };
    Ok(cross_fit(library, &data, folds, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    PseudoAuc,
    BinaryNnloglik,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerReport {
    pub name: String,
    /// Cross-validated AUC (pseudo mode) or weighted log-loss (binary mode).
    pub cv_score: Option<f64>,
    pub alpha_raw: Option<f64>,
    pub alpha_star: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub learners: Vec<LearnerReport>,
    /// Cross-validated score of the weighted combination.
    pub ensemble_cv_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub schema_version: u32,
    pub mode: EnsembleMode,
    pub cause: u8,
    pub t_star: f64,
    pub grid: Vec<f64>,
    pub lambda: Option<f64>,
    pub feature_names: Vec<String>,
    /// Full-data refits of the learners that survived cross-validation.
    pub models: Vec<FittedModel>,
    pub alpha_raw: Vec<f64>,
    pub alpha_star: Vec<f64>,
    pub cv_report: CvReport,
}

impl EnsembleModel {
    pub fn p(&self) -> usize {
        self.feature_names.len()
    }

    /// Base-model predictions at `t_star`, one column per model.
    pub fn base_predictions(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.p() {
            return Err(Error::DimensionMismatch { expected: self.p(), actual: x.ncols() });
        }
        let design = match self.mode {
            EnsembleMode::PseudoAuc => with_time_column(x, self.t_star),
            EnsembleMode::BinaryNnloglik => x.to_owned(),
        };
        let mut out = Array2::zeros((x.nrows(), self.models.len()));
        for (k, model) in self.models.iter().enumerate() {
            let pred = model.predict(design.view())?;
            out.column_mut(k).assign(&ndarray::Array1::from(pred));
        }
        Ok(out)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let base = self.base_predictions(x)?;
        Ok(base
            .outer_iter()
            .map(|row| row.iter().zip(&self.alpha_star).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let model: EnsembleModel = serde_json::from_str(json)?;
        if model.schema_version != SCHEMA_VERSION {
            return Err(Error::param(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", model.schema_version),
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Convenience entry point: `α*ᵀ f(X, t_star)`.
pub fn predict_ensemble(model: &EnsembleModel, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    model.predict(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoOptions {
    pub grid: Vec<f64>,
    pub t_star: f64,
    pub cause: u8,
    pub folds: usize,
    pub lambda: f64,
    /// Compute pseudo-values within strata.
    pub stratified: bool,
    pub seed: u64,
}

impl PseudoOptions {
    pub fn new(grid: Vec<f64>, t_star: f64) -> Self {
        PseudoOptions {
            grid,
            t_star,
            cause: 1,
            folds: DEFAULT_FOLDS,
            lambda: DEFAULT_LAMBDA,
            stratified: false,
            seed: 0,
        }
    }
}

fn refit_all(
    library: &[Learner],
    usable: &[usize],
    x: ArrayView2<'_, f64>,
    y: &[f64],
    w: Option<&[f64]>,
    task: Task,
    seed: u64,
) -> Result<Vec<FittedModel>> {
    usable
        .par_iter()
        .map(|&k| library[k].fit(x, y, w, task, derive_seed(seed, &[SEED_REFIT, k as u64])))
        .collect()
}

fn check_library(library: &[Learner]) -> Result<()> {
    if library.is_empty() {
        return Err(Error::param("library", "library is empty"));
    }
    for (k, l) in library.iter().enumerate() {
        if library[..k].iter().any(|o| o.name == l.name) {
            return Err(Error::DuplicateLearner(l.name.clone()));
        }
    }
    Ok(())
}

/// Pseudo-value stacked ensemble with AUC-optimal combination weights.
pub fn fit_superlearner_pseudo(
    dataset: &SurvivalDataset,
    library: &[Learner],
    opts: &PseudoOptions,
) -> Result<EnsembleModel> {
    check_library(library)?;
    if !opts.grid.contains(&opts.t_star) {
        return Err(Error::InvalidGrid(format!("t_star {} is not on the grid", opts.t_star)));
    }
    if opts.cause == 0 {
        return Err(Error::InvalidCause(0));
    }
    let pseudo = if opts.stratified {
        stratified_pseudo_observations(dataset, &[opts.cause], &opts.grid)?
    } else {
        pseudo_observations(dataset, &[opts.cause], &opts.grid)?
    };
    let folds = make_folds(dataset.n(), opts.folds, derive_seed(opts.seed, &[SEED_FOLDS]))?;
    let stacked = stack_time_grid(dataset, &pseudo, opts.cause)?;
    let cv = cv_base_predictions(library, &stacked, &folds, opts.t_star, opts.seed)?;
    let usable = cv.usable();
    if usable.is_empty() {
        return Err(Error::AllLearnersFailed);
    }
    let cases = pseudo.cause_at(opts.cause, opts.t_star)?;
    let controls = pseudo.survival_at(opts.t_star)?;
    let c = cv.predictions.select(Axis(1), &usable);
    let weights = optimize_auc_weights(
        c.view(),
        &cases,
        &controls,
        opts.lambda,
        derive_seed(opts.seed, &[SEED_WEIGHTS]),
    )
    .map_err(|e| match e {
        Error::NoIncidenceMass { sum, .. } => Error::NoIncidenceMass { time: opts.t_star, sum },
        Error::NoControlMass { sum, .. } => Error::NoControlMass { time: opts.t_star, sum },
        other => other,
    })?;
    let models = refit_all(
        library,
        &usable,
        stacked.x.view(),
        &stacked.outcome,
        None,
        Task::Regression,
        opts.seed,
    )?;

    let learners = library
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let pos = usable.iter().position(|&u| u == k);
            LearnerReport {
                name: l.name.clone(),
                cv_score: pos.and_then(|_| {
                    weighted_auc(&cases, &controls, &cv.predictions.column(k).to_vec())
                }),
                alpha_raw: pos.map(|j| weights.alpha_raw[j]),
                alpha_star: pos.map(|j| weights.alpha_star[j]),
                failure: cv.failures[k].clone(),
            }
        })
        .collect();
    Ok(EnsembleModel {
        schema_version: SCHEMA_VERSION,
        mode: EnsembleMode::PseudoAuc,
        cause: opts.cause,
        t_star: opts.t_star,
        grid: opts.grid.clone(),
        lambda: Some(opts.lambda),
        feature_names: dataset.feature_names().to_vec(),
        models,
        alpha_raw: weights.alpha_raw,
        alpha_star: weights.alpha_star,
        cv_report: CvReport { folds: opts.folds, learners, ensemble_cv_score: weights.auc },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryOptions {
    pub t_star: f64,
    pub cause: u8,
    pub folds: usize,
    /// Estimate the censoring distribution within strata.
    pub stratified_weights: bool,
    pub seed: u64,
}

impl BinaryOptions {
    pub fn new(t_star: f64) -> Self {
        BinaryOptions { t_star, cause: 1, folds: DEFAULT_FOLDS, stratified_weights: false, seed: 0 }
    }
}

/// IPCW-weighted binary stacked ensemble for `I(y <= t_star, event = cause)`.
pub fn fit_superlearner_binary(
    dataset: &SurvivalDataset,
    library: &[Learner],
    opts: &BinaryOptions,
) -> Result<EnsembleModel> {
    check_library(library)?;
    if let Some(l) = library.iter().find(|l| !l.kind().supports(Task::Binary)) {
        return Err(Error::UnsupportedWeights(l.name.clone()));
    }
    if opts.cause == 0 {
        return Err(Error::InvalidCause(0));
    }
    let ipcw = ipcw_weights(dataset, opts.t_star, opts.stratified_weights)?;
    let rows: Vec<usize> = (0..dataset.n()).filter(|&i| ipcw.weights[i] > 0.0).collect();
    if rows.is_empty() {
        return Err(Error::NoUsableSubjects);
    }
    let x = dataset.covariates().select(Axis(0), &rows);
    let labels: Vec<bool> = rows
        .iter()
        .map(|&i| dataset.times()[i] <= opts.t_star && dataset.events()[i] == opts.cause)
        .collect();
    let y: Vec<f64> = labels.iter().map(|&b| f64::from(u8::from(b))).collect();
    let w: Vec<f64> = rows.iter().map(|&i| ipcw.weights[i]).collect();
    let subject: Vec<usize> = (0..rows.len()).collect();
    let folds = make_folds(rows.len(), opts.folds, derive_seed(opts.seed, &[SEED_FOLDS]))?;
    let data = CrossFit {
        rows_x: x.view(),
        rows_y: &y,
        rows_w: Some(&w),
        row_subject: &subject,
        query: x.view(),
        task: Task::Binary,
    };
    let cv = cross_fit(library, &data, &folds, opts.seed);
    let usable = cv.usable();
    if usable.is_empty() {
        return Err(Error::AllLearnersFailed);
    }
    let probs = cv.predictions.select(Axis(1), &usable);
    let alpha = optimize_nnloglik_weights(probs.view(), &labels, &w)?;
    let combined: Vec<f64> = probs
        .outer_iter()
        .map(|r| r.iter().zip(&alpha).map(|(a, b)| a * b).sum())
        .collect();
    let ensemble_cv_score = nn_loglik(&labels, &combined, &w)?;
    let models = refit_all(library, &usable, x.view(), &y, Some(&w), Task::Binary, opts.seed)?;
    let learners = library
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let pos = usable.iter().position(|&u| u == k);
            LearnerReport {
                name: l.name.clone(),
                cv_score: pos.and_then(|_| {
                    nn_loglik(&labels, &cv.predictions.column(k).to_vec(), &w).ok()
                }),
                alpha_raw: pos.map(|j| alpha[j]),
                alpha_star: pos.map(|j| alpha[j]),
                failure: cv.failures[k].clone(),
            }
        })
        .collect();
    Ok(EnsembleModel {
        schema_version: SCHEMA_VERSION,
        mode: EnsembleMode::BinaryNnloglik,
        cause: opts.cause,
        t_star: opts.t_star,
        grid: vec![opts.t_star],
        lambda: None,
        feature_names: dataset.feature_names().to_vec(),
        models,
        alpha_raw: alpha.clone(),
        alpha_star: alpha,
        cv_report: CvReport { folds: opts.folds, learners, ensemble_cv_score },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Algorithm;
    use rand::Rng as _;

    fn toy(n: usize, seed: u64) -> SurvivalDataset {
        let mut rng = rng_from_seed(seed);
        let mut times = Vec::new();
        let mut events = Vec::new();
        let x = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
        for i in 0..n {
            let risk = 0.5 + 2.0 * x[[i, 0]];
            let t1 = -rng.random::<f64>().ln() / risk;
            let t2 = -rng.random::<f64>().ln() / 0.5;
            let c = rng.random::<f64>() * 3.0;
            let t = t1.min(t2).min(c);
            times.push(t);
            events.push(if t == c { 0 } else if t == t1 { 1 } else { 2 });
        }
        SurvivalDataset::new(times, events, x, None, None).unwrap()
    }

    #[test]
    fn folds_have_expected_sizes() {
        assert_eq!(make_folds(10, 5, 1).unwrap().sizes(), vec![2; 5]);
        assert_eq!(make_folds(11, 5, 1).unwrap().sizes(), vec![3, 2, 2, 2, 2]);
        let f = make_folds(37, 4, 9).unwrap();
        let mut all: Vec<usize> = (0..4).flat_map(|v| f.validation(v)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        assert!(make_folds(3, 5, 0).is_err());
        assert!(make_folds(3, 1, 0).is_err());
    }

    #[test]
    fn stacking_layout() {
        let d = toy(3, 2);
        let grid = [0.2, 0.4, 0.6, 0.8];
        let pseudo = pseudo_observations(&d, &[1], &grid).unwrap();
        let st = stack_time_grid(&d, &pseudo, 1).unwrap();
        assert_eq!(st.x.dim(), (12, 3));
        for r in 0..12 {
            let (i, l) = (r / 4, r % 4);
            assert_eq!(st.subject[r], i);
            assert_eq!(st.x[[r, 2]], grid[l]);
            assert_eq!(st.x[[r, 0]], d.covariates()[[i, 0]]);
            assert_eq!(st.outcome[r], pseudo.values[[i, l, 0]]);
        }
    }

    #[test]
    fn mean_learner_predicts_training_fold_mean() {
        let d = toy(30, 3);
        let grid = [0.3, 0.6];
        let pseudo = pseudo_observations(&d, &[1], &grid).unwrap();
        let st = stack_time_grid(&d, &pseudo, 1).unwrap();
        let folds = make_folds(30, 5, 4).unwrap();
        let lib = [Learner::new("mean", Algorithm::Mean)];
        let cv = cv_base_predictions(&lib, &st, &folds, 0.6, 0).unwrap();
        for i in 0..30 {
            let v = folds.assignment[i];
            let rows: Vec<usize> = (0..60).filter(|&r| folds.assignment[st.subject[r]] != v).collect();
            let mean = rows.iter().map(|&r| st.outcome[r]).sum::<f64>() / rows.len() as f64;
            assert!((cv.predictions[[i, 0]] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn single_learner_ensemble_is_its_refit() {
        let d = toy(60, 5);
        let lib = [Learner::new("ols", Algorithm::Ols)];
        let mut opts = PseudoOptions::new(vec![0.5], 0.5);
        opts.folds = 5;
        let model = fit_superlearner_pseudo(&d, &lib, &opts).unwrap();
        assert_eq!(model.alpha_star, vec![1.0]);
        let refit = lib[0]
            .fit(with_time_column(d.covariates(), 0.5).view(), &pseudo_observations(&d, &[1], &[0.5]).unwrap().cause_at(1, 0.5).unwrap(), None, Task::Regression, 0)
            .unwrap();
        let a = model.predict(d.covariates()).unwrap();
        let b = refit.predict(with_time_column(d.covariates(), 0.5).view()).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_prediction_is_weighted_sum_and_round_trips() {
        let d = toy(80, 6);
        let lib = [
            Learner::new("ols", Algorithm::Ols),
            Learner::new("knn", Algorithm::Knn),
            Learner::new("cart", Algorithm::Cart),
        ];
        let mut opts = PseudoOptions::new(vec![0.3, 0.6, 0.9], 0.6);
        opts.folds = 4;
        let model = fit_superlearner_pseudo(&d, &lib, &opts).unwrap();
        assert!((model.alpha_star.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let base = model.base_predictions(d.covariates()).unwrap();
        let pred = model.predict(d.covariates()).unwrap();
        for (i, p) in pred.iter().enumerate() {
            let manual: f64 = (0..3).map(|k| base[[i, k]] * model.alpha_star[k]).sum();
            assert!((p - manual).abs() < 1e-12);
        }
        let back = EnsembleModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back.predict(d.covariates()).unwrap(), pred);
        let best_single = model
            .cv_report
            .learners
            .iter()
            .filter_map(|l| l.cv_score)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(model.cv_report.ensemble_cv_score >= best_single - 1e-9);
    }

    #[test]
    fn failing_learner_is_dropped() {
        let d = toy(40, 7);
        let lib = [
            Learner::new("ols", Algorithm::Ols),
            Learner::new("bad", Algorithm::Knn).with("k", 0.0),
        ];
        let mut opts = PseudoOptions::new(vec![0.5], 0.5);
        opts.folds = 4;
        let model = fit_superlearner_pseudo(&d, &lib, &opts).unwrap();
        assert_eq!(model.models.len(), 1);
        assert!(model.cv_report.learners[1].failure.is_some());
        assert_eq!(model.alpha_star, vec![1.0]);
    }

    #[test]
    fn binary_mode_requires_weight_capable_learners() {
        let d = toy(40, 8);
        let lib = [Learner::new("ols", Algorithm::Ols)];
        assert!(matches!(
            fit_superlearner_binary(&d, &lib, &BinaryOptions::new(0.5)),
            Err(Error::UnsupportedWeights(_))
        ));
        let lib = [Learner::new("logistic", Algorithm::Logistic), Learner::new("cart", Algorithm::Cart)];
        let mut opts = BinaryOptions::new(0.5);
        opts.folds = 4;
        let model = fit_superlearner_binary(&d, &lib, &opts).unwrap();
        assert!(model.alpha_star.iter().all(|&a| a >= 0.0));
        assert!((model.alpha_star.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for p in model.predict(d.covariates()).unwrap() {
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn all_censored_before_t_star_has_no_usable_subjects() {
        let x = Array2::zeros((4, 1));
        let d = SurvivalDataset::new(vec![0.1, 0.2, 0.3, 0.4], vec![0, 0, 0, 0], x, None, None).unwrap();
        let lib = [Learner::new("logistic", Algorithm::Logistic)];
        let mut opts = BinaryOptions::new(1.0);
        opts.folds = 2;
        let err = fit_superlearner_binary(&d, &lib, &opts).unwrap_err();
        assert!(matches!(err, Error::NoUsableSubjects), "{err:?}");
    }
}
