//! Base learners for the stacked ensemble.
//!
//! A [`Learner`] is a named algorithm plus hyperparameter overrides and an
//! optional correlation screen. Fitting produces an immutable
//! [`FittedModel`] that predicts on matrices with the original columns.

mod knn;
mod lasso;
mod linear;
mod logistic;
mod screen;
mod tree;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lasso::{lasso_fit, LassoFit};
pub use screen::correlation_screen;
pub use tree::Tree;

/// Probabilities from binary models are kept inside `[EPS, 1 - EPS]`.
pub const PROB_EPS: f64 = 1e-8;

pub const DEFAULT_SCREEN_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Continuous outcome (pseudo-observations), squared-error loss.
    Regression,
    /// Outcome in {0,1}, optionally weighted; predictions are probabilities.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Regression,
    WeightedBinary,
    Both,
}

impl LearnerKind {
    pub fn supports(self, task: Task) -> bool {
        matches!(
            (self, task),
            (LearnerKind::Both, _)
                | (LearnerKind::Regression, Task::Regression)
                | (LearnerKind::WeightedBinary, Task::Binary)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Mean,
    Ols,
    Stepwise,
    Ridge,
    Lasso,
    Logistic,
    LassoLogistic,
    Cart,
    RandomForest,
    Knn,
    Gbm,
}

impl Algorithm {
    pub fn kind(self) -> LearnerKind {
        match self {
            Algorithm::Mean | Algorithm::Cart | Algorithm::RandomForest | Algorithm::Gbm => {
                LearnerKind::Both
            }
            Algorithm::Ols
            | Algorithm::Stepwise
            | Algorithm::Ridge
            | Algorithm::Lasso
            | Algorithm::Knn => LearnerKind::Regression,
            Algorithm::Logistic | Algorithm::LassoLogistic => LearnerKind::WeightedBinary,
        }
    }

    /// Hyperparameters and their defaults. A `None` default means the value
    /// is chosen from the data unless overridden.
    fn defaults(self) -> &'static [(&'static str, Option<f64>)] {
        match self {
            Algorithm::Mean | Algorithm::Ols | Algorithm::Logistic => &[],
            Algorithm::Stepwise => &[("max_steps", None)],
            Algorithm::Ridge => &[("lambda", None)],
            Algorithm::Lasso | Algorithm::LassoLogistic => {
                &[("lambda", None), ("folds", Some(5.0)), ("nlambda", Some(40.0))]
            }
            Algorithm::Cart => &[
                ("max_depth", Some(30.0)),
                ("min_leaf", Some(5.0)),
                ("cp", Some(0.01)),
            ],
            Algorithm::RandomForest => &[
                ("trees", Some(100.0)),
                ("mtry", None),
                ("min_leaf", Some(5.0)),
                ("max_depth", Some(64.0)),
            ],
            Algorithm::Knn => &[("k", Some(10.0))],
            Algorithm::Gbm => &[
                ("rounds", Some(200.0)),
                ("depth", Some(2.0)),
                ("learning_rate", Some(0.1)),
                ("lambda", Some(1.0)),
                ("min_child_weight", Some(1.0)),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub name: String,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, f64>,
    /// Correlation-screen p-value threshold applied before fitting.
    #[serde(default)]
    pub screen: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LibraryMode {
    Pseudo,
    Binary,
}

/// Resolved hyperparameters for one fit.
struct Params<'a> {
    learner: &'a str,
    values: BTreeMap<&'static str, Option<f64>>,
}

impl Params<'_> {
    fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied().flatten()
    }

    fn float(&self, key: &str) -> f64 {
        self.get(key).expect("hyperparameter with default")
    }

    fn positive_int(&self, key: &str) -> Result<usize> {
        self.opt_positive_int(key).map(|v| v.expect("hyperparameter with default"))
    }

    fn opt_positive_int(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) if v >= 1.0 && v.fract() == 0.0 && v.is_finite() => Ok(Some(v as usize)),
            Some(v) => Err(Error::Learner {
                learner: self.learner.to_string(),
                reason: format!("hyperparameter {key} must be a positive integer, got {v}"),
            }),
        }
    }

    fn nonneg(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            Some(v) if !(v >= 0.0 && v.is_finite()) => Err(Error::Learner {
                learner: self.learner.to_string(),
                reason: format!("hyperparameter {key} must be finite and non-negative, got {v}"),
            }),
            other => Ok(other),
        }
    }
}

impl Learner {
    pub fn new(name: impl Into<String>, algorithm: Algorithm) -> Self {
        Learner { name: name.into(), algorithm, hyperparameters: BTreeMap::new(), screen: None }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.hyperparameters.insert(key.to_string(), value);
        self
    }

    pub fn with_screen(mut self, threshold: f64) -> Self {
        self.screen = Some(threshold);
        self
    }

    pub fn kind(&self) -> LearnerKind {
        self.algorithm.kind()
    }

    fn resolve(&self) -> Result<Params<'_>> {
        let defaults = self.algorithm.defaults();
        let mut values: BTreeMap<&'static str, Option<f64>> = defaults.iter().copied().collect();
        for (key, value) in &self.hyperparameters {
            match defaults.iter().find(|(k, _)| k == key) {
                Some((k, _)) => {
                    values.insert(k, Some(*value));
                }
                None => {
                    return Err(Error::Learner {
                        learner: self.name.clone(),
                        reason: format!("unknown hyperparameter {key:?}"),
                    })
                }
            }
        }
        Ok(Params { learner: &self.name, values })
    }

    /// Fit on `x` (n x p) and `y`. Weights are only accepted for binary tasks.
    pub fn fit(
        &self,
        x: ArrayView2<'_, f64>,
        y: &[f64],
        weights: Option<&[f64]>,
        task: Task,
        seed: u64,
    ) -> Result<FittedModel> {
        let (n, p) = x.dim();
        if y.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: y.len() });
        }
        if n < 2 {
            return Err(Error::TooFewRecords { required: 2, actual: n });
        }
        if !self.kind().supports(task) {
            return Err(Error::Learner {
                learner: self.name.clone(),
                reason: format!("kind {:?} cannot fit a {:?} task", self.kind(), task),
            });
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Learner {
                learner: self.name.clone(),
                reason: "non-finite value in training data".into(),
            });
        }
        if task == Task::Binary && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Learner {
                learner: self.name.clone(),
                reason: "binary task requires y in {0,1}".into(),
            });
        }
        let w = match weights {
            None => vec![1.0; n],
            Some(w) => {
                if task == Task::Regression {
                    return Err(Error::UnsupportedWeights(self.name.clone()));
                }
                normalize_weights(w, n)?
            }
        };
        let params = self.resolve()?;

        let features: Vec<usize> = match self.screen {
            Some(threshold) if p > 0 => correlation_screen(x, y, threshold)?,
            _ => (0..p).collect(),
        };
        let xs = x.select(Axis(1), &features);
        let xs = xs.view();

        let (body, regularized) = match self.algorithm {
            Algorithm::Mean => {
                let m = weighted_mean(y, &w);
                let value = if task == Task::Binary { logit(m) } else { m };
                (ModelBody::Constant(value), false)
            }
            Algorithm::Ols => {
                let (lin, reg) = linear::ols(xs, y);
                (ModelBody::Linear(lin), reg)
            }
            Algorithm::Stepwise => {
                let max_steps = params.opt_positive_int("max_steps")?;
                let (lin, reg) = linear::forward_stepwise(xs, y, max_steps);
                (ModelBody::Linear(lin), reg)
            }
            Algorithm::Ridge => {
                let (lin, reg) = linear::ridge(xs, y, params.nonneg("lambda")?);
                (ModelBody::Linear(lin), reg)
            }
            Algorithm::Lasso | Algorithm::LassoLogistic => {
                let opts = lasso::CvOptions {
                    lambda: params.nonneg("lambda")?,
                    folds: params.positive_int("folds")?,
                    nlambda: params.positive_int("nlambda")?,
                    logistic: self.algorithm == Algorithm::LassoLogistic,
                    seed,
                };
                (ModelBody::Linear(lasso::fit_cv(xs, y, &w, &opts)), false)
            }
            Algorithm::Logistic => {
                let (lin, reg) = logistic::fit(xs, y, &w);
                (ModelBody::Linear(lin), reg)
            }
            Algorithm::Cart => {
                let tp = tree::TreeParams {
                    max_depth: params.positive_int("max_depth")?,
                    min_leaf: params.positive_int("min_leaf")?,
                    min_child_weight: 0.0,
                    l2: 0.0,
                    cp: params.nonneg("cp")?.unwrap_or(0.0),
                    mtry: None,
                };
                (ModelBody::Tree(tree::fit_cart(xs, y, &w, &tp)), false)
            }
            Algorithm::RandomForest => {
                let mtry = params
                    .opt_positive_int("mtry")?
                    .unwrap_or_else(|| ((features.len() as f64).sqrt().floor() as usize).max(1));
                let tp = tree::TreeParams {
                    max_depth: params.positive_int("max_depth")?,
                    min_leaf: params.positive_int("min_leaf")?,
                    min_child_weight: 0.0,
                    l2: 0.0,
                    cp: 0.0,
                    mtry: Some(mtry.min(features.len().max(1))),
                };
                let trees = params.positive_int("trees")?;
                (ModelBody::Forest(tree::fit_forest(xs, y, &w, &tp, trees, seed)), false)
            }
            Algorithm::Knn => {
                let k = params.positive_int("k")?;
                (ModelBody::Knn(knn::KnnModel::fit(xs, y, k)), false)
            }
            Algorithm::Gbm => {
                let lr = params.float("learning_rate");
                if !(lr > 0.0 && lr <= 1.0) {
                    return Err(Error::Learner {
                        learner: self.name.clone(),
                        reason: format!("learning_rate must be in (0,1], got {lr}"),
                    });
                }
                let tp = tree::TreeParams {
                    max_depth: params.positive_int("depth")?,
                    min_leaf: 1,
                    min_child_weight: params.nonneg("min_child_weight")?.unwrap_or(0.0),
                    l2: params.nonneg("lambda")?.unwrap_or(0.0),
                    cp: 0.0,
                    mtry: None,
                };
                let rounds = params.positive_int("rounds")?;
                let boosted = tree::fit_gbm(xs, y, &w, &tp, rounds, lr, task == Task::Binary);
                (ModelBody::Boosted(boosted), false)
            }
        };
        Ok(FittedModel {
            learner: self.name.clone(),
            task,
            p,
            features,
            regularized,
            body,
        })
    }
}

fn normalize_weights(w: &[f64], n: usize) -> Result<Vec<f64>> {
    if w.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: w.len() });
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::param("weights", "weights must be finite and non-negative"));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    // Rescale to mean one so that multiplying all weights by a constant
    // leaves every fit unchanged.
    let scale = n as f64 / total;
    Ok(w.iter().map(|v| v * scale).collect())
}

pub(crate) fn weighted_mean(y: &[f64], w: &[f64]) -> f64 {
    let (mut s, mut sw) = (0.0, 0.0);
    for (yi, wi) in y.iter().zip(w) {
        s += wi * yi;
        sw += wi;
    }
    s / sw
}

pub(crate) fn logit(p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (p / (1.0 - p)).ln()
}

pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Affine predictor on the screened columns, `intercept + x . coef`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearModel {
    fn eta(&self, row: ndarray::ArrayView1<'_, f64>) -> f64 {
        self.intercept + row.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum ModelBody {
    Constant(f64),
    Linear(LinearModel),
    Tree(Tree),
    Forest(Vec<Tree>),
    Boosted(tree::Boosted),
    Knn(knn::KnnModel),
}

/// A fitted learner. For binary tasks the raw output is a log-odds (linear,
/// boosted, constant) or a leaf proportion (trees), mapped to a probability
/// by [`FittedModel::predict`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub learner: String,
    pub task: Task,
    /// Column count of the training matrix.
    pub p: usize,
    /// Columns kept after screening, as indices into the training matrix.
    pub features: Vec<usize>,
    /// The design was singular and a ridge-stabilized solve was used.
    pub regularized: bool,
    pub body: ModelBody,
}

impl FittedModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.predict_staged(x, None)
    }

    /// Boosted models only: predictions using the first `rounds` trees.
    pub fn staged_predict(&self, x: ArrayView2<'_, f64>, rounds: usize) -> Result<Vec<f64>> {
        if !matches!(self.body, ModelBody::Boosted(_)) {
            return Err(Error::Learner {
                learner: self.learner.clone(),
                reason: "staged prediction needs a boosted model".into(),
            });
        }
        self.predict_staged(x, Some(rounds))
    }

    fn predict_staged(&self, x: ArrayView2<'_, f64>, rounds: Option<usize>) -> Result<Vec<f64>> {
        if x.ncols() != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, actual: x.ncols() });
        }
        let xs: Array2<f64> = x.select(Axis(1), &self.features);
        let binary = self.task == Task::Binary;
        let out = xs
            .outer_iter()
            .map(|row| match &self.body {
                ModelBody::Constant(v) => link(*v, binary),
                ModelBody::Linear(lin) => link(lin.eta(row), binary),
                ModelBody::Tree(t) => clamp_prob(t.predict_row(row), binary),
                ModelBody::Forest(trees) => {
                    let s: f64 = trees.iter().map(|t| t.predict_row(row)).sum();
                    clamp_prob(s / trees.len() as f64, binary)
                }
                ModelBody::Boosted(b) => link(b.raw_row(row, rounds), binary),
                ModelBody::Knn(k) => k.predict_row(row),
            })
            .collect();
        Ok(out)
    }
}

fn link(eta: f64, binary: bool) -> f64 {
    if binary {
        clamp_prob(sigmoid(eta), true)
    } else {
        eta
    }
}

fn clamp_prob(v: f64, binary: bool) -> f64 {
    if binary {
        v.clamp(PROB_EPS, 1.0 - PROB_EPS)
    } else {
        v
    }
}

pub const GBM_LEARNING_RATES: [f64; 3] = [0.01, 0.1, 0.2];

fn gbm(lr: f64) -> Learner {
    Learner::new(format!("xgb_200_2_{lr}"), Algorithm::Gbm)
        .with("rounds", 200.0)
        .with("depth", 2.0)
        .with("learning_rate", lr)
}

pub fn builtin_library(mode: LibraryMode) -> Vec<Learner> {
    let mut lib = match mode {
        LibraryMode::Pseudo => vec![
            Learner::new("ols_screen", Algorithm::Ols).with_screen(DEFAULT_SCREEN_THRESHOLD),
            Learner::new("stepwise", Algorithm::Stepwise),
            Learner::new("ridge", Algorithm::Ridge),
            Learner::new("lasso", Algorithm::Lasso),
            Learner::new("cart", Algorithm::Cart),
            Learner::new("random_forest", Algorithm::RandomForest),
            Learner::new("knn", Algorithm::Knn),
        ],
        LibraryMode::Binary => vec![
            Learner::new("logistic", Algorithm::Logistic),
            Learner::new("lasso_logistic", Algorithm::LassoLogistic),
            Learner::new("cart", Algorithm::Cart),
            Learner::new("random_forest", Algorithm::RandomForest),
        ],
    };
    lib.extend(GBM_LEARNING_RATES.iter().map(|&lr| gbm(lr)));
    lib
}

/// One entry of a JSON library file. `base` names a built-in learner or an
/// algorithm; the remaining fields override it.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryEntry {
    base: String,
    name: Option<String>,
    #[serde(default)]
    hyperparameters: BTreeMap<String, f64>,
    screen: Option<f64>,
    #[serde(default)]
    no_screen: bool,
}

/// Parse a library from JSON: a list of `{ "base": ..., "name": ...,
/// "hyperparameters": {...}, "screen": 0.1 }` objects.
pub fn library_from_json(json: &str, mode: LibraryMode) -> Result<Vec<Learner>> {
    let entries: Vec<LibraryEntry> = serde_json::from_str(json)?;
    let builtins = builtin_library(LibraryMode::Pseudo)
        .into_iter()
        .chain(builtin_library(LibraryMode::Binary))
        .collect::<Vec<_>>();
    let mut out: Vec<Learner> = Vec::with_capacity(entries.len());
    for entry in entries {
        let mut learner = match builtins.iter().find(|l| l.name == entry.base) {
            Some(l) => l.clone(),
            None => {
                let algorithm: Algorithm =
                    serde_json::from_value(serde_json::Value::String(entry.base.clone()))
                        .map_err(|_| Error::UnknownLearner(entry.base.clone()))?;
                Learner::new(entry.base.clone(), algorithm)
            }
        };
        if let Some(name) = entry.name {
            learner.name = name;
        }
        learner.hyperparameters.extend(entry.hyperparameters);
        if entry.screen.is_some() {
            learner.screen = entry.screen;
        }
        if entry.no_screen {
            learner.screen = None;
        }
        learner.resolve()?;
        if mode == LibraryMode::Binary && !learner.kind().supports(Task::Binary) {
            return Err(Error::UnsupportedWeights(learner.name));
        }
        if out.iter().any(|l| l.name == learner.name) {
            return Err(Error::DuplicateLearner(learner.name));
        }
        out.push(learner);
    }
    if out.is_empty() {
        return Err(Error::param("library", "library is empty"));
    }
    Ok(out)
}

pub fn read_library(path: &Path, mode: LibraryMode) -> Result<Vec<Learner>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    library_from_json(&text, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng as _, SeedableRng};

    fn random_problem(n: usize, p: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y = x
            .outer_iter()
            .map(|r| r[0] - 0.5 * r[1] * r[1] + 0.3 * rng.random::<f64>())
            .collect();
        (x, y)
    }

    #[test]
    fn linear_learners_reproduce_exact_line() {
        let x = Array2::from_shape_fn((12, 1), |(i, _)| i as f64 * 0.5 - 2.0);
        let y: Vec<f64> = x.column(0).iter().map(|v| 2.0 * v + 1.0).collect();
        for alg in [Algorithm::Ols, Algorithm::Stepwise] {
            let m = Learner::new("l", alg).fit(x.view(), &y, None, Task::Regression, 0).unwrap();
            let pred = m.predict(x.view()).unwrap();
            for (a, b) in pred.iter().zip(&y) {
                assert!((a - b).abs() < 1e-8, "{alg:?}");
            }
        }
    }

    #[test]
    fn tree_on_constant_y_is_constant() {
        let (x, _) = random_problem(40, 3, 1);
        let y = vec![0.7; 40];
        for alg in [Algorithm::Cart, Algorithm::RandomForest, Algorithm::Gbm] {
            let m = Learner::new("t", alg).fit(x.view(), &y, None, Task::Regression, 3).unwrap();
            for v in m.predict(x.view()).unwrap() {
                assert!((v - 0.7).abs() < 1e-12, "{alg:?} {v}");
            }
        }
    }

    #[test]
    fn regression_learners_beat_mean_in_training() {
        let (x, y) = random_problem(120, 4, 2);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        for l in builtin_library(LibraryMode::Pseudo) {
            let m = l.fit(x.view(), &y, None, Task::Regression, 5).unwrap();
            let pred = m.predict(x.view()).unwrap();
            let mse = pred.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 120.0;
            assert!(mse <= var + 1e-12, "{}: {mse} > {var}", l.name);
        }
    }

    #[test]
    fn every_model_body_survives_json() {
        let (x, y) = random_problem(60, 3, 4);
        let mut lib = builtin_library(LibraryMode::Pseudo);
        lib.push(Learner::new("mean", Algorithm::Mean));
        for l in lib {
            let m = l.fit(x.view(), &y, None, Task::Regression, 2).unwrap();
            let back: FittedModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            assert_eq!(back, m, "{}", l.name);
        }
    }

    #[test]
    fn fits_are_deterministic() {
        let (x, y) = random_problem(80, 4, 3);
        for l in builtin_library(LibraryMode::Pseudo) {
            let a = l.fit(x.view(), &y, None, Task::Regression, 11).unwrap();
            let b = l.fit(x.view(), &y, None, Task::Regression, 11).unwrap();
            assert_eq!(a.predict(x.view()).unwrap(), b.predict(x.view()).unwrap(), "{}", l.name);
        }
    }

    #[test]
    fn binary_library_is_weight_capable() {
        let lib = builtin_library(LibraryMode::Binary);
        assert!(lib.iter().all(|l| l.kind() != LearnerKind::Regression));
        let pseudo = builtin_library(LibraryMode::Pseudo);
        assert!(pseudo.len() >= 10);
        let mut names: Vec<_> = pseudo.iter().map(|l| l.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), pseudo.len());
    }

    #[test]
    fn gbm_names_match_hyperparameters() {
        let lib = builtin_library(LibraryMode::Pseudo);
        for (name, lr) in [("xgb_200_2_0.01", 0.01), ("xgb_200_2_0.1", 0.1), ("xgb_200_2_0.2", 0.2)] {
            let l = lib.iter().find(|l| l.name == name).unwrap();
            assert_eq!(l.algorithm, Algorithm::Gbm);
            assert_eq!(l.hyperparameters["rounds"], 200.0);
            assert_eq!(l.hyperparameters["depth"], 2.0);
            assert_eq!(l.hyperparameters["learning_rate"], lr);
        }
    }

    #[test]
    fn staged_predictions_accumulate_trees() {
        let (x, y) = random_problem(60, 3, 4);
        let m = Learner::new("g", Algorithm::Gbm)
            .with("rounds", 20.0)
            .with("learning_rate", 0.2)
            .fit(x.view(), &y, None, Task::Regression, 0)
            .unwrap();
        let ModelBody::Boosted(b) = &m.body else { panic!() };
        for r in [0, 1, 7, 20] {
            let staged = m.staged_predict(x.view(), r).unwrap();
            for (i, row) in x.outer_iter().enumerate() {
                let mut acc = b.base;
                for t in &b.trees[..r] {
                    acc += t.predict_row(row) * 0.2;
                }
                assert!((staged[i] - acc).abs() < 1e-12);
            }
        }
        assert_eq!(m.staged_predict(x.view(), 20).unwrap(), m.predict(x.view()).unwrap());
    }

    #[test]
    fn regression_learners_reject_weights() {
        let x = array![[0.0], [1.0], [2.0]];
        let err = Learner::new("o", Algorithm::Ols)
            .fit(x.view(), &[0.0, 1.0, 2.0], Some(&[1.0, 1.0, 1.0]), Task::Regression, 0)
            .unwrap_err();
        assert!(matches!(err, Error::UnsupportedWeights(_)));
    }

    #[test]
    fn predict_checks_columns() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]];
        let m = Learner::new("o", Algorithm::Ols).fit(x.view(), &[0.0, 1.0, 2.0], None, Task::Regression, 0).unwrap();
        let err = m.predict(array![[1.0]].view()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn collinear_ols_is_flagged() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]];
        let y = [1.0, 2.0, 3.0, 4.0];
        let m = Learner::new("o", Algorithm::Ols).fit(x.view(), &y, None, Task::Regression, 0).unwrap();
        assert!(m.regularized);
        for (a, b) in m.predict(x.view()).unwrap().iter().zip(&y) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn binary_predictions_are_probabilities() {
        let (x, yc) = random_problem(100, 3, 6);
        let y: Vec<f64> = yc.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        for l in builtin_library(LibraryMode::Binary) {
            let m = l.fit(x.view(), &y, None, Task::Binary, 1).unwrap();
            for v in m.predict(x.view()).unwrap() {
                assert!(v > 0.0 && v < 1.0, "{}: {v}", l.name);
            }
        }
    }

    #[test]
    fn library_json_overrides() {
        let json = r#"[{"base": "xgb_200_2_0.1", "name": "gbm_small", "hyperparameters": {"rounds": 10}},
                       {"base": "lasso", "hyperparameters": {"lambda": 0.05}},
                       {"base": "knn", "name": "knn5", "hyperparameters": {"k": 5}}]"#;
        let lib = library_from_json(json, LibraryMode::Pseudo).unwrap();
        assert_eq!(lib[0].name, "gbm_small");
        assert_eq!(lib[0].hyperparameters["rounds"], 10.0);
        assert_eq!(lib[0].hyperparameters["depth"], 2.0);
        assert_eq!(lib[1].hyperparameters["lambda"], 0.05);
        let bad = r#"[{"base": "knn", "hyperparameters": {"depth": 3}}]"#;
        assert!(library_from_json(bad, LibraryMode::Pseudo).is_err());
        let unsupported = r#"[{"base": "knn"}]"#;
        assert!(library_from_json(unsupported, LibraryMode::Binary).is_err());
        let dup = r#"[{"base": "knn"}, {"base": "knn"}]"#;
        assert!(matches!(library_from_json(dup, LibraryMode::Pseudo), Err(Error::DuplicateLearner(_))));
    }
}
