use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{sigmoid, LinearModel};
use crate::rng::rng_from_seed;

const TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 100_000;
const MAX_OUTER: usize = 50;
const PATH_RATIO: f64 = 1e-3;

/// Lasso coefficients on the original column scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

/// Columns centered (and optionally scaled) with the observation weights.
struct Design {
    cols: Vec<Vec<f64>>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Design {
    fn new(x: ArrayView2<'_, f64>, w: &[f64], standardize: bool) -> Self {
        let sw: f64 = w.iter().sum();
        let mut cols = Vec::with_capacity(x.ncols());
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
            let mut c: Vec<f64> = col.iter().map(|v| v - m).collect();
            let s = if standardize {
                let var = c.iter().zip(w).map(|(a, b)| b * a * a).sum::<f64>() / sw;
                if var > 1e-24 { var.sqrt() } else { 1.0 }
            } else {
                1.0
            };
            c.iter_mut().for_each(|v| *v /= s);
            cols.push(c);
            mean.push(m);
            scale.push(s);
        }
        Design { cols, mean, scale }
    }

    fn unscale(&self, b0: f64, beta: &[f64]) -> LinearModel {
        let coef: Vec<f64> = beta.iter().zip(&self.scale).map(|(b, s)| b / s).collect();
        let intercept = b0 - coef.iter().zip(&self.mean).map(|(b, m)| b * m).sum::<f64>();
        LinearModel { intercept, coef }
    }
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Coordinate descent on `(1/2N) sum W_i (target_i - b0 - z_i.beta)^2 + lambda |beta|_1`,
/// warm-started from `beta`, `b0`.
fn coordinate_descent(
    cols: &[Vec<f64>],
    target: &[f64],
    wts: &[f64],
    norm: f64,
    lambda: f64,
    beta: &mut [f64],
    b0: &mut f64,
) {
    let n = target.len();
    let mut r: Vec<f64> = (0..n)
        .map(|i| target[i] - *b0 - cols.iter().zip(beta.iter()).map(|(c, b)| c[i] * b).sum::<f64>())
        .collect();
    let sw: f64 = wts.iter().sum();
    let xsq: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().zip(wts).map(|(a, w)| w * a * a).sum::<f64>() / norm)
        .collect();
    for _ in 0..MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        let d0 = r.iter().zip(wts).map(|(a, w)| a * w).sum::<f64>() / sw;
        if d0 != 0.0 {
            *b0 += d0;
            r.iter_mut().for_each(|v| *v -= d0);
            max_change = max_change.max(d0 * d0);
        }
        for (j, col) in cols.iter().enumerate() {
            if xsq[j] <= 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = col.iter().zip(&r).zip(wts).map(|((a, b), w)| w * a * b).sum::<f64>() / norm
                + xsq[j] * old;
            let new = soft_threshold(rho, lambda) / xsq[j];
            if new != old {
                let d = new - old;
                for (ri, ci) in r.iter_mut().zip(col) {
                    *ri -= ci * d;
                }
                beta[j] = new;
                max_change = max_change.max(xsq[j] * d * d);
            }
        }
        if max_change < TOL {
            break;
        }
    }
}

/// State of one penalized fit, reused as a warm start along a path.
struct PathState {
    beta: Vec<f64>,
    b0: f64,
}

fn fit_at(design: &Design, y: &[f64], w: &[f64], lambda: f64, logistic: bool, st: &mut PathState) {
    let norm: f64 = w.iter().sum();
    if !logistic {
        coordinate_descent(&design.cols, y, w, norm, lambda, &mut st.beta, &mut st.b0);
        return;
    }
    let n = y.len();
    let mut target = vec![0.0; n];
    let mut wk = vec![0.0; n];
    for _ in 0..MAX_OUTER {
        for i in 0..n {
            let eta = st.b0 + design.cols.iter().zip(&st.beta).map(|(c, b)| c[i] * b).sum::<f64>();
            let p = sigmoid(eta).clamp(1e-5, 1.0 - 1e-5);
            let v = p * (1.0 - p);
            wk[i] = w[i] * v;
            target[i] = eta + (y[i] - p) / v;
        }
        let (old_beta, old_b0) = (st.beta.clone(), st.b0);
        coordinate_descent(&design.cols, &target, &wk, norm, lambda, &mut st.beta, &mut st.b0);
        let change = st
            .beta
            .iter()
            .zip(&old_beta)
            .map(|(a, b)| (a - b).abs())
            .fold((st.b0 - old_b0).abs(), f64::max);
        if change < 1e-9 {
            break;
        }
    }
}

fn lambda_max(design: &Design, y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    design
        .cols
        .iter()
        .map(|c| (c.iter().zip(y).zip(w).map(|((a, b), wi)| wi * a * (b - ybar)).sum::<f64>() / sw).abs())
        .fold(0.0, f64::max)
}

fn initial_state(p: usize, y: &[f64], w: &[f64], logistic: bool) -> PathState {
    let sw: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let b0 = if logistic { super::logit(ybar) } else { ybar };
    PathState { beta: vec![0.0; p], b0 }
}

/// Weighted lasso at a fixed penalty. With `standardize` the penalty applies
/// to coefficients of weight-standardized columns; otherwise to the raw ones.
/// Columns are always centered, which leaves the objective unchanged.
pub fn lasso_fit(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
    standardize: bool,
) -> LassoFit {
    let w = weights.map_or_else(|| vec![1.0; y.len()], <[f64]>::to_vec);
    let design = Design::new(x, &w, standardize);
    let mut st = initial_state(x.ncols(), y, &w, false);
    fit_at(&design, y, &w, lambda, false, &mut st);
    let lin = design.unscale(st.b0, &st.beta);
    LassoFit { intercept: lin.intercept, coef: lin.coef }
}

pub(super) struct CvOptions {
    pub lambda: Option<f64>,
    pub folds: usize,
    pub nlambda: usize,
    pub logistic: bool,
    pub seed: u64,
}

fn path(lmax: f64, nlambda: usize) -> Vec<f64> {
    if nlambda == 1 || lmax <= 0.0 {
        return vec![lmax.max(0.0)];
    }
    (0..nlambda)
        .map(|k| lmax * PATH_RATIO.powf(k as f64 / (nlambda - 1) as f64))
        .collect()
}

fn loss(y: f64, pred: f64, logistic: bool) -> f64 {
    if logistic {
        let p = sigmoid(pred).clamp(1e-15, 1.0 - 1e-15);
        -2.0 * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
    } else {
        (y - pred).powi(2)
    }
}

/// Fit with the penalty fixed or chosen by V-fold cross-validation over a
/// geometric path (minimum mean validation loss).
pub(super) fn fit_cv(x: ArrayView2<'_, f64>, y: &[f64], w: &[f64], opts: &CvOptions) -> LinearModel {
    let (n, p) = x.dim();
    let design = Design::new(x, w, true);
    let lambdas = path(lambda_max(&design, y, w), opts.nlambda);
    let chosen = match opts.lambda {
        Some(l) => l,
        None if opts.folds < 2 || n < 2 * opts.folds => lambdas[lambdas.len() - 1],
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_from_seed(opts.seed));
            let mut fold = vec![0usize; n];
            for (pos, &i) in order.iter().enumerate() {
                fold[i] = pos % opts.folds;
            }
            let mut total = vec![0.0; lambdas.len()];
            for v in 0..opts.folds {
                let train: Vec<usize> = (0..n).filter(|&i| fold[i] != v).collect();
                let test: Vec<usize> = (0..n).filter(|&i| fold[i] == v).collect();
                let xt = x.select(ndarray::Axis(0), &train);
                let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                let wt: Vec<f64> = train.iter().map(|&i| w[i]).collect();
                let d = Design::new(xt.view(), &wt, true);
                let mut st = initial_state(p, &yt, &wt, opts.logistic);
                for (k, &lam) in lambdas.iter().enumerate() {
                    fit_at(&d, &yt, &wt, lam, opts.logistic, &mut st);
                    let lin = d.unscale(st.b0, &st.beta);
                    for &i in &test {
                        let row = x.row(i);
                        total[k] += w[i] * loss(y[i], lin.eta(row), opts.logistic);
                    }
                }
            }
            let best = (0..lambdas.len())
                .min_by(|&a, &b| total[a].total_cmp(&total[b]))
                .expect("non-empty path");
            lambdas[best]
        }
    };
    let mut st = initial_state(p, y, w, opts.logistic);
    for &lam in lambdas.iter().filter(|&&l| l > chosen) {
        fit_at(&design, y, w, lam, opts.logistic, &mut st);
    }
    fit_at(&design, y, w, chosen, opts.logistic, &mut st);
    design.unscale(st.b0, &st.beta)
}
