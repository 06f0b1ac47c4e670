use ndarray::ArrayView2;

use super::{sigmoid, LinearModel};
use crate::linalg::solve_spd;

const MAX_ITER: usize = 100;
/// Tiny ridge on the slopes keeps separable data from diverging.
const SLOPE_RIDGE: f64 = 1e-8;

fn deviance(x: ArrayView2<'_, f64>, y: &[f64], w: &[f64], beta: &[f64]) -> f64 {
    let mut dev = 0.0;
    for ((row, &yi), &wi) in x.outer_iter().zip(y).zip(w) {
        let eta = beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
        // log(1 + e^eta) - y eta, computed stably
        let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
        dev += 2.0 * wi * (softplus - yi * eta);
    }
    let sw: f64 = w.iter().sum();
    dev + SLOPE_RIDGE * sw * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Weighted logistic regression by Newton-Raphson with step halving.
pub(super) fn fit(x: ArrayView2<'_, f64>, y: &[f64], w: &[f64]) -> (LinearModel, bool) {
    let (_, p) = x.dim();
    let q = p + 1;
    let sw: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut beta = vec![0.0; q];
    beta[0] = super::logit(ybar);
    let mut dev = deviance(x, y, w, &beta);
    let mut regularized = false;
    let mut row_full = vec![0.0; q];
    for _ in 0..MAX_ITER {
        let mut hess = vec![0.0; q * q];
        let mut grad = vec![0.0; q];
        for ((row, &yi), &wi) in x.outer_iter().zip(y).zip(w) {
            row_full[0] = 1.0;
            for j in 0..p {
                row_full[j + 1] = row[j];
            }
            let eta: f64 = row_full.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = sigmoid(eta);
            let v = wi * mu * (1.0 - mu);
            let g = wi * (yi - mu);
            for a in 0..q {
                grad[a] += g * row_full[a];
                for b in 0..=a {
                    hess[a * q + b] += v * row_full[a] * row_full[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                hess[b * q + a] = hess[a * q + b];
            }
        }
        for a in 1..q {
            grad[a] -= SLOPE_RIDGE * sw * beta[a];
            hess[a * q + a] += SLOPE_RIDGE * sw;
        }
        let (step, reg) = solve_spd(&hess, q, &grad);
        regularized |= reg;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let d = deviance(x, y, w, &cand);
            if d <= dev + 1e-12 * dev.abs() {
                let done = (dev - d).abs() < 1e-12 * (dev.abs() + 0.1);
                beta = cand;
                dev = d;
                accepted = !done;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (LinearModel { intercept: beta[0], coef: beta[1..].to_vec() }, regularized)
}
