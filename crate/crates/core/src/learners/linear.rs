use ndarray::ArrayView2;

use super::LinearModel;
use crate::linalg::solve_spd;

/// Column means, centered Gram matrix and centered cross-products.
struct Moments {
    n: usize,
    p: usize,
    xbar: Vec<f64>,
    ybar: f64,
    gram: Vec<f64>,
    xty: Vec<f64>,
    syy: f64,
}

impl Moments {
    fn new(x: ArrayView2<'_, f64>, y: &[f64]) -> Self {
        let (n, p) = x.dim();
        let xbar: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();
        let ybar = y.iter().sum::<f64>() / n as f64;
        let mut gram = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        let mut syy = 0.0;
        let mut d = vec![0.0; p];
        for (row, &yi) in x.outer_iter().zip(y) {
            for j in 0..p {
                d[j] = row[j] - xbar[j];
            }
            let dy = yi - ybar;
            syy += dy * dy;
            for j in 0..p {
                xty[j] += d[j] * dy;
                for k in 0..=j {
                    gram[j * p + k] += d[j] * d[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                gram[k * p + j] = gram[j * p + k];
            }
        }
        Moments { n, p, xbar, ybar, gram, xty, syy }
    }

    fn sub_gram(&self, cols: &[usize], ridge: f64) -> Vec<f64> {
        let m = cols.len();
        let mut g = vec![0.0; m * m];
        for (a, &i) in cols.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                g[a * m + b] = self.gram[i * self.p + j];
            }
            g[a * m + a] += ridge;
        }
        g
    }

    /// Least squares on a column subset: (model over all p columns, RSS, regularized).
    fn fit_subset(&self, cols: &[usize]) -> (LinearModel, f64, bool) {
        let g = self.sub_gram(cols, 0.0);
        let b: Vec<f64> = cols.iter().map(|&j| self.xty[j]).collect();
        let (beta, reg) = solve_spd(&g, cols.len(), &b);
        let mut coef = vec![0.0; self.p];
        let mut intercept = self.ybar;
        for (&j, &bj) in cols.iter().zip(&beta) {
            coef[j] = bj;
            intercept -= bj * self.xbar[j];
        }
        let explained: f64 = beta.iter().zip(&b).map(|(a, c)| a * c).sum();
        let rss = (self.syy - explained).max(0.0);
        (LinearModel { intercept, coef }, rss, reg)
    }
}

pub(super) fn ols(x: ArrayView2<'_, f64>, y: &[f64]) -> (LinearModel, bool) {
    let m = Moments::new(x, y);
    let cols: Vec<usize> = (0..m.p).collect();
    let (lin, _, reg) = m.fit_subset(&cols);
    (lin, reg)
}

/// Forward selection: add the column giving the smallest residual sum of
/// squares while `n log(RSS/n) + 2k` decreases.
pub(super) fn forward_stepwise(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    max_steps: Option<usize>,
) -> (LinearModel, bool) {
    let m = Moments::new(x, y);
    let n = m.n as f64;
    let floor = 1e-12 * m.syy.max(f64::MIN_POSITIVE);
    let aic = |rss: f64, k: usize| n * (rss.max(floor) / n).ln() + 2.0 * (k + 1) as f64;

    let mut selected: Vec<usize> = Vec::new();
    let mut best = (LinearModel { intercept: m.ybar, coef: vec![0.0; m.p] }, false);
    let mut best_aic = aic(m.syy, 0);
    let steps = max_steps.unwrap_or(m.p).min(m.p);
    for _ in 0..steps {
        let mut step: Option<(usize, LinearModel, f64, bool)> = None;
        for j in (0..m.p).filter(|j| !selected.contains(j)) {
            let mut cols = selected.clone();
            cols.push(j);
            let (lin, rss, reg) = m.fit_subset(&cols);
            if step.as_ref().is_none_or(|s| rss < s.2) {
                step = Some((j, lin, rss, reg));
            }
        }
        let Some((j, lin, rss, reg)) = step else { break };
        let value = aic(rss, selected.len() + 1);
        if value >= best_aic {
            break;
        }
        selected.push(j);
        best_aic = value;
        best = (lin, reg);
    }
    best
}

const GCV_GRID: usize = 50;

/// Ridge regression on standardized columns. Without a fixed `lambda` the
/// penalty minimizes generalized cross-validation.
pub(super) fn ridge(x: ArrayView2<'_, f64>, y: &[f64], lambda: Option<f64>) -> (LinearModel, bool) {
    let m = Moments::new(x, y);
    let n = m.n as f64;
    // Standardize through the Gram matrix: column j scaled by 1/sd_j.
    let sd: Vec<f64> = (0..m.p).map(|j| (m.gram[j * m.p + j] / n).sqrt()).collect();
    let cols: Vec<usize> = (0..m.p).filter(|&j| sd[j] > 1e-12).collect();
    let q = cols.len();
    let mut g = vec![0.0; q * q];
    let mut b = vec![0.0; q];
    for (a, &i) in cols.iter().enumerate() {
        b[a] = m.xty[i] / sd[i];
        for (c, &j) in cols.iter().enumerate() {
            g[a * q + c] = m.gram[i * m.p + j] / (sd[i] * sd[j]);
        }
    }

    let solve = |lam: f64| {
        let mut reg = g.clone();
        for a in 0..q {
            reg[a * q + a] += lam;
        }
        solve_spd(&reg, q, &b)
    };
    let gcv = |lam: f64| -> f64 {
        let mut reg = g.clone();
        for a in 0..q {
            reg[a * q + a] += lam;
        }
        let (beta, _) = solve_spd(&reg, q, &b);
        // RSS = syy - 2 b'beta + beta' G beta
        let mut quad = 0.0;
        for a in 0..q {
            for c in 0..q {
                quad += beta[a] * g[a * q + c] * beta[c];
            }
        }
        let explained: f64 = beta.iter().zip(&b).map(|(u, v)| u * v).sum();
        let rss = (m.syy - 2.0 * explained + quad).max(0.0);
        // Effective degrees of freedom: trace((G + lam I)^-1 G).
        let mut df = 1.0;
        for c in 0..q {
            let col: Vec<f64> = (0..q).map(|a| g[a * q + c]).collect();
            let (sol, _) = solve_spd(&reg, q, &col);
            df += sol[c];
        }
        let denom = (1.0 - df / n).max(1e-12);
        rss / n / (denom * denom)
    };

    let lam = match lambda {
        Some(l) => l,
        None if q == 0 => 0.0,
        None => {
            let mut best = (f64::INFINITY, 0.0);
            for k in 0..GCV_GRID {
                let lam = n * 10f64.powf(-5.0 + 8.0 * k as f64 / (GCV_GRID - 1) as f64);
                let score = gcv(lam);
                if score < best.0 {
                    best = (score, lam);
                }
            }
            best.1
        }
    };
    let (beta, reg) = if q == 0 { (Vec::new(), false) } else { solve(lam) };
    let mut coef = vec![0.0; m.p];
    let mut intercept = m.ybar;
    for (&j, &bj) in cols.iter().zip(&beta) {
        coef[j] = bj / sd[j];
        intercept -= coef[j] * m.xbar[j];
    }
    (LinearModel { intercept, coef }, reg)
}
