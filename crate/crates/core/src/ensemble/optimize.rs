//! Stacking-weight optimizers.

use ndarray::ArrayView2;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::metrics::{weighted_auc_sorted, NNLOGLIK_EPS};
use crate::rng::rng_from_seed;

/// Minimum number of Nelder-Mead starts.
pub const MIN_STARTS: usize = 8;
pub const MAX_EVALS_PER_START: usize = 2000;
/// Points on the L1 sphere whose coordinates sum to at most this are
/// rejected: the sum-normalized weights would blow up or flip sign.
pub const SUM_MARGIN: f64 = 1e-3;
/// AUC values closer than this are treated as ties.
pub const AUC_TIE: f64 = 1e-12;

const INITIAL_STEP: f64 = 0.1;
const XATOL: f64 = 1e-4;
const FATOL: f64 = 1e-12;

/// Downhill simplex minimization with the standard coefficients
/// (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
pub(crate) fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for j in 0..d {
        let mut v = x0.to_vec();
        v[j] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = d + 1;
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };
    while evals < max_evals {
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();

        let spread = values[d] - values[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (spread <= FATOL || !spread.is_finite() && values[0] == values[d]) && size <= XATOL {
            break;
        }

        let mut centroid = vec![0.0; d];
        for v in &simplex[..d] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / d as f64;
            }
        }
        let worst = simplex[d].clone();
        let reflected = lerp(&centroid, &worst, -1.0);
        let fr = f(&reflected);
        evals += 1;
        if fr < values[0] {
            let expanded = lerp(&centroid, &worst, -2.0);
            let fe = f(&expanded);
            evals += 1;
            if fe < fr {
                simplex[d] = expanded;
                values[d] = fe;
            } else {
                simplex[d] = reflected;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = reflected;
            values[d] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[d] {
            let c = lerp(&centroid, &worst, -0.5);
            let v = f(&c);
            (c, v)
        } else {
            let c = lerp(&centroid, &worst, 0.5);
            let v = f(&c);
            (c, v)
        };
        evals += 1;
        if fc < values[d].min(fr) {
            simplex[d] = contracted;
            values[d] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for k in 1..=d {
            simplex[k] = lerp(&best, &simplex[k], 0.5);
            values[k] = f(&simplex[k]);
        }
        evals += d;
    }
    let best = (0..=d)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)))
        .expect("non-empty simplex");
    (simplex[best].clone(), values[best])
}

/// Result of the AUC weight search.
#[derive(Debug, Clone, PartialEq)]
pub struct AucWeights {
    /// Weights on the unit L1 sphere.
    pub alpha_raw: Vec<f64>,
    /// `alpha_raw` divided by its sum.
    pub alpha_star: Vec<f64>,
    /// Pseudo-value AUC of `alpha_star . C`.
    pub auc: f64,
}

fn l1_normalize(theta: &[f64]) -> Option<Vec<f64>> {
    let norm: f64 = theta.iter().map(|v| v.abs()).sum();
    if !(norm > 0.0 && norm.is_finite()) {
        return None;
    }
    Some(theta.iter().map(|v| v / norm).collect())
}

fn negative_mass(u: &[f64]) -> f64 {
    u.iter().map(|v| (-v).max(0.0)).sum()
}

struct AucFitness<'a> {
    c: ArrayView2<'a, f64>,
    case_w: &'a [f64],
    control_w: &'a [f64],
    scores: Vec<f64>,
    order: Vec<usize>,
}

impl AucFitness<'_> {
    /// AUC of the combination `u . C`, or `None` outside the feasible set.
    fn auc(&mut self, u: &[f64]) -> Option<f64> {
        if u.iter().sum::<f64>() <= SUM_MARGIN {
            return None;
        }
        for (s, row) in self.scores.iter_mut().zip(self.c.outer_iter()) {
            *s = row.iter().zip(u).map(|(a, b)| a * b).sum();
        }
        let scores = &self.scores;
        self.order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        weighted_auc_sorted(self.case_w, self.control_w, scores, &self.order)
    }
}

/// Maximize the pseudo-value AUC of `alpha . C` over the unit L1 sphere.
///
/// Nelder-Mead runs from every corner, the barycenter and random positive
/// points (at least [`MIN_STARTS`] starts). Start and end points are all
/// candidates; among those within [`AUC_TIE`] of the best AUC the one with
/// the least `lambda * negative mass` wins, then the earliest.
pub fn optimize_auc_weights(
    c: ArrayView2<'_, f64>,
    case_w: &[f64],
    control_w: &[f64],
    lambda: f64,
    seed: u64,
) -> Result<AucWeights> {
    let (n, k) = c.dim();
    if k == 0 {
        return Err(Error::AllLearnersFailed);
    }
    if case_w.len() != n || control_w.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: case_w.len().min(control_w.len()) });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("must be finite and non-negative, got {lambda}")));
    }
    let case_total: f64 = case_w.iter().sum();
    if case_total == 0.0 || !case_total.is_finite() {
        return Err(Error::NoIncidenceMass { time: f64::NAN, sum: case_total });
    }
    let control_total: f64 = control_w.iter().sum();
    if control_total == 0.0 || !control_total.is_finite() {
        return Err(Error::NoControlMass { time: f64::NAN, sum: control_total });
    }
    let mut fit = AucFitness {
        c,
        case_w,
        control_w,
        scores: vec![0.0; n],
        order: (0..n).collect(),
    };
    if k == 1 {
        let auc = fit.auc(&[1.0]).expect("positive totals");
        return Ok(AucWeights { alpha_raw: vec![1.0], alpha_star: vec![1.0], auc });
    }

    let mut starts: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            e
        })
        .collect();
    starts.push(vec![1.0 / k as f64; k]);
    let mut rng = rng_from_seed(seed);
    while starts.len() < MIN_STARTS {
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
        starts.push(l1_normalize(&raw).expect("positive draws"));
    }

    let mut candidates: Vec<(Vec<f64>, f64)> = Vec::with_capacity(2 * starts.len());
    for start in &starts {
        if let Some(a) = fit.auc(start) {
            candidates.push((start.clone(), a));
        }
        let (theta, _) = nelder_mead(
            |theta| match l1_normalize(theta).and_then(|u| fit.auc(&u)) {
                Some(a) => -a,
                None => f64::INFINITY,
            },
            start,
            INITIAL_STEP,
            MAX_EVALS_PER_START,
        );
        if let Some(u) = l1_normalize(&theta) {
            if let Some(a) = fit.auc(&u) {
                candidates.push((u, a));
            }
        }
    }
    let best_auc = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let (u, auc) = candidates
        .into_iter()
        .filter(|c| c.1 >= best_auc - AUC_TIE)
        .fold(None::<(Vec<f64>, f64, f64)>, |acc, (u, a)| {
            let pen = lambda * negative_mass(&u);
            match acc {
                Some(prev) if prev.2 <= pen => Some(prev),
                _ => Some((u, a, pen)),
            }
        })
        .map(|(u, a, _)| (u, a))
        .expect("corner starts are always feasible");
    let sum: f64 = u.iter().sum();
    let alpha_star = u.iter().map(|v| v / sum).collect();
    Ok(AucWeights { alpha_raw: u, alpha_star, auc })
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in s.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Minimize the weighted negative log-likelihood of `alpha . P` over the
/// probability simplex by projected gradient descent with backtracking,
/// starting from the barycenter. Subjects with zero weight are ignored.
pub fn optimize_nnloglik_weights(
    probs: ArrayView2<'_, f64>,
    labels: &[bool],
    weights: &[f64],
) -> Result<Vec<f64>> {
    let (n, k) = probs.dim();
    if labels.len() != n || weights.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: labels.len().min(weights.len()) });
    }
    if k == 0 {
        return Err(Error::AllLearnersFailed);
    }
    let rows: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
    if rows.is_empty() {
        return Err(Error::NoUsableSubjects);
    }
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let total: f64 = rows.iter().map(|&i| weights[i]).sum();
    let loss_grad = |alpha: &[f64], grad: Option<&mut Vec<f64>>| -> f64 {
        let mut loss = 0.0;
        let mut g = vec![0.0; k];
        for &i in &rows {
            let row = probs.row(i);
            let p: f64 = row.iter().zip(alpha).map(|(a, b)| a * b).sum();
            let pc = p.clamp(NNLOGLIK_EPS, 1.0 - NNLOGLIK_EPS);
            let w = weights[i] / total;
            loss -= w * if labels[i] { pc.ln() } else { (1.0 - pc).ln() };
            if pc == p {
                let d = if labels[i] { -1.0 / p } else { 1.0 / (1.0 - p) };
                for (gj, x) in g.iter_mut().zip(row.iter()) {
                    *gj += w * d * x;
                }
            }
        }
        if let Some(out) = grad {
            *out = g;
        }
        loss
    };
    let mut alpha = vec![1.0 / k as f64; k];
    let mut grad = vec![0.0; k];
    let mut loss = loss_grad(&alpha, Some(&mut grad));
    let mut step = 1.0;
    for _ in 0..10_000 {
        let mut moved = false;
        while step > 1e-14 {
            let cand = project_simplex(
                &alpha.iter().zip(&grad).map(|(a, g)| a - step * g).collect::<Vec<_>>(),
            );
            let diff: f64 = cand.iter().zip(&alpha).map(|(a, b)| (a - b) * (a - b)).sum();
            if diff < 1e-30 {
                break;
            }
            let l = loss_grad(&cand, None);
            let decrease: f64 = grad.iter().zip(cand.iter().zip(&alpha)).map(|(g, (c, a))| g * (a - c)).sum();
            if l <= loss - 1e-4 * decrease {
                let small = diff.sqrt() < 1e-12;
                alpha = cand;
                loss = loss_grad(&alpha, Some(&mut grad));
                step *= 2.0;
                moved = !small;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(alpha)
}
