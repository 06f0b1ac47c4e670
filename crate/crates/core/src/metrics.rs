//! Prediction-accuracy estimators built on pseudo-values.
//!
//! Cases are weighted by the cause pseudo-value `C^i(t)` and controls by the
//! survival pseudo-value `1 - sum_j C^i_j(t)`. Pseudo-values enter the sums
//! untruncated, so estimated fractions can leave `[0, 1]` slightly.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::estimators::{kaplan_meier, PseudoMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores strictly above the cutoff are called positive. `None` is the
    /// lower limit (every subject positive).
    pub cutoff: Option<f64>,
    pub fp: f64,
    pub tp: f64,
}

/// Empirical ROC curve, ordered by decreasing cutoff from `(0, 0)` to `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub time: f64,
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "cutoff", "fp", "tp"])?;
        for p in &self.points {
            w.write_record([
                format!("{:?}", self.time),
                p.cutoff.map(|c| format!("{c:?}")).unwrap_or_else(|| "-inf".into()),
                format!("{:?}", p.fp),
                format!("{:?}", p.tp),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn check_scores(scores: &[f64], n: usize) -> Result<()> {
    if scores.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::param("scores", format!("score {i} is not finite")));
    }
    Ok(())
}

/// Indices sorted by decreasing score, ties by index.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// ROC curve with case weights `case_w` and control weights `control_w`.
pub fn weighted_roc(case_w: &[f64], control_w: &[f64], scores: &[f64], time: f64) -> Result<RocCurve> {
    let n = scores.len();
    check_scores(scores, n)?;
    if case_w.len() != n || control_w.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: case_w.len().min(control_w.len()),
        });
    }
    let total_case: f64 = case_w.iter().sum();
    let total_control: f64 = control_w.iter().sum();
    if total_case == 0.0 || !total_case.is_finite() {
        return Err(Error::NoIncidenceMass { time, sum: total_case });
    }
    if total_control == 0.0 || !total_control.is_finite() {
        return Err(Error::NoControlMass { time, sum: total_control });
    }
    let order = descending_order(scores);
    let mut points = Vec::with_capacity(n + 1);
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut k = 0;
    while k < n {
        let cutoff = scores[order[k]];
        points.push(RocPoint {
            cutoff: Some(cutoff),
            fp: fp / total_control,
            tp: tp / total_case,
        });
        while k < n && scores[order[k]] == cutoff {
            tp += case_w[order[k]];
            fp += control_w[order[k]];
            k += 1;
        }
    }
    points.push(RocPoint {
        cutoff: None,
        fp: 1.0,
        tp: 1.0,
    });
    Ok(RocCurve { time, points })
}

/// Pseudo-value ROC curve for `cause` at grid time `t`.
///
/// Cutoffs are the distinct observed scores.
pub fn roc_pseudo(pseudo: &PseudoMatrix, cause: u8, scores: &[f64], t: f64) -> Result<RocCurve> {
    let cases = pseudo.cause_at(cause, t)?;
    let controls = pseudo.survival_at(t)?;
    weighted_roc(&cases, &controls, scores, t)
}

/// Trapezoidal area under the curve, taken along the curve from `(0, 0)`.
///
/// The points are in cutoff order, which is also increasing FP order whenever
/// all control weights are non-negative.
pub fn auc_pseudo(roc: &RocCurve) -> f64 {
    roc.points
        .windows(2)
        .map(|w| (w[1].fp - w[0].fp) * (w[1].tp + w[0].tp) / 2.0)
        .sum()
}

/// Fast weighted AUC used inside optimizers: the same trapezoid as
/// [`auc_pseudo`] without materializing the curve.
///
/// Returns `None` if either weight total is zero.
pub fn weighted_auc(case_w: &[f64], control_w: &[f64], scores: &[f64]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    weighted_auc_sorted(case_w, control_w, scores, &order)
}

pub(crate) fn weighted_auc_sorted(
    case_w: &[f64],
    control_w: &[f64],
    scores: &[f64],
    order: &[usize],
) -> Option<f64> {
    let total_case: f64 = case_w.iter().sum();
    let total_control: f64 = control_w.iter().sum();
    if total_case == 0.0 || total_control == 0.0 {
        return None;
    }
    let n = order.len();
    let (mut tp, mut area) = (0.0, 0.0);
    let mut k = 0;
    while k < n {
        let cutoff = scores[order[k]];
        let (mut dtp, mut dfp) = (0.0, 0.0);
        while k < n && scores[order[k]] == cutoff {
            dtp += case_w[order[k]];
            dfp += control_w[order[k]];
            k += 1;
        }
        area += dfp * (tp + dtp / 2.0);
        tp += dtp;
    }
    Some(area / (total_case * total_control))
}

/// Mann-Whitney AUC: `P(score_pos > score_neg) + P(tie) / 2`.
pub fn auc_true_binary(labels: &[bool], scores: &[f64]) -> Result<f64> {
    check_scores(scores, labels.len())?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of mid-ranks of positives.
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut j = k;
        while j < order.len() && scores[order[j]] == scores[order[k]] {
            j += 1;
        }
        let mid_rank = (k + 1 + j) as f64 / 2.0;
        rank_sum += mid_rank * order[k..j].iter().filter(|&&i| labels[i]).count() as f64;
        k = j;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinnedPoint {
    pub percentile: f64,
    pub mean_pseudo: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedPoint {
    pub percentile: f64,
    pub fitted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictivenessCurve {
    pub time: f64,
    pub binned: Vec<BinnedPoint>,
    pub smoothed: Vec<SmoothedPoint>,
    pub marginal: f64,
}

impl PredictivenessCurve {
    /// Two blocks in one table: `kind` is `binned`, `smoothed` or `marginal`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "kind", "percentile", "value", "count"])?;
        let t = format!("{:?}", self.time);
        for b in &self.binned {
            w.write_record([
                t.clone(),
                "binned".into(),
                format!("{:?}", b.percentile),
                format!("{:?}", b.mean_pseudo),
                b.count.to_string(),
            ])?;
        }
        for s in &self.smoothed {
            w.write_record([
                t.clone(),
                "smoothed".into(),
                format!("{:?}", s.percentile),
                format!("{:?}", s.fitted),
                String::new(),
            ])?;
        }
        w.write_record([t, "marginal".into(), String::new(), format!("{:?}", self.marginal), String::new()])?;
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

pub const DEFAULT_SMOOTHING_SPAN: f64 = 0.3;
pub const SMOOTHING_GRID_POINTS: usize = 101;

/// Mid-rank percentiles `(rank - 0.5) / n`, ties sharing their average rank.
fn percentiles(scores: &[f64]) -> Vec<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut q = vec![0.0; n];
    let mut k = 0;
    while k < n {
        let mut j = k;
        while j < n && scores[order[j]] == scores[order[k]] {
            j += 1;
        }
        let mid_rank = (k + 1 + j) as f64 / 2.0;
        for &i in &order[k..j] {
            q[i] = (mid_rank - 0.5) / n as f64;
        }
        k = j;
    }
    q
}

/// Locally weighted running mean of `values` against score percentiles,
/// evaluated on a regular 101-point grid over `[0, 1]` with a tricube kernel
/// spanning the nearest `span * n` subjects.
pub fn smooth_predictiveness(values: &[f64], scores: &[f64], span: f64) -> Result<Vec<SmoothedPoint>> {
    let n = values.len();
    check_scores(scores, n)?;
    if n < 2 {
        return Err(Error::TooFewRecords { required: 2, actual: n });
    }
    if !(span > 0.0 && span <= 1.0) {
        return Err(Error::param("span", format!("must lie in (0, 1], got {span}")));
    }
    let q = percentiles(scores);
    let k = ((span * n as f64).ceil() as usize).clamp(2, n);
    let mut dist = vec![0.0; n];
    let out = (0..SMOOTHING_GRID_POINTS)
        .map(|g| {
            let x = g as f64 / (SMOOTHING_GRID_POINTS - 1) as f64;
            for (d, &qi) in dist.iter_mut().zip(&q) {
                *d = (qi - x).abs();
            }
            let mut sorted = dist.clone();
            sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
            let h = sorted[k - 1] * (1.0 + 1e-10) + 1e-12;
            let (mut num, mut den) = (0.0, 0.0);
            for (&d, &v) in dist.iter().zip(values) {
                if d < h {
                    let u = d / h;
                    let w = (1.0 - u * u * u).powi(3);
                    num += w * v;
                    den += w;
                }
            }
            SmoothedPoint {
                percentile: x,
                fitted: num / den,
            }
        })
        .collect();
    Ok(out)
}

/// Predictiveness curve of `scores` for `cause` at grid time `t`: decile
/// means of the pseudo-values, a smoothed curve and the marginal incidence.
pub fn predictiveness_curve(
    pseudo: &PseudoMatrix,
    cause: u8,
    scores: &[f64],
    t: f64,
    span: f64,
) -> Result<PredictivenessCurve> {
    let values = pseudo.cause_at(cause, t)?;
    let n = values.len();
    check_scores(scores, n)?;
    if n < 10 {
        return Err(Error::TooFewRecords { required: 10, actual: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut sums = [0.0; 10];
    let mut counts = [0usize; 10];
    for (rank, &i) in order.iter().enumerate() {
        let bin = rank * 10 / n;
        sums[bin] += values[i];
        counts[bin] += 1;
    }
    let binned = (0..10)
        .map(|b| BinnedPoint {
            percentile: (b as f64 + 0.5) / 10.0,
            mean_pseudo: sums[b] / counts[b] as f64,
            count: counts[b],
        })
        .collect();
    let marginal = values.iter().sum::<f64>() / n as f64;
    let smoothed = smooth_predictiveness(&values, scores, span)?;
    Ok(PredictivenessCurve {
        time: t,
        binned,
        smoothed,
        marginal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpcwWeights {
    pub weights: Vec<f64>,
    pub t_star: f64,
}

fn censoring_km(dataset: &SurvivalDataset) -> Result<crate::estimators::StepFunction> {
    let flipped: Vec<u8> = dataset.events().iter().map(|&e| u8::from(e == 0)).collect();
    let reversed = SurvivalDataset::new(
        dataset.times().to_vec(),
        flipped,
        ndarray::Array2::zeros((dataset.n(), 0)),
        None,
        Some(Vec::new()),
    )?;
    kaplan_meier(&reversed)
}

/// Inverse-probability-of-censoring weights for the event status at `t_star`.
///
/// The censoring survival `G` is the Kaplan-Meier estimate with censoring as
/// the event, evaluated as a left limit at `min(y, t_star)`. Subjects
/// censored before `t_star` get weight zero.
pub fn ipcw_weights(dataset: &SurvivalDataset, t_star: f64, stratified: bool) -> Result<IpcwWeights> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(t_star.is_finite() && t_star > 0.0) {
        return Err(Error::param("t_star", format!("must be positive, got {t_star}")));
    }
    let n = dataset.n();
    let groups: Vec<Vec<usize>> = if stratified {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in dataset.strata().iter().enumerate() {
            let s = s
                .as_deref()
                .ok_or_else(|| Error::Stratum(format!("record {i} has no stratum")))?;
            map.entry(s).or_default().push(i);
        }
        map.into_values().collect()
    } else {
        vec![(0..n).collect()]
    };
    let mut weights = vec![0.0; n];
    for rows in groups {
        let g = censoring_km(&dataset.subset(&rows))?;
        for &i in &rows {
            let (y, e) = (dataset.times()[i], dataset.events()[i]);
            if e == 0 && y < t_star {
                continue;
            }
            let surv = g.left_limit(y.min(t_star));
            if surv <= 0.0 {
                return Err(Error::ZeroCensoringSurvival { subject: i });
            }
            weights[i] = 1.0 / surv;
        }
    }
    Ok(IpcwWeights { weights, t_star })
}

pub const NNLOGLIK_EPS: f64 = 1e-8;

/// Weighted mean negative Bernoulli log-likelihood with predictions clamped
/// to `[eps, 1 - eps]`.
pub fn nn_loglik(labels: &[bool], predictions: &[f64], weights: &[f64]) -> Result<f64> {
    let n = labels.len();
    if predictions.len() != n || weights.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: predictions.len().min(weights.len()),
        });
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    let loss: f64 = labels
        .iter()
        .zip(predictions)
        .zip(weights)
        .map(|((&y, &p), &w)| {
            let p = p.clamp(NNLOGLIK_EPS, 1.0 - NNLOGLIK_EPS);
            -w * if y { p.ln() } else { (1.0 - p).ln() }
        })
        .sum();
    Ok(loss / total)
}
