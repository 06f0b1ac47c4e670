//! Cubic B-spline basis on quantile knots.

/// Number of basis columns kept per expanded covariate.
pub const BASIS_COLUMNS: usize = 4;
pub const DEGREE: usize = 3;
pub const KNOT_QUANTILES: [f64; 3] = [0.25, 0.5, 0.75];

/// Linear-interpolation sample quantile (R type 7).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Clamped knot vector: boundary knots repeated `DEGREE + 1` times around
/// the interior knots.
pub fn knot_vector(lower: f64, interior: &[f64], upper: f64) -> Vec<f64> {
    let mut knots = vec![lower; DEGREE + 1];
    knots.extend_from_slice(interior);
    knots.extend(std::iter::repeat_n(upper, DEGREE + 1));
    knots
}

/// All `knots.len() - DEGREE - 1` basis functions at `x` by the Cox-de Boor
/// triangle. The right boundary belongs to the last non-empty span.
pub fn basis(knots: &[f64], x: f64) -> Vec<f64> {
    let nb = knots.len() - DEGREE - 1;
    let upper = knots[knots.len() - 1];
    let x = x.clamp(knots[0], upper);
    // span index: knots[span] <= x < knots[span + 1], non-empty
    let span = if x >= upper {
        (0..knots.len() - 1).rev().find(|&i| knots[i] < knots[i + 1]).expect("non-degenerate knots")
    } else {
        (0..knots.len() - 1).rfind(|&i| knots[i] <= x && x < knots[i + 1]).expect("x inside knots")
    };
    let mut n = vec![0.0; knots.len() - 1];
    n[span] = 1.0;
    for d in 1..=DEGREE {
        for i in 0..knots.len() - 1 - d {
            let left = if knots[i + d] > knots[i] {
                (x - knots[i]) / (knots[i + d] - knots[i]) * n[i]
            } else {
                0.0
            };
            let right = if knots[i + d + 1] > knots[i + 1] {
                (knots[i + d + 1] - x) / (knots[i + d + 1] - knots[i + 1]) * n[i + 1]
            } else {
                0.0
            };
            n[i] = left + right;
        }
    }
    n.truncate(nb);
    n
}

/// Basis expansion of a covariate column: interior knots at the sample
/// quartiles, boundary knots at the sample range, first basis function
/// dropped (no intercept) and the next [`BASIS_COLUMNS`] kept.
pub fn expand(values: &[f64]) -> Vec<[f64; BASIS_COLUMNS]> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lower = sorted[0];
    let upper = sorted[sorted.len() - 1];
    if lower == upper {
        return vec![[0.0; BASIS_COLUMNS]; values.len()];
    }
    let interior: Vec<f64> = KNOT_QUANTILES.iter().map(|&q| quantile(&sorted, q)).collect();
    let knots = knot_vector(lower, &interior, upper);
    values
        .iter()
        .map(|&x| {
            let b = basis(&knots, x);
            let mut row = [0.0; BASIS_COLUMNS];
            row.copy_from_slice(&b[1..=BASIS_COLUMNS]);
            row
        })
        .collect()
}
