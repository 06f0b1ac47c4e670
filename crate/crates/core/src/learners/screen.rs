use ndarray::ArrayView2;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Two-sided p-value of the Pearson correlation test; zero-variance inputs
/// get p = 1.
fn correlation_p_value(x: impl Iterator<Item = f64> + Clone, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mx = x.clone().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 1.0;
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = n - 2.0;
    if 1.0 - r * r <= f64::EPSILON {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Indices of the columns whose correlation with `y` is significant at
/// `p_threshold`; falls back to the single most significant column.
pub fn correlation_screen(x: ArrayView2<'_, f64>, y: &[f64], p_threshold: f64) -> Result<Vec<usize>> {
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: y.len() });
    }
    if n < 3 {
        return Err(Error::TooFewRecords { required: 3, actual: n });
    }
    if p == 0 {
        return Err(Error::param("x", "no columns to screen"));
    }
    let pvals: Vec<f64> =
        (0..p).map(|j| correlation_p_value(x.column(j).iter().copied(), y)).collect();
    let keep: Vec<usize> = (0..p).filter(|&j| pvals[j] < p_threshold).collect();
    if !keep.is_empty() {
        return Ok(keep);
    }
    let best = (0..p)
        .min_by(|&a, &b| pvals[a].total_cmp(&pvals[b]))
        .expect("p > 0");
    Ok(vec![best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng as _, SeedableRng};

    #[test]
    fn perfect_copy_is_selected_alone() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        let x = Array2::from_shape_fn((200, 5), |_| rng.random::<f64>());
        let y: Vec<f64> = x.column(0).to_vec();
        let keep = correlation_screen(x.view(), &y, 0.1).unwrap();
        assert_eq!(keep[0], 0);
        assert!(keep.len() <= 2);
    }

    #[test]
    fn constant_feature_only_as_fallback() {
        let x = Array2::from_shape_fn((10, 1), |_| 3.0);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(correlation_screen(x.view(), &y, 0.1).unwrap(), vec![0]);
        let x2 = Array2::from_shape_fn((10, 2), |(i, j)| if j == 0 { 3.0 } else { i as f64 });
        assert_eq!(correlation_screen(x2.view(), &y, 0.1).unwrap(), vec![1]);
    }

    #[test]
    fn p_value_matches_reference() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let x = [1.0, 3.0, 2.0, 4.0];
        // r = 0.8, n = 4: t = 0.8*sqrt(2/0.36) = 1.8856, p = 0.2.
        let p = correlation_p_value(x.iter().copied(), &y);
        assert!((p - 0.2).abs() < 1e-9, "{p}");
    }

    #[test]
    fn too_few_rows() {
        let x = Array2::<f64>::zeros((2, 1));
        assert!(correlation_screen(x.view(), &[0.0, 1.0], 0.1).is_err());
    }
}
