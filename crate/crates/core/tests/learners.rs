use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use pseudosl::learners::{correlation_screen, lasso_fit, Algorithm, Learner, Task};

fn random_x(n: usize, p: usize, rng: &mut ChaCha20Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 2.0 - 1.0)
}

/// Proximal gradient on (1/2n) |y - b0 - X b|^2 + lambda |b|_1.
fn lasso_ista(x: ArrayView2<'_, f64>, y: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let (n, p) = x.dim();
    let nf = n as f64;
    // Lipschitz bound of the smooth part, intercept included.
    let mut lip = 1.0;
    for j in 0..p {
        lip += x.column(j).iter().map(|v| v * v).sum::<f64>() / nf;
    }
    let step = 1.0 / lip;
    let mut b0 = 0.0;
    let mut b = vec![0.0; p];
    for _ in 0..400_000 {
        let r: Vec<f64> = (0..n)
            .map(|i| y[i] - b0 - (0..p).map(|j| x[[i, j]] * b[j]).sum::<f64>())
            .collect();
        let g0 = -r.iter().sum::<f64>() / nf;
        b0 -= step * g0;
        for j in 0..p {
            let g = -(0..n).map(|i| x[[i, j]] * r[i]).sum::<f64>() / nf;
            let z = b[j] - step * g;
            b[j] = z.signum() * (z.abs() - step * lambda).max(0.0);
        }
    }
    (b0, b)
}

#[test]
fn lasso_matches_proximal_gradient() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for lambda in [0.01, 0.05, 0.2] {
        let x = random_x(10, 5, &mut rng);
        let y: Vec<f64> = (0..10)
            .map(|i| 1.0 + 2.0 * x[[i, 0]] - x[[i, 3]] + 0.3 * (rng.random::<f64>() - 0.5))
            .collect();
        let fit = lasso_fit(x.view(), &y, None, lambda, false);
        let (b0, b) = lasso_ista(x.view(), &y, lambda);
        assert!((fit.intercept - b0).abs() < 1e-6, "intercept {} vs {b0}", fit.intercept);
        for (a, o) in fit.coef.iter().zip(&b) {
            assert!((a - o).abs() < 1e-6, "lambda {lambda}: {:?} vs {b:?}", fit.coef);
        }
    }
}

#[test]
fn screen_keeps_about_ten_percent_under_null() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let (reps, p) = (400, 20);
    let mut kept = 0usize;
    for _ in 0..reps {
        let x = random_x(100, p, &mut rng);
        let y: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        kept += correlation_screen(x.view(), &y, 0.1).unwrap().len();
    }
    let frac = kept as f64 / (reps * p) as f64;
    // The fallback adds a column when nothing passes (probability 0.9^20).
    assert!((0.085..0.125).contains(&frac), "{frac}");
}

#[test]
fn screen_finds_strong_signal() {
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let x = random_x(200, 10, &mut rng);
    let y: Vec<f64> = (0..200).map(|i| 3.0 * x[[i, 4]] + 0.1 * rng.random::<f64>()).collect();
    assert!(correlation_screen(x.view(), &y, 0.1).unwrap().contains(&4));
}

fn binary_problem(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = random_x(n, 3, &mut rng);
    let y = (0..n)
        .map(|i| {
            let p = 1.0 / (1.0 + (-(x[[i, 0]] * 2.0 - x[[i, 1]])).exp());
            if rng.random::<f64>() < p { 1.0 } else { 0.0 }
        })
        .collect();
    (x, y)
}

#[test]
fn integer_weights_equal_duplicated_rows_for_logistic() {
    let (x, y) = binary_problem(60, 5);
    let w: Vec<f64> = (0..60).map(|i| (i % 3 + 1) as f64).collect();
    let learner = Learner::new("logistic", Algorithm::Logistic);
    let weighted = learner.fit(x.view(), &y, Some(&w), Task::Binary, 0).unwrap();
    let mut rows = Vec::new();
    for (i, &wi) in w.iter().enumerate() {
        rows.extend(std::iter::repeat_n(i, wi as usize));
    }
    let xd = x.select(ndarray::Axis(0), &rows);
    let yd: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let dup = learner.fit(xd.view(), &yd, None, Task::Binary, 0).unwrap();
    for (a, b) in weighted.predict(x.view()).unwrap().iter().zip(dup.predict(x.view()).unwrap()) {
        assert!((a - b).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn uniform_weight_scaling_leaves_binary_fits_unchanged(seed in 0u64..1000, c in 0.1f64..10.0) {
        let (x, y) = binary_problem(50, seed);
        let w: Vec<f64> = (0..50).map(|i| 0.5 + (i % 4) as f64 * 0.25).collect();
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        for alg in [Algorithm::Logistic, Algorithm::Cart, Algorithm::Gbm, Algorithm::RandomForest] {
            let l = Learner::new("l", alg);
            let a = l.fit(x.view(), &y, Some(&w), Task::Binary, seed).unwrap().predict(x.view()).unwrap();
            let b = l.fit(x.view(), &y, Some(&scaled), Task::Binary, seed).unwrap().predict(x.view()).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-9, "{alg:?}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn binary_predictions_stay_in_unit_interval(seed in 0u64..1000) {
        let (x, y) = binary_problem(40, seed);
        for alg in [Algorithm::Logistic, Algorithm::LassoLogistic, Algorithm::Cart, Algorithm::Gbm, Algorithm::RandomForest] {
            let pred = Learner::new("l", alg).fit(x.view(), &y, None, Task::Binary, seed).unwrap().predict(x.view()).unwrap();
            prop_assert!(pred.iter().all(|p| *p > 0.0 && *p < 1.0), "{alg:?}");
        }
    }
}
