mod common;

use ndarray::{Array2, Axis};
use rand::Rng as _;

use common::{grid_best, pairwise_auc, weight_instance};
use pseudosl::ensemble::{optimize_auc_weights, optimize_nnloglik_weights};
use pseudosl::learners::{Algorithm, Learner};
use pseudosl::metrics::weighted_roc;
use pseudosl::rng::rng_from_seed;
use pseudosl::{
    auc_pseudo, fit_superlearner_pseudo, generate_scenario, predict_ensemble, PseudoOptions,
    Scenario, ScenarioConfig,
};

#[test]
fn curve_trapezoid_equals_pairwise_statistic() {
    let mut rng = rng_from_seed(1);
    for _ in 0..20 {
        let n = 40;
        // Signed weights and heavy ties, as with pseudo-values.
        let case_w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 1.4 - 0.2).collect();
        let control_w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 1.4 - 0.2).collect();
        let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 6.0).floor()).collect();
        let roc = weighted_roc(&case_w, &control_w, &scores, 1.0).unwrap();
        let a = auc_pseudo(&roc);
        let b = pairwise_auc(&case_w, &control_w, &scores);
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn optimizer_reaches_simplex_grid_optimum() {
    for seed in 0..3 {
        let inst = weight_instance(120, seed);
        let w = optimize_auc_weights(inst.c.view(), &inst.case_w, &inst.control_w, 100.0, seed).unwrap();
        let best = grid_best(&inst, 100);
        assert!(w.auc >= best - 0.005, "seed {seed}: {} < {best}", w.auc);
        let s = inst.c.dot(&ndarray::arr1(&w.alpha_star));
        let check = pairwise_auc(&inst.case_w, &inst.control_w, s.as_slice().unwrap());
        assert!((check - w.auc).abs() < 1e-9);
        assert!((w.alpha_star.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn signal_column_takes_the_weight() {
    let inst = weight_instance(300, 9);
    let mut rng = rng_from_seed(2);
    let c = Array2::from_shape_fn((300, 2), |(i, k)| {
        if k == 0 { inst.case_w[i] } else { rng.random::<f64>() }
    });
    let w = optimize_auc_weights(c.view(), &inst.case_w, &inst.control_w, 100.0, 0).unwrap();
    assert!(w.alpha_star[0] >= 0.9, "{:?}", w.alpha_star);
}

#[test]
fn joint_column_scaling_keeps_the_achieved_auc() {
    let inst = weight_instance(150, 4);
    let a = optimize_auc_weights(inst.c.view(), &inst.case_w, &inst.control_w, 100.0, 1).unwrap();
    let scaled = &inst.c * 7.5;
    let b = optimize_auc_weights(scaled.view(), &inst.case_w, &inst.control_w, 100.0, 1).unwrap();
    assert!((a.auc - b.auc).abs() < 1e-9, "{} vs {}", a.auc, b.auc);
}

#[test]
fn nnloglik_prefers_the_label_column() {
    let mut rng = rng_from_seed(3);
    let n = 200;
    let labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.3).collect();
    let probs = Array2::from_shape_fn((n, 3), |(i, k)| match k {
        0 => if labels[i] { 1.0 - 1e-8 } else { 1e-8 },
        1 => 0.3,
        _ => rng.random::<f64>(),
    });
    let w = vec![1.0; n];
    let alpha = optimize_nnloglik_weights(probs.view(), &labels, &w).unwrap();
    assert!(alpha[0] >= 0.99, "{alpha:?}");
    assert!(alpha.iter().all(|&a| a >= 0.0));
}

#[test]
fn ensemble_prediction_is_a_dot_product() {
    let mut cfg = ScenarioConfig::new(Scenario::A);
    cfg.n = 150;
    cfg.seed = 2;
    let d = generate_scenario(&cfg).unwrap();
    let lib = vec![
        Learner::new("ols", Algorithm::Ols),
        Learner::new("cart", Algorithm::Cart),
        Learner::new("knn", Algorithm::Knn),
    ];
    let mut opts = PseudoOptions::new(vec![20.0, 26.5], 26.5);
    opts.folds = 4;
    let model = fit_superlearner_pseudo(&d.train, &lib, &opts).unwrap();
    let x = d.validation.covariates();
    let pred = predict_ensemble(&model, x).unwrap();
    let mut xt = x.to_owned();
    xt.push_column(ndarray::Array1::from_elem(x.nrows(), 26.5).view()).unwrap();
    for (i, row) in xt.axis_iter(Axis(0)).enumerate() {
        let row = row.insert_axis(Axis(0));
        let manual: f64 = model
            .models
            .iter()
            .zip(&model.alpha_star)
            .map(|(m, a)| a * m.predict(row.view()).unwrap()[0])
            .sum();
        assert!((manual - pred[i]).abs() < 1e-12);
    }
    let best_single = model
        .cv_report
        .learners
        .iter()
        .filter_map(|l| l.cv_score)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(model.cv_report.ensemble_cv_score >= best_single - 1e-9);
}
