//! Oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng as _;

use pseudosl::rng::rng_from_seed;
use pseudosl::{generate_scenario, pseudo_observations, Scenario, ScenarioConfig};

/// Weighted Mann-Whitney statistic over all ordered pairs, ties counting 1/2.
pub fn pairwise_auc(case_w: &[f64], control_w: &[f64], scores: &[f64]) -> f64 {
    let mut num = 0.0;
    for (i, &a) in case_w.iter().enumerate() {
        for (j, &b) in control_w.iter().enumerate() {
            let c = if scores[i] > scores[j] {
                1.0
            } else if scores[i] == scores[j] {
                0.5
            } else {
                0.0
            };
            num += a * b * c;
        }
    }
    num / (case_w.iter().sum::<f64>() * control_w.iter().sum::<f64>())
}

/// Points of the K = 3 simplex on a grid of step `1 / m`.
pub fn simplex_grid(m: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for a in 0..=m {
        for b in 0..=m - a {
            let c = m - a - b;
            out.push([a as f64 / m as f64, b as f64 / m as f64, c as f64 / m as f64]);
        }
    }
    out
}

pub struct WeightInstance {
    pub c: Array2<f64>,
    pub case_w: Vec<f64>,
    pub control_w: Vec<f64>,
}

/// Three candidate score columns for a Scenario A sample: the true incidence
/// plus noise, a noisy copy of X1, and pure noise.
pub fn weight_instance(n: usize, seed: u64) -> WeightInstance {
    let mut cfg = ScenarioConfig::new(Scenario::A);
    cfg.n = n;
    cfg.seed = seed;
    let d = generate_scenario(&cfg).unwrap();
    let pv = pseudo_observations(&d.train, &[1], &[cfg.t_star]).unwrap();
    let mut rng = rng_from_seed(seed ^ 0xA5A5);
    let noise = 0.05 + 0.1 * rng.random::<f64>();
    let x = d.train.covariates();
    let c = Array2::from_shape_fn((n, 3), |(i, k)| match k {
        0 => d.train_truth[i].true_cif + noise * (rng.random::<f64>() - 0.5),
        1 => x[[i, 0]] + 0.1 * (rng.random::<f64>() - 0.5),
        _ => rng.random::<f64>(),
    });
    WeightInstance {
        c,
        case_w: pv.cause_at(1, cfg.t_star).unwrap(),
        control_w: pv.survival_at(cfg.t_star).unwrap(),
    }
}

/// Best pairwise AUC over the simplex grid.
pub fn grid_best(inst: &WeightInstance, m: usize) -> f64 {
    simplex_grid(m)
        .iter()
        .map(|u| {
            let s: Vec<f64> = inst.c.outer_iter().map(|r| r[0] * u[0] + r[1] * u[1] + r[2] * u[2]).collect();
            pairwise_auc(&inst.case_w, &inst.control_w, &s)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
