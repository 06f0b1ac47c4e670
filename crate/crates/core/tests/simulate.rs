use rand::Rng as _;
use rand_distr::{Distribution, Weibull};

use pseudosl::dataset::write_csv_to;
use pseudosl::rng::rng_from_seed;
use pseudosl::simulate::{
    gen_covariates, read_truth_csv, rescaling_constant, sample_times, scale_model, true_cif,
    uniform_censoring_bounds, write_truth_csv, QuantileConvention,
};
use pseudosl::{generate_scenario, read_csv, CsvSchema, Scenario, ScenarioConfig};

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_sd(a);
    let (mb, sb) = mean_sd(b);
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0);
    cov / (sa * sb)
}

#[test]
fn covariate_moments() {
    let x = gen_covariates(100_000, &mut rng_from_seed(1));
    for j in 0..20 {
        let (m, _) = mean_sd(&x.column(j).to_vec());
        assert!(m.abs() < 0.01, "column {j} mean {m}");
    }
    let (_, sd1) = mean_sd(&x.column(0).to_vec());
    assert!((sd1 - 0.1).abs() < 0.005, "{sd1}");
    let sd6 = (5.0f64 * 0.25 * 0.25 * 0.01 + 0.01).sqrt();
    let expected = 0.25 * 0.01 / (0.1 * sd6);
    let r = corr(&x.column(5).to_vec(), &x.column(0).to_vec());
    assert!((r - expected).abs() < 0.02, "{r} vs {expected}");
}

#[test]
fn weibull_median_and_exponential_mean() {
    let mut rng = rng_from_seed(2);
    let (s, a) = (3.0, 2.2);
    let w = Weibull::new(s, a).unwrap();
    let mut draws: Vec<f64> = (0..1_000_000).map(|_| w.sample(&mut rng)).collect();
    draws.sort_by(f64::total_cmp);
    let median = draws[draws.len() / 2];
    let expected = s * 2f64.ln().powf(1.0 / a);
    assert!((median / expected - 1.0).abs() < 0.005, "{median} vs {expected}");

    let e = Weibull::new(4.0, 1.0).unwrap();
    let m = (0..1_000_000).map(|_| e.sample(&mut rng)).sum::<f64>() / 1e6;
    assert!((m / 4.0 - 1.0).abs() < 0.01, "{m}");
}

#[test]
fn rescaled_cif_hits_target_at_t_star() {
    let cfg = ScenarioConfig::new(Scenario::A);
    let c = rescaling_constant(26.5, 0.2, 3.5, QuantileConvention::Standard);
    let n = 1_000_000;
    let latent = sample_times(&vec![c; n], &vec![1e300; n], &cfg, &mut rng_from_seed(3)).unwrap();
    let hit = latent.iter().filter(|t| t.0 <= 26.5).count() as f64 / n as f64;
    assert!((hit - 0.2).abs() < 0.01, "{hit}");
    // The printed exponent puts essentially all mass before t*.
    let printed = rescaling_constant(26.5, 0.2, 3.5, QuantileConvention::Printed);
    assert!(-(-(26.5f64 / printed).powf(3.5)).exp_m1() > 0.99);
}

#[test]
fn true_cif_matches_closed_form_and_monte_carlo() {
    let (g, k, t): (f64, f64, f64) = (30.0, 80.0, 26.5);
    let (r1, r2) = (1.0 / g, 1.0 / k);
    let exact = r1 / (r1 + r2) * (1.0 - (-(r1 + r2) * t).exp());
    assert!((true_cif(g, 1.0, k, 1.0, t).unwrap() - exact).abs() < 1e-8);

    let mut rng = rng_from_seed(4);
    for _ in 0..5 {
        let g = 15.0 + 40.0 * rng.random::<f64>();
        let k = 20.0 + 60.0 * rng.random::<f64>();
        let (a, b) = (1.0 + 3.0 * rng.random::<f64>(), 1.0 + 3.0 * rng.random::<f64>());
        let p = true_cif(g, a, k, b, t).unwrap();
        let (w1, w2) = (Weibull::new(g, a).unwrap(), Weibull::new(k, b).unwrap());
        let m = 400_000;
        let hits = (0..m)
            .filter(|_| {
                let t1 = w1.sample(&mut rng);
                let t2 = w2.sample(&mut rng);
                t1 <= t && t1 < t2
            })
            .count() as f64
            / m as f64;
        let se = (p * (1.0 - p) / m as f64).sqrt();
        assert!((hits - p).abs() < 4.0 * se, "{hits} vs {p}");
    }
}

#[test]
fn true_cif_is_monotone() {
    let mut prev = 0.0;
    for k in 1..40 {
        let v = true_cif(30.0, 3.5, 50.0, 2.5, k as f64).unwrap();
        assert!(v >= prev);
        prev = v;
    }
    let mut prev = 0.0;
    for g in (5..60).rev() {
        let v = true_cif(g as f64, 3.5, 50.0, 2.5, 26.5).unwrap();
        assert!(v >= prev);
        prev = v;
    }
}

#[test]
fn censoring_fraction_over_replicates() {
    for target in [0.2, 0.5] {
        let mut total = 0.0;
        for r in 0..200 {
            let mut cfg = ScenarioConfig::new(Scenario::A);
            cfg.censoring_target = target;
            cfg.n = 200;
            cfg.seed = r;
            let d = generate_scenario(&cfg).unwrap();
            total += d.train.events().iter().filter(|&&e| e == 0).count() as f64 / 200.0;
        }
        let mean = total / 200.0;
        assert!((mean - target).abs() < 0.03, "target {target}: {mean}");
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (k, &i) in idx.iter().enumerate() {
        r[i] = k as f64;
    }
    r
}

#[test]
fn scenario_d_censoring_depends_on_x1() {
    let mut cfg = ScenarioConfig::new(Scenario::D);
    cfg.n = 200_000;
    cfg.seed = 5;
    let d = generate_scenario(&cfg).unwrap();
    let c: Vec<f64> = d.train_truth.iter().map(|t| t.censoring_time).collect();
    let x1 = d.train.covariates().column(0).to_vec();
    let r = corr(&ranks(&c), &ranks(&x1));
    // The X1 loading is small next to the exponential noise, hence the large
    // sample. Under independence sqrt(n) * r is roughly standard normal.
    assert!(r.abs() * (200_000f64).sqrt() > 4.0, "{r}");
}

#[test]
fn uniform_lower_bound_is_the_five_percent_quantile() {
    let mut rng = rng_from_seed(6);
    let times: Vec<f64> = (0..997).map(|_| 50.0 * rng.random::<f64>()).collect();
    let (a, _) = uniform_censoring_bounds(&times, 0.2).unwrap();
    // Type-7 quantile: position 0.05 * (n - 1) in the sorted sample.
    let mut s = times.clone();
    s.sort_by(f64::total_cmp);
    let pos = 0.05 * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let expected = s[lo] + (pos - lo as f64) * (s[lo + 1] - s[lo]);
    assert!((a - expected).abs() < 1e-12);
}

#[test]
fn scenario_c_plug_in_at_zero() {
    let x = ndarray::Array2::zeros((1, 20));
    let s = scale_model(Scenario::C, &x, &mut rng_from_seed(0)).unwrap();
    assert!((s.gamma1[0] - (6.7f64 / 4.0).exp()).abs() < 1e-12);
    let a = scale_model(Scenario::A, &x, &mut rng_from_seed(0)).unwrap();
    assert!((a.gamma1[0] - (-2.0f64).exp()).abs() < 1e-15);
}

#[test]
fn scenario_a_draw_round_trips_through_csv() {
    let mut cfg = ScenarioConfig::new(Scenario::A);
    cfg.n = 100;
    cfg.seed = 7;
    let d = generate_scenario(&cfg).unwrap();
    assert_eq!(d, generate_scenario(&cfg).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.csv");
    let mut buf = Vec::new();
    write_csv_to(&d.train, &mut buf).unwrap();
    std::fs::write(&path, &buf).unwrap();
    assert_eq!(read_csv(&path, &CsvSchema::default()).unwrap(), d.train);
    let mut tb = Vec::new();
    write_truth_csv(&d.train_truth, &mut tb).unwrap();
    assert_eq!(read_truth_csv(tb.as_slice()).unwrap(), d.train_truth);
}
