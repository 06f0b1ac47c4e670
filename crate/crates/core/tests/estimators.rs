use ndarray::Array2;
use proptest::prelude::*;

use pseudosl::{aalen_johansen, kaplan_meier, pseudo_observations, SurvivalDataset};

fn dataset(rows: &[(f64, u8)]) -> SurvivalDataset {
    let times = rows.iter().map(|r| r.0).collect();
    let events = rows.iter().map(|r| r.1).collect();
    SurvivalDataset::new(times, events, Array2::zeros((rows.len(), 1)), None, None).unwrap()
}

/// Small datasets on a coarse time lattice so ties are common.
fn rows(max_n: usize, max_cause: u8) -> impl Strategy<Value = Vec<(f64, u8)>> {
    prop::collection::vec((1u32..20, 0..=max_cause), 2..=max_n)
        .prop_map(|v| v.into_iter().map(|(t, e)| (t as f64 * 0.5, e)).collect())
}

const GRID: [f64; 4] = [2.0, 4.5, 7.0, 9.5];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn incidences_and_survival_sum_to_one(r in rows(50, 3), t in 0.0f64..12.0) {
        let d = dataset(&r);
        let s = kaplan_meier(&d).unwrap().eval(t);
        let total: f64 = (1..=3).map(|c| aalen_johansen(&d, c).unwrap().eval(t)).sum();
        prop_assert!((total + s - 1.0).abs() < 1e-12, "{total} + {s}");
    }

    #[test]
    fn pseudo_values_average_to_the_estimate(r in rows(50, 3)) {
        // Exact below the largest observation; at or beyond it the jackknife
        // carries an extra term when that observation is an event.
        let d = dataset(&r);
        let y_max = r.iter().map(|x| x.0).fold(0.0, f64::max);
        let pv = pseudo_observations(&d, &[1, 2, 3], &GRID).unwrap();
        let n = d.n() as f64;
        for (j, cause) in [1u8, 2, 3].into_iter().enumerate() {
            let f = aalen_johansen(&d, cause).unwrap();
            for (l, &t) in GRID.iter().enumerate().filter(|(_, &t)| t < y_max) {
                let mean = pv.values.slice(ndarray::s![.., l, j]).sum() / n;
                prop_assert!((mean - f.eval(t)).abs() < 1e-12, "cause {cause} t {t}: {mean} vs {}", f.eval(t));
            }
        }
    }

    #[test]
    fn pseudo_values_match_naive_leave_one_out(r in rows(30, 2)) {
        let d = dataset(&r);
        let n = d.n();
        let pv = pseudo_observations(&d, &[1, 2], &GRID).unwrap();
        for (j, &cause) in [1u8, 2].iter().enumerate() {
            let full = aalen_johansen(&d, cause).unwrap();
            for i in 0..n {
                let rest: Vec<usize> = (0..n).filter(|&k| k != i).collect();
                let loo = aalen_johansen(&d.subset(&rest), cause).unwrap();
                for (l, &t) in GRID.iter().enumerate() {
                    let naive = n as f64 * full.eval(t) - (n - 1) as f64 * loo.eval(t);
                    prop_assert!((pv.values[[i, l, j]] - naive).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn uncensored_pseudo_values_are_indicators(r in rows(40, 2)) {
        let r: Vec<(f64, u8)> = r.into_iter().map(|(t, e)| (t, e.max(1))).collect();
        let d = dataset(&r);
        let pv = pseudo_observations(&d, &[1, 2], &GRID).unwrap();
        for (i, &(y, e)) in r.iter().enumerate() {
            for (l, &t) in GRID.iter().enumerate() {
                for (j, cause) in [1u8, 2].into_iter().enumerate() {
                    let ind = if y <= t && e == cause { 1.0 } else { 0.0 };
                    prop_assert!((pv.values[[i, l, j]] - ind).abs() < 1e-12);
                }
                let alive = if y > t { 1.0 } else { 0.0 };
                prop_assert!((pv.survival[[i, l]] - alive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn incidence_is_monotone_and_bounded(r in rows(50, 2)) {
        let d = dataset(&r);
        let f = aalen_johansen(&d, 1).unwrap();
        let mut prev = 0.0;
        for k in 0..25 {
            let v = f.eval(k as f64 * 0.5);
            prop_assert!(v >= prev - 1e-15 && v <= 1.0 + 1e-15);
            prev = v;
        }
    }
}

#[test]
fn pseudo_mean_matches_estimate_on_fixture() {
    let d = dataset(&[(1.0, 1), (2.0, 0), (2.0, 2), (3.0, 1), (4.0, 0), (5.0, 1), (6.0, 2), (7.0, 0)]);
    let pv = pseudo_observations(&d, &[1], &[3.5, 6.5]).unwrap();
    let f = aalen_johansen(&d, 1).unwrap();
    for (l, t) in [3.5, 6.5].into_iter().enumerate() {
        let mean = (0..d.n()).map(|i| pv.values[[i, l, 0]]).sum::<f64>() / d.n() as f64;
        assert!((mean - f.eval(t)).abs() < 1e-12, "t = {t}: {mean} vs {}", f.eval(t));
    }
}
