//! Weibull competing-risks scenarios with known cause-1 incidence.
//!
//! Twenty correlated normal covariates drive the scale of a Weibull time to
//! the event of interest (cause 1); a second Weibull time (cause 2) depends
//! on a single unrelated covariate. Scales are rescaled so the average
//! incidence at `t_star` hits fixed targets, then censoring is added.

pub mod bspline;
pub mod quadrature;

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand_distr::{Distribution, Exp, Normal, Uniform, Weibull};
use serde::{Deserialize, Serialize};

use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Rng};

pub const N_COVARIATES: usize = 20;
pub const DEFAULT_T_STAR: f64 = 26.5;
pub const DEFAULT_GAMMA2: f64 = 3.5;
pub const DEFAULT_KAPPA2: f64 = 2.5;
/// Average cause-1 incidence at `t_star` the rescaling aims for.
pub const CAUSE1_TARGET: f64 = 0.20;
/// Average cause-2 incidence at `t_star` the rescaling aims for.
pub const CAUSE2_TARGET: f64 = 0.07;
pub const QUAD_REL_TOL: f64 = 1e-8;

pub const BETA_B: [f64; 11] = [0.75, 0.5, 6.1, 1.02, -2.03, 1.0, 2.0, 1.0, 0.6, 0.1, 3.0];
const BETA_C_RAW: [f64; 8] = [1.1, 1.4, -2.1, -1.2, -2.3, -1.5, 6.7, 0.5];
const BETA_C_DIVISOR: f64 = 4.0;
const ALPHA_D_DIVISOR: f64 = 3.0;
const SCENARIO0_SD: f64 = 0.35;

/// Blocks 2-4: (first column, noise sd, loading on the previous block's sum).
const BLOCKS: [(usize, f64, f64); 3] = [(5, 0.1, 0.25), (10, 0.5, 0.15), (15, 0.65, 0.05)];
const BLOCK_WIDTH: usize = 5;
const BLOCK1_SD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "0", alias = "S0")]
    S0,
    A,
    B,
    C,
    D,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [Scenario::S0, Scenario::A, Scenario::B, Scenario::C, Scenario::D];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::S0 => "0",
            Scenario::A => "A",
            Scenario::B => "B",
            Scenario::C => "C",
            Scenario::D => "D",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "0" | "S0" => Ok(Scenario::S0),
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            "D" => Ok(Scenario::D),
            other => Err(Error::param("scenario", format!("unknown scenario {other:?}"))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// How the rescaling constant is derived from an incidence target `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileConvention {
    /// `t_star / (-ln(1 - p))^(1 / shape)`: the Weibull with this scale has
    /// `F(t_star) = p`.
    Standard,
    /// `t_star / (-ln(1 - p))^(-shape)`.
    Printed,
}

fn default_n() -> usize {
    500
}
fn default_censoring() -> f64 {
    0.2
}
fn default_t_star() -> f64 {
    DEFAULT_T_STAR
}
fn default_gamma2() -> f64 {
    DEFAULT_GAMMA2
}
fn default_kappa2() -> f64 {
    DEFAULT_KAPPA2
}
fn default_convention() -> QuantileConvention {
    QuantileConvention::Standard
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Validation size; defaults to `n`.
    #[serde(default)]
    pub n_validation: Option<usize>,
    /// Expected fraction of censored subjects.
    #[serde(default = "default_censoring")]
    pub censoring_target: f64,
    #[serde(default = "default_t_star")]
    pub t_star: f64,
    #[serde(default = "default_gamma2")]
    pub gamma2: f64,
    #[serde(default = "default_kappa2")]
    pub kappa2: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_convention")]
    pub quantile_convention: QuantileConvention,
    /// Scenario D: multiply the censoring scales by a common factor chosen so
    /// the expected censored fraction matches `censoring_target`.
    #[serde(default = "default_true")]
    pub calibrate_dependent_censoring: bool,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        ScenarioConfig {
            scenario,
            n: default_n(),
            n_validation: None,
            censoring_target: default_censoring(),
            t_star: DEFAULT_T_STAR,
            gamma2: DEFAULT_GAMMA2,
            kappa2: DEFAULT_KAPPA2,
            seed: 0,
            quantile_convention: QuantileConvention::Standard,
            calibrate_dependent_censoring: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param("n", format!("need at least 2 subjects, got {}", self.n)));
        }
        if self.n_validation.is_some_and(|v| v < 2) {
            return Err(Error::param("n_validation", "need at least 2 subjects"));
        }
        if !(self.censoring_target > 0.0 && self.censoring_target < 1.0) {
            return Err(Error::param(
                "censoring_target",
                format!("must be in (0, 1), got {}", self.censoring_target),
            ));
        }
        for (name, v) in [("t_star", self.t_star), ("gamma2", self.gamma2), ("kappa2", self.kappa2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Latent quantities for one simulated subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub t_latent_1: f64,
    pub t_latent_2: f64,
    pub censoring_time: f64,
    /// Cause-1 cumulative incidence at `t_star` given the covariates.
    pub true_cif: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDraw {
    pub config: ScenarioConfig,
    pub train: SurvivalDataset,
    pub validation: SurvivalDataset,
    pub train_truth: Vec<TruthRecord>,
    pub validation_truth: Vec<TruthRecord>,
}

/// Weibull distribution function with the given scale and shape.
pub fn weibull_cdf(t: f64, scale: f64, shape: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    -(-(t / scale).powf(shape)).exp_m1()
}

pub fn weibull_pdf(t: f64, scale: f64, shape: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let z = t / scale;
    shape / scale * z.powf(shape - 1.0) * (-z.powf(shape)).exp()
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("positive sd")
}

/// `n x 20` covariates in four blocks of five; blocks 2-4 load on the sum of
/// the previous block plus independent noise.
pub fn gen_covariates(n: usize, rng: &mut Rng) -> Array2<f64> {
    let mut x = Array2::zeros((n, N_COVARIATES));
    let first = normal(BLOCK1_SD);
    let noise: Vec<Normal<f64>> = BLOCKS.iter().map(|b| normal(b.1)).collect();
    for mut row in x.outer_iter_mut() {
        for j in 0..BLOCK_WIDTH {
            row[j] = first.sample(rng);
        }
        for (b, &(start, _, loading)) in BLOCKS.iter().enumerate() {
            let prev: f64 = (start - BLOCK_WIDTH..start).map(|k| row[k]).sum();
            for j in start..start + BLOCK_WIDTH {
                row[j] = loading * prev + noise[b].sample(rng);
            }
        }
    }
    x
}

/// Per-subject cause-1 scale and, for Scenario D, censoring scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleModel {
    pub gamma1: Vec<f64>,
    pub delta1: Option<Vec<f64>>,
}

fn scenario_c_linear(row: ndarray::ArrayView1<'_, f64>) -> f64 {
    let (x1, x6, x11, x16, x20) = (row[0], row[5], row[10], row[15], row[19]);
    let z = [
        x1,
        x6,
        x11,
        x16,
        x20,
        x1 * x6,
        (x11 / 0.1).cos(),
        if x16 < 0.0 { x16 } else { 0.0 },
    ];
    z.iter().zip(BETA_C_RAW).map(|(a, b)| a * b / BETA_C_DIVISOR).sum()
}

/// Cause-1 Weibull scales before rescaling. Scenario 0 draws its latent
/// noise from `rng`; the other scenarios are deterministic in `x`.
pub fn scale_model(scenario: Scenario, x: &Array2<f64>, rng: &mut Rng) -> Result<ScaleModel> {
    if x.ncols() != N_COVARIATES {
        return Err(Error::DimensionMismatch { expected: N_COVARIATES, actual: x.ncols() });
    }
    let gamma1: Vec<f64> = match scenario {
        Scenario::S0 => {
            let eps = normal(SCENARIO0_SD);
            (0..x.nrows()).map(|_| eps.sample(rng).exp()).collect()
        }
        Scenario::A => x.column(0).iter().map(|&x1| (-2.0 + 2.5 * x1).exp()).collect(),
        Scenario::B => {
            let x1 = x.column(0).to_vec();
            let x6 = x.column(5).to_vec();
            let b1 = bspline::expand(&x1);
            let b6 = bspline::expand(&x6);
            (0..x.nrows())
                .map(|i| {
                    let mut z = vec![x1[i], x6[i], x1[i] * x6[i]];
                    z.extend_from_slice(&b1[i]);
                    z.extend_from_slice(&b6[i]);
                    let lin: f64 = z.iter().zip(BETA_B).map(|(a, b)| a * b).sum();
                    (6.0 + lin).exp()
                })
                .collect()
        }
        Scenario::C | Scenario::D => x.outer_iter().map(|r| scenario_c_linear(r).exp()).collect(),
    };
    let delta1 = (scenario == Scenario::D).then(|| {
        x.outer_iter()
            .map(|r| {
                let z = [r[0], r[5], r[10], r[15], r[19]];
                z.iter().zip(BETA_C_RAW).map(|(a, b)| a * b / ALPHA_D_DIVISOR).sum::<f64>().exp()
            })
            .collect()
    });
    Ok(ScaleModel { gamma1, delta1 })
}

/// Cause-2 Weibull scales before rescaling, `exp(2.5 X_2)`.
pub fn competing_scales(x: &Array2<f64>) -> Vec<f64> {
    x.column(1).iter().map(|&x2| (2.5 * x2).exp()).collect()
}

/// Weibull scale whose distribution function reaches `p` at `t_star`
/// (under the chosen convention).
pub fn rescaling_constant(t_star: f64, p: f64, shape: f64, convention: QuantileConvention) -> f64 {
    let base = -(1.0 - p).ln();
    match convention {
        QuantileConvention::Standard => t_star / base.powf(1.0 / shape),
        QuantileConvention::Printed => t_star / base.powf(-shape),
    }
}

/// Multiply every scale by `mean(target / scale_i)`.
pub fn rescale(scales: &[f64], target: f64) -> Result<Vec<f64>> {
    if scales.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(bad) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::param("scale", format!("scales must be positive, got {bad}")));
    }
    let factor = scales.iter().map(|s| target / s).sum::<f64>() / scales.len() as f64;
    Ok(scales.iter().map(|s| s * factor).collect())
}

/// Rescaled cause-1 and cause-2 scales.
pub fn rescale_scales(
    gamma1: &[f64],
    kappa1: &[f64],
    config: &ScenarioConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let cg = rescaling_constant(config.t_star, CAUSE1_TARGET, config.gamma2, config.quantile_convention);
    let ck = rescaling_constant(config.t_star, CAUSE2_TARGET, config.kappa2, config.quantile_convention);
    Ok((rescale(gamma1, cg)?, rescale(kappa1, ck)?))
}

/// Independent latent Weibull times `(t1, t2)` per subject.
pub fn sample_times(
    gamma_star: &[f64],
    kappa_star: &[f64],
    config: &ScenarioConfig,
    rng: &mut Rng,
) -> Result<Vec<(f64, f64)>> {
    if gamma_star.len() != kappa_star.len() {
        return Err(Error::LengthMismatch { expected: gamma_star.len(), actual: kappa_star.len() });
    }
    gamma_star
        .iter()
        .zip(kappa_star)
        .map(|(&g, &k)| {
            let w1 = Weibull::new(g, config.gamma2)
                .map_err(|e| Error::param("gamma_star", e.to_string()))?;
            let w2 = Weibull::new(k, config.kappa2)
                .map_err(|e| Error::param("kappa_star", e.to_string()))?;
            let t1 = w1.sample(rng);
            let t2 = w2.sample(rng);
            Ok((t1, t2))
        })
        .collect()
}

/// Solve `f(x) = target` for decreasing `f` on `(lo, hi)` by bisection.
fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Expected censored fraction under `Uniform(a, b)` censoring.
pub fn expected_uniform_censoring(event_times: &[f64], a: f64, b: f64) -> f64 {
    event_times
        .iter()
        .map(|&t| ((t - a) / (b - a)).clamp(0.0, 1.0))
        .sum::<f64>()
        / event_times.len() as f64
}

/// Expected censored fraction under exponential censoring with scales `s * delta_i`.
pub fn expected_exponential_censoring(event_times: &[f64], delta: &[f64], s: f64) -> f64 {
    event_times
        .iter()
        .zip(delta)
        .map(|(&t, &d)| -(-t / (s * d)).exp_m1())
        .sum::<f64>()
        / event_times.len() as f64
}

/// Support `(a, b)` of the uniform censoring distribution: `a` is the 5%
/// quantile of the pooled event times, `b` is chosen so that the expected
/// censored fraction given the event times equals `target`.
pub fn uniform_censoring_bounds(event_times: &[f64], target: f64) -> Result<(f64, f64)> {
    let mut sorted = event_times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let a = bspline::quantile(&sorted, 0.05);
    let max = sorted[sorted.len() - 1];
    if max.partial_cmp(&a) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::DegenerateEventTimes(format!(
            "5% quantile {a} equals the maximum event time"
        )));
    }
    let ceiling = expected_uniform_censoring(event_times, a, a + (max - a) * 1e-12);
    if target >= ceiling {
        return Err(Error::param(
            "censoring_target",
            format!("{target} is not reachable; at most {ceiling:.3} with this support"),
        ));
    }
    let mut hi = max;
    while expected_uniform_censoring(event_times, a, hi) > target {
        hi = a + 2.0 * (hi - a);
    }
    let b = bisect_decreasing(|b| expected_uniform_censoring(event_times, a, b), a, hi, target);
    Ok((a, b))
}

/// Common factor on the Scenario D censoring scales giving the target
/// expected censored fraction.
pub fn dependent_censoring_factor(event_times: &[f64], delta: &[f64], target: f64) -> f64 {
    let f = |log_s: f64| expected_exponential_censoring(event_times, delta, log_s.exp());
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo) < target {
        lo -= 2.0;
    }
    while f(hi) > target {
        hi += 2.0;
    }
    bisect_decreasing(f, lo, hi, target).exp()
}

/// Censoring times. Scenario D: exponential with scale `delta_i` (times a
/// calibrated common factor when `calibrate` is set). Otherwise uniform on
/// [`uniform_censoring_bounds`].
pub fn gen_censoring(
    scenario: Scenario,
    event_times: &[f64],
    delta1: Option<&[f64]>,
    censoring_target: f64,
    calibrate: bool,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if event_times.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if scenario == Scenario::D {
        let delta = delta1.ok_or_else(|| Error::param("delta1", "Scenario D needs censoring scales"))?;
        let s = if calibrate {
            dependent_censoring_factor(event_times, delta, censoring_target)
        } else {
            1.0
        };
        return delta
            .iter()
            .map(|&d| {
                let e = Exp::new(1.0 / (s * d)).map_err(|e| Error::param("delta1", e.to_string()))?;
                Ok(e.sample(rng))
            })
            .collect();
    }
    let (a, b) = uniform_censoring_bounds(event_times, censoring_target)?;
    let u = Uniform::new(a, b).map_err(|e| Error::param("censoring", e.to_string()))?;
    Ok((0..event_times.len()).map(|_| u.sample(rng)).collect())
}

/// `P(T1 <= t_star, T1 < T2)` for independent Weibull `T1 ~ (gamma, gamma2)`
/// and `T2 ~ (kappa, kappa2)`:
/// `int_0^t* F1(x) dF2(x) + F1(t*) (1 - F2(t*))`.
pub fn true_cif(gamma: f64, gamma2: f64, kappa: f64, kappa2: f64, t_star: f64) -> Result<f64> {
    for (name, v) in [("gamma", gamma), ("gamma2", gamma2), ("kappa", kappa), ("kappa2", kappa2), ("t_star", t_star)] {
        if v.is_nan() || v <= 0.0 {
            return Err(Error::param(name, format!("must be positive, got {v}")));
        }
    }
    let tail = weibull_cdf(t_star, gamma, gamma2) * (1.0 - weibull_cdf(t_star, kappa, kappa2));
    if kappa.is_infinite() {
        return Ok(tail);
    }
    let (integral, _) = quadrature::integrate(
        |x| weibull_cdf(x, gamma, gamma2) * weibull_pdf(x, kappa, kappa2),
        0.0,
        t_star,
        QUAD_REL_TOL,
        1e-15,
        2000,
    )?;
    Ok((integral + tail).clamp(0.0, 1.0))
}

fn simulate_split(config: &ScenarioConfig, n: usize, seed: u64) -> Result<(SurvivalDataset, Vec<TruthRecord>)> {
    let mut rng = rng_from_seed(seed);
    let x = gen_covariates(n, &mut rng);
    let scales = scale_model(config.scenario, &x, &mut rng)?;
    let kappa1 = competing_scales(&x);
    let (gamma_star, kappa_star) = rescale_scales(&scales.gamma1, &kappa1, config)?;
    let latent = sample_times(&gamma_star, &kappa_star, config, &mut rng)?;
    let event_times: Vec<f64> = latent.iter().map(|&(a, b)| a.min(b)).collect();
    let censoring = gen_censoring(
        config.scenario,
        &event_times,
        scales.delta1.as_deref(),
        config.censoring_target,
        config.calibrate_dependent_censoring,
        &mut rng,
    )?;
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let (t1, t2) = latent[i];
        let c = censoring[i];
        let t = t1.min(t2);
        // Events win ties with censoring.
        if c < t {
            times.push(c);
            events.push(0);
        } else {
            times.push(t);
            events.push(if t1 <= t2 { 1 } else { 2 });
        }
        truth.push(TruthRecord {
            t_latent_1: t1,
            t_latent_2: t2,
            censoring_time: c,
            true_cif: true_cif(gamma_star[i], config.gamma2, kappa_star[i], config.kappa2, config.t_star)?,
        });
    }
    let names = (1..=N_COVARIATES).map(|j| format!("x{j}")).collect();
    let dataset = SurvivalDataset::new(times, events, x, None, Some(names))?;
    Ok((dataset, truth))
}

/// Independent training and validation draws for `config`.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<ScenarioDraw> {
    config.validate()?;
    let (train, train_truth) = simulate_split(config, config.n, derive_seed(config.seed, &[0]))?;
    let n_val = config.n_validation.unwrap_or(config.n);
    let (validation, validation_truth) = simulate_split(config, n_val, derive_seed(config.seed, &[1]))?;
    Ok(ScenarioDraw { config: config.clone(), train, validation, train_truth, validation_truth })
}

/// Truth side-file: `t_latent_1,t_latent_2,censoring_time,true_cif`, one row
/// per subject in dataset order.
pub fn write_truth_csv<W: Write>(truth: &[TruthRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t_latent_1", "t_latent_2", "censoring_time", "true_cif"])?;
    for r in truth {
        w.write_record([
            format!("{:?}", r.t_latent_1),
            format!("{:?}", r.t_latent_2),
            format!("{:?}", r.censoring_time),
            format!("{:?}", r.true_cif),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_truth_csv<R: Read>(reader: R) -> Result<Vec<TruthRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let rec: TruthRecord = rec?;
        if !(0.0..=1.0).contains(&rec.true_cif) {
            return Err(Error::param("true_cif", format!("{} is outside [0, 1]", rec.true_cif)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_truth_file(truth: &[TruthRecord], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_truth_csv(truth, std::io::BufWriter::new(f))
}

pub fn read_truth_file(path: &Path) -> Result<Vec<TruthRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_truth_csv(std::io::BufReader::new(f))
}

/// Subjects with the cause-1 event by `t_star` (cases) and without any
/// event by `t_star` (controls); subjects with the competing event first
/// are neither. Returns `None` for excluded subjects.
pub fn true_status(truth: &TruthRecord, t_star: f64) -> Option<bool> {
    let (t1, t2) = (truth.t_latent_1, truth.t_latent_2);
    if t1 <= t_star && t1 <= t2 {
        Some(true)
    } else if t1.min(t2) > t_star {
        Some(false)
    } else {
        None
    }
}
