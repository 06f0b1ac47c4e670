//! Product-limit estimators and jackknife pseudo-observations.
//!
//! At-risk sets use `R(u) = #{i : y_i >= u}`, so a subject censored at `u`
//! is still at risk for events at `u` (events are processed before
//! censorings). Events of different causes at the same time share `R(u)`
//! and `S(u-)`.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};

/// Right-continuous step function with finitely many jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    jump_times: Vec<f64>,
    values: Vec<f64>,
    value_at_zero: f64,
}

impl StepFunction {
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>, value_at_zero: f64) -> Result<Self> {
        if jump_times.len() != values.len() {
            return Err(Error::LengthMismatch {
                expected: jump_times.len(),
                actual: values.len(),
            });
        }
        if jump_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("jump_times", "must be strictly increasing"));
        }
        Ok(Self {
            jump_times,
            values,
            value_at_zero,
        })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            jump_times: Vec::new(),
            values: Vec::new(),
            value_at_zero: value,
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at_zero(&self) -> f64 {
        self.value_at_zero
    }

    /// Value at `t`: the value after the last jump `<= t`.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&u| u <= t);
        if k == 0 {
            self.value_at_zero
        } else {
            self.values[k - 1]
        }
    }

    /// Left limit at `t`: the value after the last jump `< t`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&u| u < t);
        if k == 0 {
            self.value_at_zero
        } else {
            self.values[k - 1]
        }
    }
}

/// Distinct event times with the at-risk count and per-cause event counts.
#[derive(Debug, Clone)]
struct EventTable {
    times: Vec<f64>,
    at_risk: Vec<usize>,
    /// `deaths[k][c]` = events of `causes[c]` at `times[k]`.
    deaths: Vec<Vec<usize>>,
    causes: Vec<u8>,
}

impl EventTable {
    fn build(times: &[f64], events: &[u8], causes: &[u8]) -> Self {
        let mut sorted_all: Vec<f64> = times.to_vec();
        sorted_all.sort_by(f64::total_cmp);
        let mut by_time: BTreeMap<OrdF64, Vec<usize>> = BTreeMap::new();
        for (&t, &e) in times.iter().zip(events) {
            if e == 0 {
                continue;
            }
            let slot = by_time
                .entry(OrdF64(t))
                .or_insert_with(|| vec![0; causes.len()]);
            if let Some(c) = causes.iter().position(|&c| c == e) {
                slot[c] += 1;
            }
        }
        let n = sorted_all.len();
        let mut table = EventTable {
            times: Vec::with_capacity(by_time.len()),
            at_risk: Vec::with_capacity(by_time.len()),
            deaths: Vec::with_capacity(by_time.len()),
            causes: causes.to_vec(),
        };
        for (OrdF64(t), d) in by_time {
            let below = sorted_all.partition_point(|&y| y < t);
            table.times.push(t);
            table.at_risk.push(n - below);
            table.deaths.push(d);
        }
        table
    }

    /// Walk the table and report overall survival and per-cause incidence on
    /// `grid`, optionally with one subject (time, event) removed.
    ///
    /// Output layout: `cif[l * causes + c]`, `surv[l]`.
    fn evaluate(&self, grid: &[f64], removed: Option<(f64, u8)>, cif: &mut [f64], surv: &mut [f64]) {
        let nc = self.causes.len();
        let removed_cause = removed.and_then(|(_, e)| self.causes.iter().position(|&c| c == e));
        let mut s = 1.0_f64;
        let mut c_acc = vec![0.0_f64; nc];
        let mut l = 0;
        let mut record = |upto: f64, s: f64, c_acc: &[f64], l: &mut usize| {
            while *l < grid.len() && grid[*l] < upto {
                surv[*l] = s;
                cif[*l * nc..(*l + 1) * nc].copy_from_slice(c_acc);
                *l += 1;
            }
        };
        let mut d = vec![0usize; nc];
        for (k, &u) in self.times.iter().enumerate() {
            record(u, s, &c_acc, &mut l);
            let mut r = self.at_risk[k];
            d.copy_from_slice(&self.deaths[k]);
            if let Some((y, _)) = removed {
                if y >= u {
                    r -= 1;
                }
                if y == u {
                    if let Some(c) = removed_cause {
                        d[c] -= 1;
                    }
                }
            }
            let total: usize = d.iter().sum();
            if total == 0 {
                continue;
            }
            let rf = r as f64;
            for c in 0..nc {
                if d[c] > 0 {
                    c_acc[c] += s * d[c] as f64 / rf;
                }
            }
            s *= 1.0 - total as f64 / rf;
        }
        record(f64::INFINITY, s, &c_acc, &mut l);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Kaplan-Meier estimate of overall (all-cause) survival.
pub fn kaplan_meier(dataset: &SurvivalDataset) -> Result<StepFunction> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let causes = dataset.causes();
    let table = EventTable::build(dataset.times(), dataset.events(), &causes);
    let mut s = 1.0;
    let mut values = Vec::with_capacity(table.times.len());
    for (k, d) in table.deaths.iter().enumerate() {
        let total: usize = d.iter().sum();
        s *= 1.0 - total as f64 / table.at_risk[k] as f64;
        values.push(s);
    }
    Ok(StepFunction {
        jump_times: table.times,
        values,
        value_at_zero: 1.0,
    })
}

/// Aalen-Johansen cumulative incidence of `cause`.
///
/// A cause that never occurs yields the zero function.
pub fn aalen_johansen(dataset: &SurvivalDataset, cause: u8) -> Result<StepFunction> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cause == 0 {
        return Err(Error::InvalidCause(cause));
    }
    let mut causes = dataset.causes();
    if !causes.contains(&cause) {
        return Ok(StepFunction::constant(0.0));
    }
    causes.sort_unstable();
    let target = causes.iter().position(|&c| c == cause).unwrap();
    let table = EventTable::build(dataset.times(), dataset.events(), &causes);
    let mut s = 1.0_f64;
    let mut cif = 0.0_f64;
    let mut jump_times = Vec::new();
    let mut values = Vec::new();
    for (k, d) in table.deaths.iter().enumerate() {
        let r = table.at_risk[k] as f64;
        let total: usize = d.iter().sum();
        if d[target] > 0 {
            cif += s * d[target] as f64 / r;
            jump_times.push(table.times[k]);
            values.push(cif);
        }
        s *= 1.0 - total as f64 / r;
    }
    Ok(StepFunction {
        jump_times,
        values,
        value_at_zero: 0.0,
    })
}

/// Jackknife pseudo-values on a time grid.
///
/// `values[[i, l, j]]` is the pseudo-value of subject `i` for `causes[j]` at
/// `times[l]`; `survival[[i, l]]` is one minus the sum of the pseudo-values of
/// every cause present in the data (in ascending cause order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoMatrix {
    pub times: Vec<f64>,
    pub causes: Vec<u8>,
    pub values: Array3<f64>,
    pub survival: Array2<f64>,
}

impl PseudoMatrix {
    pub fn n(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&u| u == t)
            .ok_or_else(|| Error::InvalidGrid(format!("time {t} is not on the pseudo-value grid")))
    }

    pub fn cause_index(&self, cause: u8) -> Result<usize> {
        self.causes
            .iter()
            .position(|&c| c == cause)
            .ok_or(Error::InvalidCause(cause))
    }

    /// Pseudo-values of `cause` at grid time `t`, one per subject.
    pub fn cause_at(&self, cause: u8, t: f64) -> Result<Vec<f64>> {
        let l = self.time_index(t)?;
        let j = self.cause_index(cause)?;
        Ok((0..self.n()).map(|i| self.values[[i, l, j]]).collect())
    }

    pub fn survival_at(&self, t: f64) -> Result<Vec<f64>> {
        let l = self.time_index(t)?;
        Ok(self.survival.column(l).to_vec())
    }

    /// Long-format CSV: `subject_id,time,cause,pseudo`. Survival pseudo-values
    /// are written with cause `0`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["subject_id", "time", "cause", "pseudo"])?;
        for i in 0..self.n() {
            for (l, t) in self.times.iter().enumerate() {
                for (j, c) in self.causes.iter().enumerate() {
                    w.write_record([
                        i.to_string(),
                        format!("{t:?}"),
                        c.to_string(),
                        format!("{:?}", self.values[[i, l, j]]),
                    ])?;
                }
                w.write_record([
                    i.to_string(),
                    format!("{t:?}"),
                    "0".to_owned(),
                    format!("{:?}", self.survival[[i, l]]),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn validate_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidGrid("grid is empty".into()));
    }
    if times.iter().any(|t| !t.is_finite() || *t <= 0.0) {
        return Err(Error::InvalidGrid("grid times must be finite and positive".into()));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidGrid("grid times must be strictly increasing".into()));
    }
    Ok(())
}

fn validate_causes(causes: &[u8]) -> Result<()> {
    if causes.is_empty() {
        return Err(Error::param("causes", "at least one cause is required"));
    }
    if let Some(&c) = causes.iter().find(|&&c| c == 0) {
        return Err(Error::InvalidCause(c));
    }
    Ok(())
}

/// Pseudo-values for one homogeneous sample; rows in input order.
///
/// Returns `(values, survival)` with shapes `n x m x |causes|` and `n x m`.
fn jackknife_block(
    times: &[f64],
    events: &[u8],
    causes: &[u8],
    all_causes: &[u8],
    grid: &[f64],
) -> (Array3<f64>, Array2<f64>) {
    let n = times.len();
    let m = grid.len();
    let na = all_causes.len();
    let table = EventTable::build(times, events, all_causes);
    let mut full_cif = vec![0.0; m * na];
    let mut full_surv = vec![0.0; m];
    table.evaluate(grid, None, &mut full_cif, &mut full_surv);

    let nf = n as f64;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut loo = vec![0.0; m * na];
            let mut surv = vec![0.0; m];
            table.evaluate(grid, Some((times[i], events[i])), &mut loo, &mut surv);
            full_cif
                .iter()
                .zip(&loo)
                .map(|(&full, &minus)| nf * full - (nf - 1.0) * minus)
                .collect()
        })
        .collect();

    let cause_pos: Vec<usize> = causes
        .iter()
        .map(|c| all_causes.iter().position(|a| a == c).unwrap())
        .collect();
    let mut values = Array3::zeros((n, m, causes.len()));
    let mut survival = Array2::zeros((n, m));
    for (i, row) in rows.iter().enumerate() {
        for l in 0..m {
            let slot = &row[l * na..(l + 1) * na];
            for (j, &pos) in cause_pos.iter().enumerate() {
                values[[i, l, j]] = slot[pos];
            }
            let total: f64 = slot.iter().sum();
            survival[[i, l]] = 1.0 - total;
        }
    }
    (values, survival)
}

fn union_causes(dataset: &SurvivalDataset, causes: &[u8]) -> Vec<u8> {
    let mut all = dataset.causes();
    all.extend_from_slice(causes);
    all.sort_unstable();
    all.dedup();
    all
}

/// Exact leave-one-out jackknife pseudo-values of the Aalen-Johansen
/// cumulative incidence: `n C(t) - (n - 1) C^{-i}(t)`.
pub fn pseudo_observations(
    dataset: &SurvivalDataset,
    causes: &[u8],
    times: &[f64],
) -> Result<PseudoMatrix> {
    if dataset.n() < 2 {
        return Err(Error::TooFewRecords {
            required: 2,
            actual: dataset.n(),
        });
    }
    validate_causes(causes)?;
    validate_grid(times)?;
    let all = union_causes(dataset, causes);
    let (values, survival) =
        jackknife_block(dataset.times(), dataset.events(), causes, &all, times);
    Ok(PseudoMatrix {
        times: times.to_vec(),
        causes: causes.to_vec(),
        values,
        survival,
    })
}

/// Pseudo-values computed independently within each stratum.
///
/// Grid times beyond a stratum's follow-up take the stratum's last
/// estimated incidence.
pub fn stratified_pseudo_observations(
    dataset: &SurvivalDataset,
    causes: &[u8],
    times: &[f64],
) -> Result<PseudoMatrix> {
    validate_causes(causes)?;
    validate_grid(times)?;
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.strata().iter().enumerate() {
        let s = s
            .as_deref()
            .ok_or_else(|| Error::Stratum(format!("record {i} has no stratum")))?;
        groups.entry(s).or_default().push(i);
    }
    if groups.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some((name, rows)) = groups.iter().find(|(_, rows)| rows.len() < 2) {
        return Err(Error::Stratum(format!(
            "stratum `{name}` has {} record(s); at least 2 are required",
            rows.len()
        )));
    }
    let all = union_causes(dataset, causes);
    let n = dataset.n();
    let m = times.len();
    let mut values = Array3::zeros((n, m, causes.len()));
    let mut survival = Array2::zeros((n, m));
    for rows in groups.values() {
        let t: Vec<f64> = rows.iter().map(|&i| dataset.times()[i]).collect();
        let e: Vec<u8> = rows.iter().map(|&i| dataset.events()[i]).collect();
        let (v, s) = jackknife_block(&t, &e, causes, &all, times);
        for (k, &i) in rows.iter().enumerate() {
            for l in 0..m {
                for j in 0..causes.len() {
                    values[[i, l, j]] = v[[k, l, j]];
                }
                survival[[i, l]] = s[[k, l]];
            }
        }
    }
    Ok(PseudoMatrix {
        times: times.to_vec(),
        causes: causes.to_vec(),
        values,
        survival,
    })
}
