//! Right-censored competing-risks data.
//!
//! Event codes follow the usual convention: `0` is censoring and every
//! positive code is a cause of failure. The CSV front end accepts codes
//! `0..=3`; the in-memory type accepts any positive cause.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Largest event code accepted from files and the command line.
pub const MAX_FILE_CAUSE: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    events: Vec<u8>,
    covariates: Array2<f64>,
    strata: Vec<Option<String>>,
    feature_names: Vec<String>,
}

/// Borrowed view of one subject.
#[derive(Debug, Clone, Copy)]
pub struct Record<'a> {
    pub time: f64,
    pub event: u8,
    pub x: ArrayView1<'a, f64>,
    pub stratum: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub n: usize,
    pub p: usize,
    pub censored: usize,
    /// Event counts keyed by cause code.
    pub events: BTreeMap<u8, usize>,
    pub stratified: bool,
}

impl SurvivalDataset {
    pub fn new(
        times: Vec<f64>,
        events: Vec<u8>,
        covariates: Array2<f64>,
        strata: Option<Vec<Option<String>>>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = times.len();
        if events.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: events.len(),
            });
        }
        if covariates.nrows() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: covariates.nrows(),
            });
        }
        let p = covariates.ncols();
        let strata = strata.unwrap_or_else(|| vec![None; n]);
        if strata.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: strata.len(),
            });
        }
        let feature_names =
            feature_names.unwrap_or_else(|| (1..=p).map(|j| format!("x{j}")).collect());
        if feature_names.len() != p {
            return Err(Error::LengthMismatch {
                expected: p,
                actual: feature_names.len(),
            });
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidRecord {
                    row: i,
                    reason: format!("time must be finite and >= 0, got {t}"),
                });
            }
        }
        for (i, row) in covariates.axis_iter(Axis(0)).enumerate() {
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidRecord {
                    row: i,
                    reason: format!("non-finite covariate {v}"),
                });
            }
        }
        Ok(Self {
            times,
            events,
            covariates,
            strata,
            feature_names,
        })
    }

    pub fn empty(feature_names: Vec<String>) -> Self {
        let p = feature_names.len();
        Self {
            times: Vec::new(),
            events: Vec::new(),
            covariates: Array2::zeros((0, p)),
            strata: Vec::new(),
            feature_names,
        }
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[u8] {
        &self.events
    }

    pub fn covariates(&self) -> ArrayView2<'_, f64> {
        self.covariates.view()
    }

    pub fn strata(&self) -> &[Option<String>] {
        &self.strata
    }

    pub fn has_strata(&self) -> bool {
        self.strata.iter().any(Option::is_some)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn record(&self, i: usize) -> Record<'_> {
        Record {
            time: self.times[i],
            event: self.events[i],
            x: self.covariates.row(i),
            stratum: self.strata[i].as_deref(),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = Record<'_>> + '_ {
        (0..self.n()).map(move |i| self.record(i))
    }

    /// Distinct positive cause codes present, ascending.
    pub fn causes(&self) -> Vec<u8> {
        let mut causes: Vec<u8> = self.events.iter().copied().filter(|&e| e != 0).collect();
        causes.sort_unstable();
        causes.dedup();
        causes
    }

    pub fn has_events(&self) -> bool {
        self.events.iter().any(|&e| e != 0)
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            times: rows.iter().map(|&i| self.times[i]).collect(),
            events: rows.iter().map(|&i| self.events[i]).collect(),
            covariates: self.covariates.select(Axis(0), rows),
            strata: rows.iter().map(|&i| self.strata[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn with_strata(mut self, strata: Vec<Option<String>>) -> Result<Self> {
        if strata.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                actual: strata.len(),
            });
        }
        self.strata = strata;
        Ok(self)
    }

    pub fn metadata(&self) -> DatasetMetadata {
        let mut events = BTreeMap::new();
        let mut censored = 0;
        for &e in &self.events {
            if e == 0 {
                censored += 1;
            } else {
                *events.entry(e).or_insert(0) += 1;
            }
        }
        DatasetMetadata {
            n: self.n(),
            p: self.p(),
            censored,
            events,
            stratified: self.has_strata(),
        }
    }
}

/// Column mapping for [`read_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub time: String,
    pub event: String,
    /// Stratum column. When `None`, a column named `stratum` is used if present.
    pub stratum: Option<String>,
    /// Feature columns in order. When `None`, every remaining column is a feature.
    pub features: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time: "time".into(),
            event: "event".into(),
            stratum: None,
            features: None,
        }
    }
}

pub fn read_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SurvivalDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_owned(),
            })
    };
    let time_col = find(&schema.time)?;
    let event_col = find(&schema.event)?;
    let stratum_col = match &schema.stratum {
        Some(name) => Some(find(name)?),
        None => header.iter().position(|h| h == "stratum"),
    };
    let feature_cols: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&c| c != time_col && c != event_col && Some(c) != stratum_col)
            .collect(),
    };
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| header[c].clone()).collect();

    let parse_err = |row: usize, col: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: header[col].clone(),
        reason,
    };

    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut strata = Vec::new();
    let mut values = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec?;
        // 1-based data row, header excluded.
        let row = idx + 1;
        let cell = |col: usize| rec.get(col).unwrap_or("");

        let time: f64 = cell(time_col)
            .parse()
            .map_err(|e| parse_err(row, time_col, format!("{e}")))?;
        if !time.is_finite() || time < 0.0 {
            return Err(parse_err(
                row,
                time_col,
                format!("time must be finite and >= 0, got {time}"),
            ));
        }
        let event: u8 = cell(event_col)
            .parse()
            .map_err(|e| parse_err(row, event_col, format!("{e}")))?;
        if event > MAX_FILE_CAUSE {
            return Err(parse_err(
                row,
                event_col,
                format!("event code {event} outside 0..={MAX_FILE_CAUSE}"),
            ));
        }
        for &c in &feature_cols {
            let v: f64 = cell(c)
                .parse()
                .map_err(|e| parse_err(row, c, format!("{e}")))?;
            if !v.is_finite() {
                return Err(parse_err(row, c, format!("non-finite covariate {v}")));
            }
            values.push(v);
        }
        times.push(time);
        events.push(event);
        strata.push(stratum_col.and_then(|c| {
            let s = cell(c);
            (!s.is_empty()).then(|| s.to_owned())
        }));
    }
    let n = times.len();
    let covariates = Array2::from_shape_vec((n, feature_cols.len()), values)
        .expect("row-major buffer has n * p entries");
    SurvivalDataset::new(times, events, covariates, Some(strata), Some(feature_names))
}

/// Write the canonical CSV layout: `time,event[,stratum],<features>`.
///
/// Floats are written in shortest round-trip form.
pub fn write_csv(dataset: &SurvivalDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    write_csv_to(dataset, &mut out)?;
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn write_csv_to<W: Write>(dataset: &SurvivalDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let with_strata = dataset.has_strata();
    let mut header = vec!["time".to_owned(), "event".to_owned()];
    if with_strata {
        header.push("stratum".to_owned());
    }
    header.extend(dataset.feature_names.iter().cloned());
    w.write_record(&header)?;
    for rec in dataset.records() {
        let mut row = vec![format!("{:?}", rec.time), rec.event.to_string()];
        if with_strata {
            row.push(rec.stratum.unwrap_or("").to_owned());
        }
        row.extend(rec.x.iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Random disjoint split; the first part holds `round(n * fraction)` records.
///
/// Both parts keep the original record order.
pub fn split_train_validation(
    dataset: &SurvivalDataset,
    fraction: f64,
    seed: u64,
) -> Result<(SurvivalDataset, SurvivalDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::param("fraction", format!("must lie in (0, 1), got {fraction}")));
    }
    let n = dataset.n();
    if n < 2 {
        return Err(Error::TooFewRecords {
            required: 2,
            actual: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let n_first = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut first = order[..n_first].to_vec();
    let mut second = order[n_first..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    Ok((dataset.subset(&first), dataset.subset(&second)))
}
