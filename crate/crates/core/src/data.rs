//! Transaction ingestion, monthly series construction, the synthetic
//! polynomial dataset, normalisation and train/test splitting.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::matrix::Matrix;
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransactionKind {
    Credit,
    Debit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub account_id: i64,
    pub date: NaiveDate,
    /// Signed amount: credits positive, debits negative.
    pub amount: f64,
    pub kind: TransactionKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransactionTable {
    pub rows: Vec<Transaction>,
}

impl TransactionTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn account_count(&self) -> usize {
        let mut ids: Vec<i64> = self.rows.iter().map(|r| r.account_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

pub const TRANSACTION_COLUMNS: [&str; 4] = ["account_id", "date", "type", "amount"];

pub fn load_transactions(path: impl AsRef<Path>) -> Result<TransactionTable> {
    let file = std::fs::File::open(path)?;
    parse_transactions(file)
}

/// Parses `account_id,date,type,amount` CSV (columns in any order, extra columns ignored).
pub fn parse_transactions<R: Read>(reader: R) -> Result<TransactionTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyFile);
    }
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(TRANSACTION_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |reason: String| Error::MalformedRow { line, reason };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let field = |j: usize| rec.get(idx[j]).ok_or_else(|| bad(format!("missing `{}`", TRANSACTION_COLUMNS[j])));
        let account_id: i64 = field(0)?
            .parse()
            .map_err(|_| bad(format!("bad account_id `{}`", rec.get(idx[0]).unwrap_or(""))))?;
        let date = NaiveDate::parse_from_str(field(1)?, "%Y-%m-%d")
            .map_err(|e| bad(format!("bad date `{}`: {e}", rec.get(idx[1]).unwrap_or(""))))?;
        let kind = match field(2)?.to_ascii_lowercase().as_str() {
            "credit" => TransactionKind::Credit,
            "debit" => TransactionKind::Debit,
            other => return Err(bad(format!("unknown type `{other}`"))),
        };
        let raw: f64 = field(3)?
            .parse()
            .map_err(|_| bad(format!("bad amount `{}`", rec.get(idx[3]).unwrap_or(""))))?;
        if !raw.is_finite() {
            return Err(bad("non-finite amount".into()));
        }
        let amount = match kind {
            TransactionKind::Credit => raw,
            TransactionKind::Debit => -raw,
        };
        rows.push(Transaction {
            account_id,
            date,
            amount,
            kind,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(TransactionTable { rows })
}

/// N univariate series of equal length with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    pub series: Matrix<S>,
    pub labels: Option<Vec<usize>>,
    pub ids: Vec<String>,
    pub normalized: bool,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(series: Matrix<S>, labels: Option<Vec<usize>>, ids: Vec<String>) -> Result<Self> {
        if ids.len() != series.rows() {
            return Err(shape_err(format!("{} ids", series.rows()), ids.len()));
        }
        if let Some(l) = &labels {
            if l.len() != series.rows() {
                return Err(shape_err(format!("{} labels", series.rows()), l.len()));
            }
        }
        if !series.is_finite() {
            return Err(Error::InvalidConfig("dataset contains non-finite values".into()));
        }
        Ok(Dataset {
            series,
            labels,
            ids,
            normalized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.series.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.series.rows() == 0
    }

    /// Series length T.
    pub fn length(&self) -> usize {
        self.series.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Dataset {
            series: self.series.select_rows(idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            normalized: self.normalized,
        }
    }

    pub fn cast<T: Scalar>(&self) -> Dataset<T> {
        Dataset {
            series: self.series.map(|v| T::of(v.as_f64())),
            labels: self.labels.clone(),
            ids: self.ids.clone(),
            normalized: self.normalized,
        }
    }

    /// CSV with header `id[,label],t0..t{T-1}`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string()];
        if self.labels.is_some() {
            header.push("label".into());
        }
        header.extend((0..self.length()).map(|t| format!("t{t}")));
        wtr.write_record(&header).map_err(csv_io)?;
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].clone()];
            if let Some(l) = &self.labels {
                rec.push(l[i].to_string());
            }
            rec.extend(self.series.row(i).iter().map(|v| format!("{:?}", v.as_f64())));
            wtr.write_record(&rec).map_err(csv_io)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers().map_err(|e| Error::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?;
        if headers.get(0) != Some("id") {
            return Err(Error::MissingColumn("id".into()));
        }
        let labelled = headers.get(1) == Some("label");
        let skip = if labelled { 2 } else { 1 };
        let t = headers.len().saturating_sub(skip);
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let bad = |reason: String| Error::MalformedRow { line, reason };
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != skip + t {
                return Err(bad(format!("expected {} fields, got {}", skip + t, rec.len())));
            }
            ids.push(rec[0].to_string());
            if labelled {
                labels.push(rec[1].parse().map_err(|_| bad(format!("bad label `{}`", &rec[1])))?);
            }
            for f in rec.iter().skip(skip) {
                let v: f64 = f.parse().map_err(|_| bad(format!("bad value `{f}`")))?;
                if !v.is_finite() {
                    return Err(bad("non-finite value".into()));
                }
                values.push(S::of(v));
            }
        }
        if ids.is_empty() {
            return Err(Error::EmptyFile);
        }
        let series = Matrix::from_vec(ids.len(), t, values)?;
        Dataset::new(series, labelled.then_some(labels), ids)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Outcome of [`build_series`].
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesBuild<S> {
    pub dataset: Dataset<S>,
    pub dropped: usize,
    /// Last calendar month covered by every series, as `(year, month)`.
    pub end_month: (i32, u32),
}

fn month_index(d: NaiveDate) -> i64 {
    d.year() as i64 * 12 + d.month0() as i64
}

/// Monthly signed net flow over the most recent `months` months.
///
/// Every series ends at the latest calendar month present in the table;
/// months without activity are zero. An account's history runs from its
/// first transaction month to that end month, and accounts with fewer than
/// `min_history` months are dropped.
pub fn build_series<S: Scalar>(table: &TransactionTable, months: usize, min_history: usize) -> Result<SeriesBuild<S>> {
    if months < 12 {
        return Err(Error::InvalidConfig(format!("months must be >= 12, got {months}")));
    }
    if min_history < months {
        return Err(Error::InvalidConfig(format!(
            "min_history ({min_history}) must be >= months ({months})"
        )));
    }
    build_series_unchecked(table, months, min_history)
}

pub(crate) fn build_series_unchecked<S: Scalar>(
    table: &TransactionTable,
    months: usize,
    min_history: usize,
) -> Result<SeriesBuild<S>> {
    if table.is_empty() {
        return Err(Error::EmptyFile);
    }
    let end = table.rows.iter().map(|r| month_index(r.date)).max().expect("non-empty");
    let mut accounts: BTreeMap<i64, (i64, BTreeMap<i64, f64>)> = BTreeMap::new();
    for r in &table.rows {
        let m = month_index(r.date);
        let entry = accounts.entry(r.account_id).or_insert((m, BTreeMap::new()));
        entry.0 = entry.0.min(m);
        *entry.1.entry(m).or_insert(0.0) += r.amount;
    }
    let start = end - months as i64 + 1;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut dropped = 0;
    for (id, (first, flows)) in &accounts {
        let history = (end - first + 1) as usize;
        if history < min_history {
            dropped += 1;
            continue;
        }
        ids.push(id.to_string());
        values.extend((start..=end).map(|m| S::of(flows.get(&m).copied().unwrap_or(0.0))));
    }
    if ids.is_empty() {
        return Err(Error::NoQualifyingAccounts { min_history });
    }
    let series = Matrix::from_vec(ids.len(), months, values)?;
    Ok(SeriesBuild {
        dataset: Dataset::new(series, None, ids)?,
        dropped,
        end_month: ((end.div_euclid(12)) as i32, (end.rem_euclid(12) + 1) as u32),
    })
}

/// Per-series z-normalisation with population standard deviation; constant rows become zeros.
pub fn znormalize<S: Scalar>(d: &Dataset<S>) -> Dataset<S> {
    let mut out = d.clone();
    let t = d.length();
    for i in 0..d.len() {
        let row = out.series.row_mut(i);
        znormalize_row(row, t);
    }
    out.normalized = true;
    out
}

fn znormalize_row<S: Scalar>(row: &mut [S], t: usize) {
    if t == 0 {
        return;
    }
    let n = S::of_usize(t);
    let mean = row.iter().fold(S::zero(), |a, &v| a + v) / n;
    let var = row.iter().fold(S::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
    let std = var.sqrt();
    if std <= S::of(1e-12) * mean.abs().max(S::one()) {
        row.iter_mut().for_each(|v| *v = S::zero());
    } else {
        row.iter_mut().for_each(|v| *v = (*v - mean) / std);
    }
}

/// Seeded random partition into `⌊ratio·N⌋` and `N − ⌊ratio·N⌋` series.
pub fn split<S: Scalar>(d: &Dataset<S>, ratio: f64, seed: u64) -> Result<(Dataset<S>, Dataset<S>)> {
    let (a, b) = split_indices(d.len(), ratio, seed)?;
    Ok((d.select(&a), d.select(&b)))
}

pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (ratio * n as f64).floor() as usize;
    let rest = idx.split_off(cut);
    Ok((idx, rest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub degrees: Vec<usize>,
    pub per_degree: usize,
    pub length: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            degrees: vec![1, 2, 3],
            per_degree: 100,
            length: 100,
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degrees.is_empty() {
            return Err(Error::InvalidConfig("at least one degree required".into()));
        }
        if self.per_degree == 0 {
            return Err(Error::InvalidConfig("per_degree must be >= 1".into()));
        }
        if self.length < 20 || self.length % 10 != 0 {
            return Err(Error::InvalidConfig(format!(
                "length must be >= 20 and divisible by 10, got {}",
                self.length
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Noisy random polynomials labelled by degree, before normalisation.
pub fn gen_polynomial_raw<S: Scalar>(cfg: &SynthConfig) -> Result<Dataset<S>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let t = cfg.length;
    let grid: Vec<f64> = (0..t).map(|i| -1.0 + 2.0 * i as f64 / (t - 1) as f64).collect();
    let n = cfg.degrees.len() * cfg.per_degree;
    let mut values = Vec::with_capacity(n * t);
    let mut labels = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for (label, &g) in cfg.degrees.iter().enumerate() {
        for j in 0..cfg.per_degree {
            let mut coef: Vec<f64> = (0..=g).map(|_| rng.random_range(-1.0..=1.0)).collect();
            while coef[g].abs() < 0.1 {
                coef[g] = rng.random_range(-1.0..=1.0);
            }
            for &x in &grid {
                let clean = coef.iter().rev().fold(0.0, |acc, &c| acc * x + c);
                let eps = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                values.push(S::of(clean + eps));
            }
            labels.push(label);
            ids.push(format!("deg{g}-{j}"));
        }
    }
    Dataset::new(Matrix::from_vec(n, t, values)?, Some(labels), ids)
}

/// Synthetic polynomial dataset, z-normalised per series.
pub fn gen_polynomial<S: Scalar>(cfg: &SynthConfig) -> Result<Dataset<S>> {
    Ok(znormalize(&gen_polynomial_raw(cfg)?))
}
