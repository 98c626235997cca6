use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::clustering::ValidityVerdict;
use crate::error::{Error, Result};

use super::combination::{ClusterLoss, ComponentCombination, Pretext};

pub const REPORT_COLUMNS: [&str; 10] = [
    "arch",
    "dimred",
    "pretext",
    "cluster_loss",
    "k",
    "trial",
    "seed",
    "sc",
    "dbi",
    "verdict",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub combo: ComponentCombination,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub sc: Option<f64>,
    pub dbi: Option<f64>,
    pub verdict: ValidityVerdict,
}

impl ReportRow {
    pub fn is_valid(&self) -> bool {
        self.verdict.is_valid() && self.sc.is_some() && self.dbi.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
}

/// Mean scores over the valid rows that use one component option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentScore {
    pub sc: f64,
    pub dbi: f64,
    pub valid_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvalidRate {
    pub invalid: usize,
    pub total: usize,
    pub rate: f64,
}

/// Per-component aggregates keyed by component class, then option tag.
///
/// Options without a valid row map to `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentAggregates {
    pub components: BTreeMap<String, BTreeMap<String, Option<ComponentScore>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub rows: usize,
    pub valid_rows: usize,
    /// Whether rows with no pretext loss enter the component averages.
    pub includes_pretext_none: bool,
    pub aggregates: Option<ComponentAggregates>,
    pub invalid_rates: BTreeMap<String, InvalidRate>,
}

/// Order-independent mean: values are sorted before summation.
fn stable_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

impl EvaluationReport {
    pub fn valid_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.is_valid())
    }

    /// Invalid-run rate for each clustering-loss variant.
    pub fn invalid_rates(&self) -> BTreeMap<String, InvalidRate> {
        ClusterLoss::ALL
            .iter()
            .map(|&cl| {
                let rows: Vec<&ReportRow> = self.rows.iter().filter(|r| r.combo.cluster_loss == cl).collect();
                let invalid = rows.iter().filter(|r| !r.is_valid()).count();
                let total = rows.len();
                let rate = if total == 0 { 0.0 } else { invalid as f64 / total as f64 };
                (cl.tag().to_string(), InvalidRate { invalid, total, rate })
            })
            .collect()
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            rows: self.rows.len(),
            valid_rows: self.valid_rows().count(),
            includes_pretext_none: true,
            aggregates: aggregate_by_component(self).ok(),
            invalid_rates: self.invalid_rates(),
        }
    }

    /// Writes the rows as CSV, preceded by a `#` comment line carrying the pretext flag.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# includes_pretext_none={}", self.summary().includes_pretext_none)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(REPORT_COLUMNS).map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            wr.write_record([
                r.combo.arch.tag().to_string(),
                r.combo.dimred.tag().to_string(),
                r.combo.pretext.tag().to_string(),
                r.combo.cluster_loss.tag().to_string(),
                r.k.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                opt(r.sc),
                opt(r.dbi),
                r.verdict.tag().to_string(),
            ])
            .map_err(io)?;
        }
        wr.flush().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header = rd.headers().map_err(io)?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols != REPORT_COLUMNS {
            return Err(Error::MalformedRow {
                line: 1,
                reason: format!("expected header {}", REPORT_COLUMNS.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::MalformedRow {
                line,
                reason: e.to_string(),
            })?;
            let bad = |reason: String| Error::MalformedRow { line, reason };
            if rec.len() != REPORT_COLUMNS.len() {
                return Err(bad(format!("expected {} fields, got {}", REPORT_COLUMNS.len(), rec.len())));
            }
            let combo: ComponentCombination = format!("{}/{}/{}/{}", &rec[0], &rec[1], &rec[2], &rec[3])
                .parse()
                .map_err(|e: Error| bad(e.to_string()))?;
            let int = |j: usize| -> Result<u64> {
                rec[j]
                    .parse::<u64>()
                    .map_err(|e| bad(format!("{}: {e}", REPORT_COLUMNS[j])))
            };
            let real = |j: usize| -> Result<Option<f64>> {
                if rec[j].is_empty() {
                    return Ok(None);
                }
                let v: f64 = rec[j].parse().map_err(|e| bad(format!("{}: {e}", REPORT_COLUMNS[j])))?;
                if !v.is_finite() {
                    return Err(bad(format!("{} is not finite", REPORT_COLUMNS[j])));
                }
                Ok(Some(v))
            };
            let verdict = ValidityVerdict::parse(&rec[9]).ok_or_else(|| bad(format!("unknown verdict '{}'", &rec[9])))?;
            rows.push(ReportRow {
                combo,
                k: int(4)? as usize,
                trial: int(5)? as usize,
                seed: int(6)?,
                sc: real(7)?,
                dbi: real(8)?,
                verdict,
            });
        }
        Ok(EvaluationReport { rows })
    }
}

fn io(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Mean SC and DBI over valid rows for every option of every component class.
pub fn aggregate_by_component(report: &EvaluationReport) -> Result<ComponentAggregates> {
    let valid: Vec<&ReportRow> = report.valid_rows().collect();
    if valid.is_empty() {
        return Err(Error::NoValidRows);
    }
    let score = |pred: &dyn Fn(&ComponentCombination) -> bool| -> Option<ComponentScore> {
        let rows: Vec<&&ReportRow> = valid.iter().filter(|r| pred(&r.combo)).collect();
        if rows.is_empty() {
            return None;
        }
        Some(ComponentScore {
            sc: stable_mean(rows.iter().map(|r| r.sc.unwrap()).collect()),
            dbi: stable_mean(rows.iter().map(|r| r.dbi.unwrap()).collect()),
            valid_rows: rows.len(),
        })
    };
    let mut components = BTreeMap::new();
    components.insert(
        "arch".to_string(),
        crate::networks::Architecture::ALL
            .iter()
            .map(|&a| (a.tag().to_string(), score(&|c| c.arch == a)))
            .collect(),
    );
    components.insert(
        "dimred".to_string(),
        crate::dimred::DimRedKind::ALL
            .iter()
            .map(|&d| (d.tag().to_string(), score(&|c| c.dimred == d)))
            .collect(),
    );
    components.insert(
        "pretext".to_string(),
        Pretext::ALL
            .iter()
            .map(|&p| (p.tag().to_string(), score(&|c| c.pretext == p)))
            .collect(),
    );
    components.insert(
        "cluster_loss".to_string(),
        ClusterLoss::ALL
            .iter()
            .map(|&l| (l.tag().to_string(), score(&|c| c.cluster_loss == l)))
            .collect(),
    );
    Ok(ComponentAggregates { components })
}
