//! Combination enumeration, the evaluation grid, the learning-rate stability
//! study and the FTHC comparison.

mod combination;
mod report;

#[cfg(test)]
mod tests;

use std::panic::{catch_unwind, AssertUnwindSafe};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{validate, ValidityVerdict};
use crate::error::{Error, Result};
use crate::losses::Metric;
use crate::matrix::Matrix;
use crate::networks::{Architecture, Autoencoder, LatentHead};
use crate::num::Scalar;
use crate::trainer::{cluster_optimize_from, init_layer, pretrain, train_combination, TrainConfig};

pub use combination::{baselines, enumerate_combinations, fthc_preset, ClusterLoss, ComponentCombination, Pretext};
pub use report::{
    aggregate_by_component, ComponentAggregates, ComponentScore, EvaluationReport, InvalidRate, ReportRow,
    ReportSummary, REPORT_COLUMNS,
};

/// Seed used by trial `t` of a grid started from `base`.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}

/// Default number-of-clusters grid.
pub const DEFAULT_K_LIST: [usize; 3] = [3, 5, 7];

fn run_cell<S: Scalar>(
    combo: &ComponentCombination,
    train: &Matrix<S>,
    test: &Matrix<S>,
    cfg: &TrainConfig,
    k: usize,
    trial: usize,
    seed: u64,
) -> ReportRow {
    let mut cfg = cfg.clone();
    cfg.k = k;
    cfg.seed = seed;
    let outcome = catch_unwind(AssertUnwindSafe(|| train_combination(combo, train, test, &cfg)));
    let (sc, dbi, verdict) = match outcome {
        Ok(Ok(o)) => (o.sc, o.dbi, o.verdict()),
        Ok(Err(e)) => (None, None, validate(Err(&e))),
        Err(_) => (None, None, ValidityVerdict::Diverged),
    };
    info!("{combo} k={k} trial={trial}: {}", verdict.tag());
    ReportRow {
        combo: *combo,
        k,
        trial,
        seed,
        sc,
        dbi,
        verdict,
    }
}

/// Trains every `(combo, k, trial)` cell, in parallel, and collects one row per cell.
///
/// Trial `t` uses seed `base_seed + t`. Rows come back in combination, k,
/// trial order regardless of scheduling.
pub fn run_grid<S: Scalar>(
    combos: &[ComponentCombination],
    train: &Matrix<S>,
    test: &Matrix<S>,
    k_list: &[usize],
    trials: usize,
    cfg: &TrainConfig,
    base_seed: u64,
) -> Result<EvaluationReport> {
    if k_list.is_empty() {
        return Err(Error::InvalidConfig("k list must not be empty".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    let cells: Vec<(ComponentCombination, usize, usize)> = combos
        .iter()
        .flat_map(|c| k_list.iter().flat_map(move |&k| (0..trials).map(move |t| (*c, k, t))))
        .collect();
    let rows = cells
        .par_iter()
        .map(|(c, k, t)| run_cell(c, train, test, cfg, *k, *t, trial_seed(base_seed, *t)))
        .collect();
    Ok(EvaluationReport { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub ratio: f64,
    pub seed: u64,
    pub verdict: ValidityVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRate {
    pub ratio: f64,
    pub invalid: usize,
    pub total: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub rates: Vec<StabilityRate>,
}

/// State shared by every learning-rate ratio for one seed.
#[derive(Debug, Clone)]
pub struct FrozenState<S> {
    pub autoencoder: Autoencoder<S>,
    pub layer: std::result::Result<crate::losses::ClusteringLayer<S>, String>,
}

/// Pretrains a DTC autoencoder with reconstruction loss and initialises the
/// clustering layer, once; failures are kept so every ratio reports them.
pub fn frozen_state<S: Scalar>(data: &Matrix<S>, cfg: &TrainConfig, metric: Metric) -> Result<FrozenState<S>> {
    let mut ae = Autoencoder::new(Architecture::Dtc, data.cols(), cfg.latent_dim, LatentHead::Deterministic, cfg.seed)?;
    let layer = pretrain(&mut ae, data, Pretext::Lr, cfg)
        .and_then(|_| ae.freeze_normalization(data))
        .and_then(|_| init_layer(&ae, data, cfg, metric))
        .map_err(|e| e.to_string());
    Ok(FrozenState { autoencoder: ae, layer })
}

/// Invalid-clustering rate for each `eta_cls / eta_pre` ratio from identical
/// frozen pretrained states.
pub fn stability_experiment<S: Scalar>(
    data: &Matrix<S>,
    ratios: &[f64],
    seeds: &[u64],
    cfg: &TrainConfig,
    metric: Metric,
) -> Result<StabilityReport> {
    if ratios.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidConfig("stability needs at least one ratio and one seed".into()));
    }
    if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidConfig(format!("ratio {r} must be positive")));
    }
    let per_seed: Vec<Vec<StabilityRow>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<StabilityRow>> {
            let mut base = cfg.clone();
            base.seed = seed;
            let frozen = frozen_state(data, &base, metric)?;
            Ok(ratios
                .iter()
                .map(|&ratio| {
                    let mut c = base.clone();
                    c.eta_cls = ratio * base.eta_pre;
                    let verdict = match &frozen.layer {
                        Ok(layer) => {
                            let run = catch_unwind(AssertUnwindSafe(|| {
                                cluster_optimize_from(&frozen.autoencoder, layer.clone(), data, &c)
                            }));
                            match run {
                                Ok(Ok(phase)) => phase.verdict,
                                Ok(Err(e)) => validate(Err(&e)),
                                Err(_) => ValidityVerdict::Diverged,
                            }
                        }
                        Err(_) => ValidityVerdict::Diverged,
                    };
                    info!("stability seed={seed} ratio={ratio}: {}", verdict.tag());
                    StabilityRow { ratio, seed, verdict }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let rows: Vec<StabilityRow> = per_seed.into_iter().flatten().collect();
    let rates = ratios
        .iter()
        .map(|&ratio| {
            let of: Vec<&StabilityRow> = rows.iter().filter(|r| r.ratio == ratio).collect();
            let invalid = of.iter().filter(|r| !r.verdict.is_valid()).count();
            StabilityRate {
                ratio,
                invalid,
                total: of.len(),
                rate: invalid as f64 / of.len() as f64,
            }
        })
        .collect();
    Ok(StabilityReport { rows, rates })
}

/// Mean test-set scores of one combination over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub combo: ComponentCombination,
    pub mean_sc: Option<f64>,
    pub mean_dbi: Option<f64>,
    pub valid: usize,
    pub runs: usize,
}

/// Runs each combination once per seed and averages the valid scores.
pub fn compare<S: Scalar>(
    combos: &[ComponentCombination],
    train: &Matrix<S>,
    test: &Matrix<S>,
    seeds: &[u64],
    cfg: &TrainConfig,
) -> Result<Vec<ComparisonEntry>> {
    let report = run_grid_with_seeds(combos, train, test, cfg, seeds)?;
    Ok(comparison_from_report(&report, combos))
}

/// Mean valid scores of each listed combination within a report.
pub fn comparison_from_report(report: &EvaluationReport, combos: &[ComponentCombination]) -> Vec<ComparisonEntry> {
    combos
        .iter()
        .map(|c| {
            let rows: Vec<&ReportRow> = report.rows.iter().filter(|r| r.combo == *c).collect();
            let valid: Vec<&&ReportRow> = rows.iter().filter(|r| r.is_valid()).collect();
            let mean = |f: &dyn Fn(&ReportRow) -> f64| {
                (!valid.is_empty()).then(|| valid.iter().map(|r| f(r)).sum::<f64>() / valid.len() as f64)
            };
            ComparisonEntry {
                combo: *c,
                mean_sc: mean(&|r| r.sc.unwrap()),
                mean_dbi: mean(&|r| r.dbi.unwrap()),
                valid: valid.len(),
                runs: rows.len(),
            }
        })
        .collect()
}

fn run_grid_with_seeds<S: Scalar>(
    combos: &[ComponentCombination],
    train: &Matrix<S>,
    test: &Matrix<S>,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<EvaluationReport> {
    let cells: Vec<(ComponentCombination, usize, u64)> = combos
        .iter()
        .flat_map(|c| seeds.iter().enumerate().map(move |(t, &s)| (*c, t, s)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|(c, t, s)| run_cell(c, train, test, cfg, cfg.k, *t, *s))
        .collect();
    Ok(EvaluationReport { rows })
}
