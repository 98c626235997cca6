use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde_json::json;

use ledgercluster::clustering::ValidityVerdict;
use ledgercluster::data::{self, Dataset, SynthConfig};
use ledgercluster::dimred::pca_fit;
use ledgercluster::harness::{
    baselines, comparison_from_report, enumerate_combinations, fthc_preset, run_grid, stability_experiment,
    trial_seed, ComponentCombination, EvaluationReport,
};
use ledgercluster::losses::Metric;
use ledgercluster::networks::checkpoint::{read_checkpoint, write_checkpoint};
use ledgercluster::num::Scalar;
use ledgercluster::plot;
use ledgercluster::trainer::{train_combination, write_loss_curve};

use crate::args::{Command, GridArgs, IngestArgs, MetricArg, Precision, ReportArgs, StabilityArgs, SynthArgs, TrainArgs};
use crate::fail::{Failure, Outcome, EXIT_NUMERIC};
use crate::manifest::Outputs;

/// What a finished command hands back for its manifest.
pub struct Run {
    pub config: Option<serde_json::Value>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Outputs,
    pub manifest: PathBuf,
    pub status: u8,
    pub summary: String,
}

impl Run {
    fn new(manifest: PathBuf) -> Self {
        Run {
            config: None,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Outputs::default(),
            manifest,
            status: 0,
            summary: String::new(),
        }
    }
}

pub fn execute(cmd: &Command) -> Outcome<Run> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => match a.opts.precision {
            Precision::F32 => train::<f32>(a),
            Precision::F64 => train::<f64>(a),
        },
        Command::Grid(a) => match a.opts.precision {
            Precision::F32 => grid::<f32>(a),
            Precision::F64 => grid::<f64>(a),
        },
        Command::Stability(a) => match a.opts.precision {
            Precision::F32 => stability::<f32>(a),
            Precision::F64 => stability::<f64>(a),
        },
        Command::Report(a) => report(a),
        Command::Replay(_) => Err(Failure::config("a manifest cannot record a replay")),
    }
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> Outcome<Dataset<f64>> {
    Dataset::read_csv(open(path)?).map_err(|e| Failure {
        message: format!("{}: {e}", path.display()),
        ..Failure::from(e)
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s.into_bytes()
}

fn ingest(a: &IngestArgs) -> Outcome<Run> {
    let mut run = Run::new(sidecar(&a.out));
    let table = data::parse_transactions(open(&a.input)?).map_err(|e| Failure {
        message: format!("{}: {e}", a.input.display()),
        ..Failure::from(e)
    })?;
    let built = data::build_series::<f64>(&table, a.months, a.min_history.unwrap_or(a.months))?;
    let ds = if a.raw {
        built.dataset
    } else {
        data::znormalize(&built.dataset)
    };
    run.outputs.write_with(a.out.clone(), |b| ds.write_csv(b))?;
    run.inputs.push(a.input.clone());
    run.summary = format!(
        "{} series of length {} ({} accounts dropped) -> {}",
        ds.len(),
        ds.length(),
        built.dropped,
        a.out.display()
    );
    Ok(run)
}

fn synth(a: &SynthArgs) -> Outcome<Run> {
    let mut run = Run::new(sidecar(&a.out));
    let cfg = SynthConfig {
        degrees: a.degrees.clone(),
        per_degree: a.per_degree,
        length: a.length,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let ds = data::gen_polynomial::<f64>(&cfg)?;
    run.outputs.write_with(a.out.clone(), |b| ds.write_csv(b))?;
    run.config = Some(json!(cfg));
    run.seeds = vec![a.seed];
    run.summary = format!("{} series of length {} -> {}", ds.len(), ds.length(), a.out.display());
    Ok(run)
}

fn parse_combo(text: &str) -> Outcome<ComponentCombination> {
    let c: ComponentCombination = text.parse()?;
    c.check()?;
    Ok(c)
}

fn train<S: Scalar>(a: &TrainArgs) -> Outcome<Run> {
    let mut run = Run::new(a.out.join("manifest.json"));
    let combo = match (&a.combo, a.fthc) {
        (_, true) => fthc_preset(),
        (Some(text), false) => parse_combo(text)?,
        (None, false) => return Err(Failure::config("either --combo or --fthc is required")),
    };
    combo.check()?;
    let cfg = a.opts.config(a.k, a.seed);
    cfg.validate()?;
    let ds = load_dataset(&a.data)?.cast::<S>();
    let (train, test) = data::split(&ds, a.split, a.seed)?;
    let outcome = train_combination(&combo, &train.series, &test.series, &cfg)?;
    let p = &outcome.pipeline;

    run.outputs
        .write_with(a.out.join("checkpoint.bin"), |b| write_checkpoint(&p.autoencoder, b))?;
    if let Some(asg) = &outcome.assignment {
        run.outputs
            .write_with(a.out.join("assignment.csv"), |b| asg.write_csv(&test.ids, b))?;
    }
    run.outputs
        .write_with(a.out.join("pretrain_loss.csv"), |b| write_loss_curve(&p.pretrain_curve, b))?;
    if !p.cluster_curve.is_empty() {
        run.outputs
            .write_with(a.out.join("cluster_loss.csv"), |b| write_loss_curve(&p.cluster_curve, b))?;
    }
    let metrics = json!({
        "combo": combo.to_string(),
        "k": a.k,
        "seed": a.seed,
        "train_size": train.len(),
        "test_size": test.len(),
        "sc": outcome.sc,
        "dbi": outcome.dbi,
        "verdict": p.verdict.tag(),
        "failure": p.failure,
    });
    run.outputs.write(a.out.join("metrics.json"), &to_json(&metrics))?;

    run.inputs.push(a.data.clone());
    run.seeds = vec![a.seed];
    run.config = Some(json!(cfg));
    if p.verdict == ValidityVerdict::Diverged {
        run.status = EXIT_NUMERIC;
    }
    let score = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    run.summary = format!(
        "{combo}: verdict {} sc {} dbi {}",
        p.verdict.tag(),
        score(outcome.sc),
        score(outcome.dbi)
    );
    Ok(run)
}

fn grid<S: Scalar>(a: &GridArgs) -> Outcome<Run> {
    let mut run = Run::new(a.out.join("manifest.json"));
    let combos = if a.combos.is_empty() {
        enumerate_combinations()
    } else {
        a.combos.iter().map(|s| parse_combo(s)).collect::<Outcome<Vec<_>>>()?
    };
    let mut opts = a.opts.clone();
    if a.smoke {
        opts.pre_iters = 50;
        opts.cls_iters = 50;
    }
    if a.k.is_empty() || a.trials == 0 {
        return Err(Failure::config("--k must be non-empty and --trials >= 1"));
    }
    for &k in &a.k {
        opts.config(k, a.seed).validate()?;
    }
    let cfg = opts.config(a.k[0], a.seed);
    let ds = load_dataset(&a.data)?.cast::<S>();
    let (train, test) = data::split(&ds, a.split, a.seed)?;
    let report = run_grid(&combos, &train.series, &test.series, &a.k, a.trials, &cfg, a.seed)?;
    let summary = report.summary();

    run.outputs.write_with(a.out.join("report.csv"), |b| report.write_csv(b))?;
    run.outputs.write(a.out.join("summary.json"), &to_json(&summary))?;
    run.inputs.push(a.data.clone());
    run.seeds = (0..a.trials).map(|t| trial_seed(a.seed, t)).collect();
    run.config = Some(json!(cfg));
    run.summary = format!(
        "{} rows ({} valid) over {} combinations",
        summary.rows,
        summary.valid_rows,
        combos.len()
    );
    Ok(run)
}

fn stability<S: Scalar>(a: &StabilityArgs) -> Outcome<Run> {
    let mut run = Run::new(a.out.join("manifest.json"));
    let cfg = a.opts.config(a.k, a.seed);
    cfg.validate()?;
    if a.seeds == 0 {
        return Err(Failure::config("--seeds must be >= 1"));
    }
    let ds = match &a.data {
        Some(p) => {
            run.inputs.push(p.clone());
            load_dataset(p)?.cast::<S>()
        }
        None => data::gen_polynomial::<S>(&SynthConfig {
            seed: a.seed,
            ..SynthConfig::default()
        })?,
    };
    let metric = match a.metric {
        MetricArg::Euclidean => Metric::Euclidean,
        MetricArg::Cid => Metric::Cid,
    };
    let seeds: Vec<u64> = (0..a.seeds).map(|i| trial_seed(a.seed, i)).collect();
    let report = stability_experiment(&ds.series, &a.ratios, &seeds, &cfg, metric)?;

    let mut rows = String::from("ratio,seed,verdict\n");
    for r in &report.rows {
        let _ = writeln!(rows, "{},{},{}", r.ratio, r.seed, r.verdict.tag());
    }
    run.outputs.write(a.out.join("stability.csv"), rows.as_bytes())?;
    run.outputs.write(a.out.join("rates.json"), &to_json(&report.rates))?;
    run.outputs
        .write(a.out.join("stability.svg"), plot::stability_chart(&report).as_bytes())?;
    run.seeds = seeds;
    run.config = Some(json!(cfg));
    run.summary = report
        .rates
        .iter()
        .map(|r| format!("ratio {}: {}/{} invalid", r.ratio, r.invalid, r.total))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(run)
}

fn report(a: &ReportArgs) -> Outcome<Run> {
    let mut run = Run::new(a.out.join("manifest.json"));
    let rep = EvaluationReport::read_csv(open(&a.report)?).map_err(|e| Failure::input(format!("{}: {e}", a.report.display())))?;
    run.inputs.push(a.report.clone());
    for (name, svg) in plot::component_charts(&rep) {
        run.outputs.write(a.out.join(name), svg.as_bytes())?;
    }
    run.outputs
        .write(a.out.join("invalid_rates.svg"), plot::invalid_rate_chart(&rep).as_bytes())?;
    let mut combos = vec![fthc_preset()];
    combos.extend(baselines());
    let (sc, dbi) = plot::comparison_charts(&comparison_from_report(&rep, &combos));
    run.outputs.write(a.out.join("comparison_sc.svg"), sc.as_bytes())?;
    run.outputs.write(a.out.join("comparison_dbi.svg"), dbi.as_bytes())?;

    if !a.checkpoints.is_empty() {
        let data_path = a
            .data
            .as_ref()
            .ok_or_else(|| Failure::config("--checkpoint needs --data to plot a latent space"))?;
        let ds = load_dataset(data_path)?;
        run.inputs.push(data_path.clone());
        for (i, ck) in a.checkpoints.iter().enumerate() {
            let ae = read_checkpoint::<f64, _>(open(ck)?).map_err(|e| Failure::input(format!("{}: {e}", ck.display())))?;
            let z = ae.encode(&ds.series)?.values;
            let points: Vec<(f64, f64)> = if z.cols() >= 2 {
                let proj = pca_fit(&z, 2)?;
                let y = proj.transform(&z)?;
                y.iter_rows().map(|r| (r[0], r[1])).collect()
            } else {
                z.iter_rows().map(|r| (r[0], 0.0)).collect()
            };
            let labels = ds.labels.clone().unwrap_or_else(|| vec![0; ds.len()]);
            let stem = ck.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint");
            let title = format!("Latent space of {} ({})", ae.arch(), ck.display());
            run.outputs.write(
                a.out.join(format!("latent_{i}_{stem}.svg")),
                plot::scatter(&title, &points, &labels).as_bytes(),
            )?;
            run.inputs.push(ck.clone());
        }
    }
    run.summary = format!("{} charts -> {}", run.outputs.files.len(), a.out.display());
    Ok(run)
}
