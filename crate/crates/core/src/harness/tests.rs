use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dimred::DimRedKind;

/// Independent statement of the compatibility rules over the raw tags.
fn oracle_count() -> usize {
    let pretexts_for = |arch: &str| -> &[&str] {
        match arch {
            "fcnn" | "cnn" => &["lr", "llr", "lv", "none"],
            "lstm" => &["lr", "lv", "none"],
            _ => &["lr", "none"],
        }
    };
    let mut n = 0;
    for arch in ["fcnn", "cnn", "lstm", "dtc"] {
        for dimred in ["pca", "umap", "none"] {
            for pretext in pretexts_for(arch) {
                for closs in ["de", "dc", "none"] {
                    let layer_ok = closs == "none" || dimred == "none";
                    let trains = !(*pretext == "none" && closs == "none");
                    if layer_ok && trains {
                        n += 1;
                    }
                }
            }
        }
    }
    n
}

#[test]
fn enumeration_matches_rule_oracle() {
    let all = enumerate_combinations();
    assert_eq!(oracle_count(), 53);
    assert_eq!(all.len(), oracle_count());
    assert_eq!(all, enumerate_combinations());
    let mut dedup = all.clone();
    dedup.sort();
    dedup.dedup();
    assert_eq!(dedup.len(), all.len());
    assert!(all.iter().all(|c| c.is_compatible()));
}

#[test]
fn dtc_only_takes_reconstruction_or_nothing() {
    for c in enumerate_combinations().iter().filter(|c| c.arch == Architecture::Dtc) {
        assert!(matches!(c.pretext, Pretext::Lr | Pretext::None), "{c}");
    }
}

#[test]
fn incompatible_combinations_name_their_rule() {
    let cases = [
        ("fcnn/pca/lr/de", "dimensionality reduction"),
        ("lstm/none/llr/none", "does not support"),
        ("dtc/none/lv/dc", "does not support"),
        ("cnn/umap/none/none", "nothing to train"),
    ];
    for (text, rule) in cases {
        let c: ComponentCombination = text.parse().unwrap();
        match c.check() {
            Err(Error::IncompatibleCombination(msg)) => assert!(msg.contains(rule), "{msg}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn combination_grammar_round_trips() {
    for c in enumerate_combinations() {
        assert_eq!(c.to_string().parse::<ComponentCombination>().unwrap(), c);
    }
    assert_eq!(
        "CNN/None/LR/DE".parse::<ComponentCombination>().unwrap(),
        fthc_preset()
    );
    for bad in ["cnn/none/lr", "cnn/none/lr/de/x", "rnn/none/lr/de", "cnn/tsne/lr/de", ""] {
        assert!(bad.parse::<ComponentCombination>().is_err(), "{bad}");
    }
}

#[test]
fn fthc_and_baselines() {
    let f = fthc_preset();
    assert_eq!(f.to_string(), "cnn/none/lr/de");
    assert!(enumerate_combinations().contains(&f));
    let b: Vec<String> = baselines().iter().map(|c| c.to_string()).collect();
    assert_eq!(b, ["lstm/none/lr/none", "fcnn/none/lr/none", "fcnn/none/lv/none", "dtc/none/lr/dc"]);
    assert!(baselines().iter().all(|c| c.is_compatible()));
}

#[test]
fn trial_seeds_offset_the_base() {
    assert_eq!(trial_seed(100, 0), 100);
    assert_eq!(trial_seed(100, 4), 104);
}

fn row(text: &str, k: usize, trial: usize, sc: Option<f64>, dbi: Option<f64>, verdict: ValidityVerdict) -> ReportRow {
    ReportRow {
        combo: text.parse().unwrap(),
        k,
        trial,
        seed: trial as u64,
        sc,
        dbi,
        verdict,
    }
}

fn hand_report() -> EvaluationReport {
    use ValidityVerdict::*;
    EvaluationReport {
        rows: vec![
            row("fcnn/pca/lr/none", 3, 0, Some(0.5), Some(1.0), Valid),
            row("fcnn/none/lr/de", 3, 0, Some(0.25), Some(2.0), Valid),
            row("cnn/pca/llr/none", 3, 0, Some(-0.125), Some(0.5), Valid),
            row("cnn/none/lr/dc", 3, 0, None, None, DegenerateCluster),
        ],
    }
}

#[test]
fn aggregates_match_hand_arithmetic() {
    let agg = aggregate_by_component(&hand_report()).unwrap();
    let get = |class: &str, opt: &str| agg.components[class][opt].clone();
    let fcnn = get("arch", "fcnn").unwrap();
    assert_eq!((fcnn.sc, fcnn.dbi, fcnn.valid_rows), (0.375, 1.5, 2));
    let cnn = get("arch", "cnn").unwrap();
    assert_eq!((cnn.sc, cnn.dbi, cnn.valid_rows), (-0.125, 0.5, 1));
    let pca = get("dimred", "pca").unwrap();
    assert_eq!((pca.sc, pca.dbi), (0.1875, 0.75));
    let lr = get("pretext", "lr").unwrap();
    assert_eq!((lr.sc, lr.dbi), (0.375, 1.5));
    assert!(get("arch", "lstm").is_none());
    assert!(get("cluster_loss", "dc").is_none());
    assert!(get("dimred", "umap").is_none());
}

#[test]
fn aggregates_flag_missing_components() {
    let r = EvaluationReport {
        rows: vec![row("fcnn/pca/lr/none", 3, 0, Some(0.1), Some(1.0), ValidityVerdict::Valid)],
    };
    let agg = aggregate_by_component(&r).unwrap();
    assert!(agg.components["arch"]["cnn"].is_none());
    assert!(agg.components["arch"]["fcnn"].is_some());
}

#[test]
fn no_valid_rows_is_an_error() {
    let r = EvaluationReport {
        rows: vec![row("fcnn/pca/lr/none", 3, 0, None, None, ValidityVerdict::Diverged)],
    };
    assert!(matches!(aggregate_by_component(&r), Err(Error::NoValidRows)));
    assert!(matches!(aggregate_by_component(&EvaluationReport::default()), Err(Error::NoValidRows)));
}

#[test]
fn invalid_rates_split_by_clustering_loss() {
    let rates = hand_report().invalid_rates();
    assert_eq!(rates["dc"].invalid, 1);
    assert_eq!(rates["dc"].rate, 1.0);
    assert_eq!(rates["de"].rate, 0.0);
    assert_eq!(rates["none"].total, 2);
}

#[test]
fn csv_round_trip_recomputes_identical_aggregates() {
    let r = hand_report();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("# includes_pretext_none=true\narch,dimred,pretext,cluster_loss,k,trial,seed,sc,dbi,verdict\n"));
    assert!(text.contains("cnn,none,lr,dc,3,0,0,,,degenerate_cluster"));
    let back = EvaluationReport::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, r);
    let a = serde_json::to_string(&aggregate_by_component(&r).unwrap()).unwrap();
    let b = serde_json::to_string(&aggregate_by_component(&back).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn malformed_reports_are_rejected_with_line_numbers() {
    let head = REPORT_COLUMNS.join(",");
    let cases = [
        format!("{head}\nfcnn,pca,lr,none,3,0,0,0.5,1.0,maybe\n"),
        format!("{head}\nfcnn,pca,lr,none,x,0,0,0.5,1.0,valid\n"),
        format!("{head}\nfcnn,pca,lr,none,3,0,0,abc,1.0,valid\n"),
        "a,b,c\n1,2,3\n".to_string(),
    ];
    for text in &cases {
        match EvaluationReport::read_csv(text.as_bytes()) {
            Err(Error::MalformedRow { line, .. }) => assert!(line >= 1),
            other => panic!("{text}: {other:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregates_ignore_row_order(seed in 0u64..10_000, n in 1usize..40) {
        let combos = enumerate_combinations();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let rows: Vec<ReportRow> = (0..n)
            .map(|i| {
                let valid = i == 0 || rng.random_bool(0.7);
                ReportRow {
                    combo: combos[rng.random_range(0..combos.len())],
                    k: 3,
                    trial: i,
                    seed: i as u64,
                    sc: valid.then(|| rng.random_range(-1.0..1.0)),
                    dbi: valid.then(|| rng.random_range(0.0..5.0)),
                    verdict: if valid { ValidityVerdict::Valid } else { ValidityVerdict::Diverged },
                }
            })
            .collect();
        let a = EvaluationReport { rows: rows.clone() };
        let mut shuffled = rows;
        shuffled.shuffle(&mut rng);
        let b = EvaluationReport { rows: shuffled };
        prop_assert_eq!(aggregate_by_component(&a).unwrap(), aggregate_by_component(&b).unwrap());
        prop_assert_eq!(a.invalid_rates(), b.invalid_rates());
    }
}

#[test]
fn grid_requires_k_and_trials() {
    let x = crate::matrix::Matrix::<f64>::zeros(4, 20);
    let cfg = TrainConfig::default();
    assert!(run_grid(&[fthc_preset()], &x, &x, &[], 1, &cfg, 0).is_err());
    assert!(run_grid(&[fthc_preset()], &x, &x, &[3], 0, &cfg, 0).is_err());
}

#[test]
fn dimred_kinds_cover_the_enumeration() {
    for d in DimRedKind::ALL {
        assert!(enumerate_combinations().iter().any(|c| c.dimred == d));
    }
}
