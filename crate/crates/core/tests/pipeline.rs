mod common;

use std::collections::HashSet;

use common::small_config;
use odxu_core::metrics::{error_decomposition, EvalFrame};
use odxu_core::pipeline::{
    all_mode_triples, fit_pipeline, leakage_overlap, nested_portion, partition, persist, Model, RunManifest,
    ScenarioConfig, SourceModels, TransferRunner, CASES,
};
use odxu_core::synth::BlobSpec;

#[test]
fn partitions_are_disjoint_stratified_and_leak_free() {
    let data = BlobSpec::three_class(50, 1).dataset().unwrap();
    let out = fit_pipeline(&data, &small_config(1)).unwrap();
    let p = &out.partitions;
    let mut all: Vec<usize> = [&p.dec_train, &p.dec_test].iter().flat_map(|v| v.iter().copied()).collect();
    all.sort_unstable();
    assert_eq!(all, (0..150).collect::<Vec<_>>());
    let dec_test: HashSet<usize> = p.dec_test.iter().copied().collect();
    let halves: HashSet<usize> = p.xgb_train.iter().chain(&p.xgb_test).copied().collect();
    assert_eq!(dec_test, halves);
    assert!(p.xgb_train.iter().all(|i| !p.xgb_test.contains(i)));
    for class in 0..3 {
        let n = |rows: &[usize]| rows.iter().filter(|&&i| out.prepared.y[i] == class).count() as i64;
        assert!((n(&p.dec_train) - n(&p.dec_test)).abs() <= 1);
        assert!((n(&p.xgb_train) - n(&p.xgb_test)).abs() <= 1);
    }
    assert_eq!(out.manifest.leakage_overlap, 0);
    let train = [&p.dec_train[..], &p.xgb_train[..]];
    assert_eq!(leakage_overlap(&train, &[&p.xgb_test], &out.prepared.row_hashes), 0);
}

#[test]
fn duplicate_rows_are_counted_as_leakage() {
    let hashes: Vec<String> = ["a", "b", "a", "c"].iter().map(|s| s.to_string()).collect();
    assert_eq!(leakage_overlap(&[&[0, 1]], &[&[2, 3]], &hashes), 1);
}

#[test]
fn partition_depends_only_on_labels_and_seed() {
    let y: Vec<usize> = (0..90).map(|i| i % 3).collect();
    let a = partition(&y, 7).unwrap();
    let b = partition(&y, 7).unwrap();
    assert_eq!(a.xgb_test, b.xgb_test);
    assert_ne!(a.dec_train, partition(&y, 8).unwrap().dec_train);
}

#[test]
fn rerun_is_bit_identical() {
    let data = BlobSpec::three_class(40, 2).dataset().unwrap();
    let cfg = small_config(2);
    let a = fit_pipeline(&data, &cfg).unwrap();
    let b = fit_pipeline(&data, &cfg).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.model, b.model);
    assert_eq!(Model::Gbdt(a.model.clf).to_bytes(), Model::Gbdt(b.model.clf).to_bytes());
    assert_eq!(a.manifest.partitions, b.manifest.partitions);
}

#[test]
fn manifest_artifacts_verify_and_detect_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let data = BlobSpec::three_class(30, 3).dataset().unwrap();
    let out = fit_pipeline(&data, &small_config(3)).unwrap();
    let mut m = out.manifest;
    let p = dir.path().join("gbdt.bin");
    let bytes = Model::Gbdt(out.model.clf).to_bytes();
    m.write_artifact("gbdt", &p, &bytes).unwrap();
    m.verify_artifacts().unwrap();
    let mpath = dir.path().join("run.json");
    m.save(&mpath).unwrap();
    let back = RunManifest::load(&mpath).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.datasets["input"], data.digest());
    for stage in ["autoencoder", "cluster", "classifier"] {
        assert!(back.timings.contains_key(stage), "{stage}");
    }
    persist(&Model::Dec(out.model.dec), &p).unwrap();
    assert!(m.verify_artifacts().is_err());
}

#[test]
fn error_decomposition_identity_on_fitted_report() {
    let data = BlobSpec::confusable(40, 40, 0, 4).dataset().unwrap();
    let out = fit_pipeline(&data, &small_config(4)).unwrap();
    let z = out.z.select(ndarray::Axis(0), &out.partitions.xgb_test);
    let y: Vec<usize> = out.partitions.xgb_test.iter().map(|&i| out.prepared.y[i]).collect();
    let pred = out.model.clf.predict(z.view()).unwrap();
    let f = EvalFrame::new(y, pred, out.model.benign).unwrap();
    let (multi, binary, wrong_type) = error_decomposition(&f);
    assert_eq!(multi, binary + wrong_type);
    let r = &out.report;
    assert!(r["binary_accuracy"] >= r["multiclass_accuracy"]);
}

#[test]
fn exactly_two_mode_triples_are_rejected() {
    let triples = all_mode_triples();
    assert_eq!(triples.len(), 8);
    let rejected = triples
        .iter()
        .filter(|&&(ae, cluster, clf)| ScenarioConfig { ae, cluster, clf, portion: 0.5 }.validate().is_err())
        .count();
    assert_eq!(rejected, 2);
    for (i, &(ae, cluster, clf)) in CASES.iter().enumerate() {
        let sc = ScenarioConfig { ae, cluster, clf, portion: 0.5 };
        assert_eq!(sc.case_number(), Some(i + 1));
    }
    assert!(ScenarioConfig::case(0, 0.5).is_err());
    assert!(ScenarioConfig::case(7, 0.5).is_err());
    assert!(ScenarioConfig::case(3, 0.0).is_err());
}

#[test]
fn portions_are_nested_per_class() {
    let y: Vec<usize> = (0..200).map(|i| (i * 7) % 4).collect();
    let mut prev: HashSet<usize> = HashSet::new();
    for p in [0.1, 0.25, 0.5, 0.75, 1.0] {
        let rows = nested_portion(&y, p, 3).unwrap();
        let cur: HashSet<usize> = rows.iter().copied().collect();
        assert!(prev.is_subset(&cur), "portion {p}");
        for class in 0..4 {
            let n = rows.iter().filter(|&&i| y[i] == class).count();
            assert_eq!(n, (p * 50.0_f64).round() as usize, "class {class} at {p}");
        }
        prev = cur;
    }
}

#[test]
fn transfer_grid_runs_every_case_deterministically() {
    let spec = BlobSpec::three_class(40, 5);
    let src = spec.dataset().unwrap();
    let tgt = spec.shifted(30.0, 6).dataset().unwrap();
    let cfg = small_config(5);
    let source: SourceModels = fit_pipeline(&src, &cfg).unwrap().model.into();
    let mut runner = TransferRunner::new(&source, &tgt, &cfg).unwrap();
    let grid = runner.grid(&cfg.transfer.portions).unwrap();
    assert_eq!(grid.len(), 12);
    for c in &grid {
        assert!((0.0..=1.0).contains(&c.accuracy));
    }
    let mut again = TransferRunner::new(&source, &tgt, &cfg).unwrap();
    let one = again.run(&ScenarioConfig::case(4, 0.5).unwrap()).unwrap();
    let cell = grid.iter().find(|c| c.case == 4 && c.portion == 0.5).unwrap();
    assert_eq!(one.accuracy, cell.accuracy);
    assert_eq!(one.manifest.leakage_overlap, 0);
}

#[test]
fn transfer_rejects_mismatched_classes() {
    let src = BlobSpec::three_class(30, 5).dataset().unwrap();
    let mut other = BlobSpec::three_class(30, 6);
    other.prototypes.push(odxu_core::synth::Prototype::Random);
    let extra = other.prototypes.len() - 1;
    other.groups.push(odxu_core::synth::Group::pure(extra, 30, "Worm"));
    let cfg = small_config(5);
    let source: SourceModels = fit_pipeline(&src, &cfg).unwrap().model.into();
    let tgt = other.dataset().unwrap();
    let r = TransferRunner::new(&source, &tgt, &cfg).and_then(|mut r| r.run(&ScenarioConfig::case(4, 0.5)?));
    assert!(r.is_err());
}
