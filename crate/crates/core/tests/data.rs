use incepse::data::{
    load_manifest, synth_dataset, write_manifest, ManifestOptions, SynthSpec, TaskKind, TaskSpec, NUM_FOLDS,
};
use incepse::signal::{apply_stats, filter_dataset, fit_stats, read_stats, standardize, write_stats, BandpassSpec};
use proptest::prelude::*;

fn small(n: usize, seed: u64) -> incepse::data::Dataset {
    let mut spec = SynthSpec::new(n, vec![0.6, 0.3, 0.1]);
    spec.seconds = 0.5;
    spec.leads = 3;
    spec.extra_label_prob = 0.3;
    synth_dataset(&spec, seed).unwrap()
}

#[test]
fn manifest_round_trip_is_exact() {
    let ds = small(25, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(&ds, dir.path()).unwrap();
    let opts = ManifestOptions { leads: 3, fs_hz: 100.0 };
    let back = load_manifest(&path, &ds.task, &opts).unwrap();
    assert_eq!(back.records, ds.records);
    assert_eq!(back.samples, ds.samples);
    assert_eq!(back.unknown_statements, 0);
}

#[test]
fn manifest_maps_through_ptbxl_hierarchy() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small(3, 0);
    let mut text = String::from("record_id,fold,signal_file,labels\n");
    let rows = [("a", 1, "IMI;AFIB"), ("b", 9, "NORM"), ("c", 10, "")];
    for ((id, fold, labels), r) in rows.iter().zip(&ds.records) {
        let rel = format!("{id}.bin");
        incepse::data::write_signal_file(&dir.path().join(&rel), &r.signal).unwrap();
        text.push_str(&format!("{id},{fold},{rel},{labels}\n"));
    }
    let path = dir.path().join("m.csv");
    std::fs::write(&path, text).unwrap();
    let task = TaskSpec::ptbxl(TaskKind::Super).unwrap();
    let loaded = load_manifest(&path, &task, &ManifestOptions { leads: 3, fs_hz: 100.0 }).unwrap();
    assert_eq!(loaded.len(), 3);
    let mi = task.class_names.iter().position(|c| c == "MI").unwrap();
    assert_eq!(loaded.records[0].labels.iter().sum::<u8>(), 1);
    assert_eq!(loaded.records[0].labels[mi], 1);
    assert_eq!(loaded.unknown_statements, 1);
    // records without labels stay in the data set
    assert!(loaded.records[2].labels.iter().all(|&l| l == 0));
}

#[test]
fn malformed_manifests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    std::fs::write(&path, "id,fold\n").unwrap();
    let task = TaskSpec::ptbxl(TaskKind::Super).unwrap();
    assert!(load_manifest(&path, &task, &ManifestOptions::default()).is_err());
    std::fs::write(&path, "record_id,fold,signal_file,labels\na,11,missing.bin,NORM\n").unwrap();
    assert!(load_manifest(&path, &task, &ManifestOptions::default()).is_err());
    std::fs::write(&path, "record_id,fold,signal_file,labels\na,1,missing.bin,NORM\n").unwrap();
    assert!(load_manifest(&path, &task, &ManifestOptions::default()).is_err());
}

#[test]
fn standardization_uses_training_folds_only() {
    let mut ds = small(60, 2);
    // poison the held-out folds: their values must not move the statistics
    for r in ds.records.iter_mut().filter(|r| r.fold >= 9) {
        r.signal.iter_mut().for_each(|v| *v = 1e3);
    }
    let stats = fit_stats(&ds.folds(&[1, 2, 3, 4, 5, 6, 7, 8])).unwrap();
    for lead in 0..3 {
        let vals: Vec<f64> = ds
            .records
            .iter()
            .filter(|r| r.fold <= 8)
            .flat_map(|r| ds.lead(r, lead).iter().map(|&v| v as f64))
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((stats.mean[lead] - mean).abs() < 1e-9);
        assert!((stats.std[lead] - sd).abs() < 1e-9);
    }
    let z = standardize(&ds).unwrap();
    assert_eq!(z.stats.as_ref(), Some(&stats));
    let again = apply_stats(&ds, &stats).unwrap();
    assert_eq!(again.records, z.records);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("stats.txt");
    write_stats(&stats, &p).unwrap();
    assert_eq!(read_stats(&p).unwrap(), stats);
}

#[test]
fn filtering_a_dataset_checks_sampling_rate() {
    let ds = small(5, 1);
    assert!(filter_dataset(&ds, &BandpassSpec::default()).is_ok());
    let spec = BandpassSpec { fs_hz: 500.0, ..Default::default() };
    assert!(filter_dataset(&ds, &spec).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn folds_partition_the_records(n in 10usize..200, seed in 0u64..1000) {
        let mut spec = SynthSpec::new(n, vec![0.5, 0.5]);
        spec.seconds = 0.05;
        spec.leads = 1;
        let ds = synth_dataset(&spec, seed).unwrap();
        let s = ds.split_folds().unwrap();
        let mut all: Vec<usize> = s.train.indices.iter().chain(&s.val.indices).chain(&s.test.indices).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(s.val.records().all(|r| r.fold == 9));
        prop_assert!(s.test.records().all(|r| r.fold == NUM_FOLDS));
        // shuffled order is a permutation and depends on the epoch
        let o1 = s.train.order(true, seed, 0);
        let mut sorted = o1.clone();
        sorted.sort();
        prop_assert_eq!(sorted, s.train.indices.clone());
        prop_assert_eq!(o1, s.train.order(true, seed, 0));
    }
}
