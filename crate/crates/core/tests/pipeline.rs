use liveness_core::classifiers::{train_classifier, Classifier, ClassifierKind, TrainOptions};
use liveness_core::eval::{repeated_holdout, HoldoutConfig};
use liveness_core::features::{
    extract_manifest, extract_synthesized, read_features_jsonl, write_features_jsonl, ExtractOptions, FeatureKind,
    FeatureLayout, RegionKind,
};
use liveness_core::sim::{synth_dataset, DatasetManifest, Modality, SynthConfig, Synthesizer, MANIFEST_FILE};
use liveness_core::Error;

fn config(modality: Modality) -> SynthConfig {
    SynthConfig {
        subjects: 4,
        live: 24,
        spoof_flat: 8,
        spoof_curved: 8,
        spoof_screen: 8,
        modality,
        ground_truth_maps: false,
        ..SynthConfig::default()
    }
}

#[test]
fn dataset_on_disk_matches_in_memory_synthesis() {
    let cfg = config(Modality::FlashPair);
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(&cfg, 31, dir.path()).unwrap();
    assert_eq!(manifest.records.len(), 48);
    let reread = DatasetManifest::read(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(reread.records, manifest.records);

    let opts = ExtractOptions::new(FeatureKind::I3d, RegionKind::Face);
    let (from_disk, skipped) = extract_manifest(&reread, &opts).unwrap();
    assert!(skipped.is_empty());
    let in_memory = extract_synthesized(&Synthesizer::new(cfg, 31).unwrap(), &opts).unwrap();
    assert_eq!(from_disk.len(), in_memory.len());
    for (a, b) in from_disk.iter().zip(&in_memory) {
        assert_eq!(a.sample_id, b.sample_id);
        assert_eq!(a.label, b.label);
        assert_eq!(a.subject_id, b.subject_id);
        let diff = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{}: {diff}", a.sample_id);
    }
}

#[test]
fn features_train_and_evaluate_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(&config(Modality::FlashPair), 32, dir.path().join("data")).unwrap();
    let (features, _) = extract_manifest(&manifest, &ExtractOptions::new(FeatureKind::I3d, RegionKind::Face)).unwrap();
    let path = dir.path().join("i3d.jsonl");
    write_features_jsonl(&path, &features).unwrap();
    let features = read_features_jsonl(&path).unwrap();

    let report = repeated_holdout(
        &features,
        &HoldoutConfig {
            repeats: 3,
            seed: 5,
            ..HoldoutConfig::default()
        },
    )
    .unwrap();
    assert_eq!(report.runs.len(), 3);
    assert!(report.aggregate.mean_acc > 0.9, "{:?}", report.aggregate);

    let y: Vec<i8> = features.iter().map(|f| f.liveness_label().unwrap()).collect();
    let model = train_classifier(ClassifierKind::Svm, &features, &y, &TrainOptions::default(), 1).unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let loaded = Classifier::load(&path).unwrap();
    for f in &features {
        assert_eq!(loaded.predict(f).unwrap(), model.predict(f).unwrap());
    }
}

#[test]
fn every_feature_kind_extracts_from_its_modality() {
    let dir = tempfile::tempdir().unwrap();
    let mut small = config(Modality::StereoPair);
    small.live = 3;
    small.spoof_flat = 3;
    small.spoof_curved = 0;
    small.spoof_screen = 0;
    let stereo = synth_dataset(&small, 33, dir.path().join("stereo")).unwrap();
    small.modality = Modality::FlashPair;
    let flash = synth_dataset(&small, 33, dir.path().join("flash")).unwrap();

    let cases = [
        (&flash, FeatureKind::I3d, FeatureLayout::I3dPatch { w: 28, h: 28 }),
        (&stereo, FeatureKind::Da3d, FeatureLayout::Da3dPatch { w: 28, h: 28 }),
        (&flash, FeatureKind::Lbp, FeatureLayout::Lbp531),
        (&flash, FeatureKind::Chan, FeatureLayout::Chan532),
        (&stereo, FeatureKind::Lbp, FeatureLayout::Lbp531),
    ];
    for (manifest, kind, layout) in cases {
        let (features, skipped) = extract_manifest(manifest, &ExtractOptions::new(kind, RegionKind::Face)).unwrap();
        assert!(skipped.is_empty(), "{kind}: {skipped:?}");
        assert_eq!(features.len(), 6);
        assert!(features.iter().all(|f| f.layout == layout), "{kind}");
    }
    for (manifest, kind) in [(&flash, FeatureKind::Da3d), (&stereo, FeatureKind::I3d), (&stereo, FeatureKind::Chan)] {
        let err = extract_manifest(manifest, &ExtractOptions::new(kind, RegionKind::Face)).unwrap_err();
        assert!(matches!(err, Error::Argument(_)), "{kind}: {err}");
    }
}
