use fcbm_core::data::{generate_synthetic, load_dataset, save_dataset, EmbeddingStorage, Preset, Split, SyntheticSpec};
use fcbm_core::evaluation::{evaluate, report_json, EvalConfig};
use fcbm_core::model::{decode_checkpoint, encode_checkpoint, HeadKind};
use fcbm_core::training::{linear_probe_accuracy, train, Regime, TrainConfig};

#[test]
fn embeddings_carry_more_label_information_than_concepts() {
    let mut spec = SyntheticSpec::preset(Preset::Default, 42);
    spec.n_test = 10_000;
    let ds = generate_synthetic(&spec).unwrap();
    let (tr, te) = (ds.split(Split::Train), ds.split(Split::Test));
    let on_z = linear_probe_accuracy(&tr.z, &tr.y, &te.z, &te.y, ds.n_labels()).unwrap();
    let on_c = linear_probe_accuracy(&tr.c, &tr.y, &te.c, &te.y, ds.n_labels()).unwrap();
    assert!(on_z > on_c, "probe on z {on_z} vs c {on_c}");
}

#[test]
fn inline_dataset_and_checkpoint_round_trips_reproduce_the_report() {
    let mut spec = SyntheticSpec::preset(Preset::Default, 3);
    spec.n_train = 300;
    spec.n_val = 80;
    spec.n_test = 120;
    let ds = generate_synthetic(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("d.json");
    save_dataset(&ds, &manifest, EmbeddingStorage::Inline).unwrap();
    let loaded = load_dataset(&manifest).unwrap();

    let cfg = TrainConfig {
        regime: Regime::Joint,
        head: HeadKind::Kan,
        epochs: 4,
        batch_size: 64,
        ..Default::default()
    };
    let (model, _) = train(&ds, &cfg).unwrap();
    let restored = decode_checkpoint(&encode_checkpoint(&model).unwrap()).unwrap();
    let a = report_json(&evaluate(&model, &ds, Split::Test, &EvalConfig::default()).unwrap());
    let b = report_json(&evaluate(&restored, &loaded, Split::Test, &EvalConfig::default()).unwrap());
    assert_eq!(a, b);
}
