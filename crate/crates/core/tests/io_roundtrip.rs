use std::fs;

use mlqc::data::{
    load_dataset, load_probs, load_probs_aligned, load_scores, read_jsonl, save_scores, write_jsonl,
    write_labels_csv, write_probs_csv, DatasetFormat,
};
use mlqc::data::{default_ids, validate, MultiLabelDataset};
use mlqc::matrix::Matrix;
use mlqc::Error;
use proptest::prelude::*;

fn dataset_and_probs() -> impl Strategy<Value = (Matrix<u8>, Matrix<f64>)> {
    (1usize..30, 1usize..8).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(0u8..2, n * k).prop_map(move |v| Matrix::from_vec(n, k, v).unwrap()),
            prop::collection::vec(
                prop_oneof![0.0..=1.0f64, Just(0.0), Just(1.0), Just(f64::MIN_POSITIVE), Just(1.0 - f64::EPSILON)],
                n * k,
            )
            .prop_map(move |v| Matrix::from_vec(n, k, v).unwrap()),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_bit_exact((labels, probs) in dataset_and_probs()) {
        let dir = tempfile::tempdir().unwrap();
        let ids = default_ids(labels.n_rows());
        let lp = dir.path().join("labels.csv");
        let pp = dir.path().join("probs.csv");
        write_labels_csv(&lp, &ids, &labels).unwrap();
        write_probs_csv(&pp, &ids, &probs).unwrap();
        let ds = load_dataset(&lp, DatasetFormat::Csv).unwrap();
        prop_assert_eq!(&ds.given_labels, &labels);
        let back = load_probs_aligned(&pp, &ds.example_ids).unwrap();
        let same = back.as_slice().iter().zip(probs.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn jsonl_round_trip((labels, probs) in dataset_and_probs()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let ds = MultiLabelDataset::with_default_ids(labels.clone());
        write_jsonl(&path, &ds, Some(&probs)).unwrap();
        let (back, back_probs) = read_jsonl(&path).unwrap();
        prop_assert_eq!(back.given_labels, labels);
        prop_assert_eq!(back_probs.unwrap(), probs);
    }

    #[test]
    fn any_single_corruption_is_caught((labels, probs) in dataset_and_probs(), pos in any::<prop::sample::Index>(), bad in prop_oneof![Just(1.5), Just(-0.01), Just(f64::NAN), Just(f64::INFINITY)]) {
        let ds = MultiLabelDataset::with_default_ids(labels.clone());
        prop_assert!(validate(&ds, &probs).is_ok());
        let i = pos.index(probs.as_slice().len());
        let (r, c) = (i / probs.n_cols(), i % probs.n_cols());
        let mut p2 = probs.clone();
        p2.set(r, c, bad);
        prop_assert!(!validate(&ds, &p2).is_ok());
        let mut l2 = labels.clone();
        l2.set(r, c, 2);
        prop_assert!(!validate(&MultiLabelDataset::with_default_ids(l2), &probs).is_ok());
    }
}

#[test]
fn minimal_csv_parses() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("l.csv");
    fs::write(&p, "id,label_0,label_1\na,1,0\n").unwrap();
    let ds = load_dataset(&p, DatasetFormat::Csv).unwrap();
    assert_eq!(ds.example_ids, vec!["a"]);
    assert_eq!(ds.given_labels.row(0), &[1, 0]);
}

#[test]
fn malformed_files_report_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("l.csv");

    fs::write(&p, "id,label_0,label_1\na,1,0\nb,0,x\n").unwrap();
    match load_dataset(&p, DatasetFormat::Csv) {
        Err(Error::Parse { line, column, .. }) => assert_eq!((line, column.as_str()), (3, "label_1")),
        other => panic!("{other:?}"),
    }

    fs::write(&p, "id,label_0\na,1\na,0\n").unwrap();
    assert!(matches!(load_dataset(&p, DatasetFormat::Csv), Err(Error::DuplicateId { .. })));

    fs::write(&p, "id,label_0,label_1\na,1\n").unwrap();
    assert!(load_dataset(&p, DatasetFormat::Csv).is_err());

    fs::write(&p, "name,label_0\na,1\n").unwrap();
    assert!(matches!(load_dataset(&p, DatasetFormat::Csv), Err(Error::Header { .. })));
}

#[test]
fn misaligned_probability_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.csv");
    fs::write(&p, "id,prob_0\na,0.5\nb,0.25\n").unwrap();
    assert_eq!(load_probs(&p).unwrap().0, vec!["a", "b"]);
    let ids = vec!["b".to_string(), "a".to_string()];
    assert!(matches!(load_probs_aligned(&p, &ids), Err(Error::IdMismatch { .. })));
}

#[test]
fn scores_round_trip_with_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    let ids = default_ids(3);
    let scores = [0.1, -18.420680743952367, 1.0 / 3.0];
    save_scores(&p, &ids, &scores, Some(&[true, false, true])).unwrap();
    let t = load_scores(&p).unwrap();
    assert_eq!(t.ids, ids);
    assert_eq!(t.scores, scores);
    assert_eq!(t.flags, Some(vec![true, false, true]));
    save_scores(&p, &ids, &scores, None).unwrap();
    assert_eq!(load_scores(&p).unwrap().flags, None);
}
