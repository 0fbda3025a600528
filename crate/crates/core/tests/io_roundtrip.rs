use acv::io::{
    parse_convergence_csv, read_config, read_convergence_csv, read_libsvm, write_convergence_csv, write_libsvm, Dataset,
    IoError, CSV_HEADER,
};
use acv::linops::DenseMatrix;
use acv::metrics::{ConvergenceRecord, RecordRow};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        (-300i32..300, -9.99f64..9.99).prop_map(|(e, m)| m * 10f64.powi(e)),
        Just(0.0),
    ]
}

fn rows() -> impl Strategy<Value = Vec<RecordRow>> {
    prop::collection::vec(
        (
            1usize..50,
            0.0f64..1e3,
            finite(),
            prop::option::of(finite()),
            prop::option::of(finite()),
            0.0f64..1e6,
        ),
        0..12,
    )
    .prop_map(|items| {
        let mut k = 0;
        items
            .into_iter()
            .map(|(step, wall_time_s, objective, gap_ref, pd_gap, iterate_norm)| {
                k += step;
                RecordRow {
                    k,
                    wall_time_s,
                    objective,
                    gap_ref,
                    pd_gap,
                    iterate_norm,
                }
            })
            .collect()
    })
}

#[test]
fn three_row_record_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/run.csv");
    let mut record = ConvergenceRecord::new();
    for (k, obj) in [(1, 1.0 / 3.0), (2, std::f64::consts::PI), (3, 1e-300)] {
        record.push(RecordRow {
            k,
            wall_time_s: 0.1 * k as f64,
            objective: obj,
            gap_ref: Some(obj / 7.0),
            pd_gap: if k == 2 { None } else { Some(-1e-17) },
            iterate_norm: 2f64.sqrt(),
        });
    }
    write_convergence_csv(&record, &path).unwrap();
    assert_eq!(read_convergence_csv(&path).unwrap(), record);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn csv_rejects_bad_input() {
    assert!(parse_convergence_csv("k,objective\n", "t").is_err());
    let dup = format!("{CSV_HEADER}\n2,0,1,,,1\n2,0,1,,,1\n");
    match parse_convergence_csv(&dup, "t") {
        Err(IoError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert!(parse_convergence_csv(&format!("{CSV_HEADER}\n1,0,abc,,,1\n"), "t").is_err());
}

#[test]
fn misspelled_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "alggorithm = acv-sc\n").unwrap();
    let err = read_config(&path).unwrap_err();
    assert!(err.to_string().contains("alggorithm"), "{err}");
    assert!(matches!(read_config(&dir.path().join("missing.cfg")), Err(IoError::Io { .. })));
}

#[test]
fn libsvm_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.libsvm");
    let data = Dataset {
        features: DenseMatrix::new(2, 3, vec![0.1, 0.0, -2.5e-7, 0.0, 0.0, 1e10]).unwrap(),
        labels: vec![1.0, -0.333],
        feature_names: None,
        source: path.display().to_string(),
    };
    write_libsvm(&data, &path).unwrap();
    let back = read_libsvm(&path).unwrap();
    assert_eq!(back.features, data.features);
    assert_eq!(back.labels, data.labels);
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(rows in rows()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut record = ConvergenceRecord::new();
        for r in rows {
            record.push(r);
        }
        write_convergence_csv(&record, &path).unwrap();
        prop_assert_eq!(read_convergence_csv(&path).unwrap(), record);
    }

    #[test]
    fn libsvm_round_trip_is_exact(
        n in 1usize..6,
        values in prop::collection::vec(prop_oneof![3 => Just(0.0), 2 => finite()], 30),
        labels in prop::collection::vec(finite(), 6),
    ) {
        let d = 5;
        let mut data = values[..n * d].to_vec();
        // the last column must carry a non-zero so the width survives
        data[d - 1] = 1.5;
        let dataset = Dataset {
            features: DenseMatrix::new(n, d, data).unwrap(),
            labels: labels[..n].to_vec(),
            feature_names: None,
            source: String::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.libsvm");
        write_libsvm(&dataset, &path).unwrap();
        let back = read_libsvm(&path).unwrap();
        prop_assert_eq!(back.features, dataset.features);
        prop_assert_eq!(back.labels, dataset.labels);
    }
}
