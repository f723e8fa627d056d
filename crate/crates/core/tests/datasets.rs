use proptest::prelude::*;
use quadenhance_core::data::{load_csv, write_csv, Dataset, LabelColumn, Labels};
use quadenhance_core::Tensor;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn csv_round_trips_exactly(
        rows in 1usize..20,
        cols in 1usize..5,
        values in prop::collection::vec(-1e6f64..1e6, 100),
        classes in 2usize..5,
    ) {
        let features = Tensor::from_fn(&[rows, cols], |i| values[i % values.len()]);
        let indices: Vec<usize> = (0..rows).map(|i| i % classes).collect();
        let ds = Dataset::new(
            features.clone(),
            Labels::Classes { indices: indices.clone(), num_classes: classes },
            "prop",
        ).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_csv(&ds, &path).unwrap();
        let back = load_csv::<f64>(&path, &LabelColumn::Last, true).unwrap();
        prop_assert!(back.features.bitwise_eq(&features));
        match back.labels {
            Labels::Classes { indices: got, .. } => prop_assert_eq!(got, indices),
            Labels::Targets(_) => prop_assert!(false, "expected class labels"),
        }
    }
}
