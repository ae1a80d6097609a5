use drkm::io::{load_csv, load_result, read_csv, save_csv, save_result, SaveOptions, Standardization};
use drkm::model::{Centroids, DataSet, FitResult, SoftAssignment};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn result_round_trip_is_bit_exact(values in prop::collection::vec(finite(), 6), gamma in 1.0001f64..1e8) {
        let centroids = Centroids::from_flat(3, 2, values.clone()).unwrap();
        let data = DataSet::from_flat(3, 2, values).unwrap();
        let fit = FitResult {
            centroids: centroids.clone(),
            assignment: SoftAssignment::from_columns(&[vec![0.1, 0.2, 0.7], vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5]]).unwrap(),
            gamma_final: gamma,
            objective_trace: vec![3.0, 2.0 + 1.0 / 3.0],
            gamma_trace: vec![gamma, gamma],
            worst_case_points: data.clone(),
            iterations: 1,
            converged: true,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.json");
        let opts = SaveOptions { soft_assignment: true, worst_case_points: true, ..SaveOptions::default() };
        save_result(&fit, &path, &opts).unwrap();
        let doc = load_result(&path).unwrap();
        let back = doc.centroids().unwrap();
        prop_assert!(back.as_flat().iter().zip(centroids.as_flat()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(doc.gamma_final, Some(gamma));
        prop_assert_eq!(doc.objective_trace, fit.objective_trace);
        prop_assert_eq!(doc.worst_case_points.unwrap(), data.to_rows());
        prop_assert_eq!(doc.hard_labels, vec![2, 0, 1]);
    }

    #[test]
    fn csv_round_trip_is_bit_exact(values in prop::collection::vec(finite(), 12)) {
        let data = DataSet::from_flat(4, 3, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_csv(&path, Some(&["a", "b", "c"]), data.to_rows()).unwrap();
        let back = load_csv(&path, true).unwrap();
        prop_assert!(back.as_flat().iter().zip(data.as_flat()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn standardized_columns_are_centered(values in prop::collection::vec(-1e3f64..1e3, 20)) {
        let data = DataSet::from_flat(10, 2, values).unwrap();
        let t = Standardization::fit(&data);
        let z = t.apply(&data).unwrap();
        for j in 0..2 {
            let mean: f64 = z.points().map(|p| p[j]).sum::<f64>() / 10.0;
            prop_assert!(mean.abs() <= 1e-9);
        }
    }
}

#[test]
fn diagnostics() {
    let err = read_csv("1,2\n3,NaN\n".as_bytes(), false).unwrap_err().to_string();
    assert!(err.contains("row 2, column 2"), "{err}");
    let err = read_csv("x,y\n1,2\n3,4,5\n".as_bytes(), true).unwrap_err().to_string();
    assert!(err.contains("row 2"), "{err}");
    assert!(read_csv("".as_bytes(), false).is_err());
    assert!(load_csv("/nonexistent/file.csv", false).is_err());
}
