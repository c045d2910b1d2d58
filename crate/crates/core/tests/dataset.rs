use calibdr::dataset::{build_basis, load_csv, BasisExpansion, CsvSchema, ObservedData};
use calibdr::Error;
use ndarray::Array2;
use proptest::prelude::*;
use tempfile::NamedTempFile;

fn csv(text: &str) -> NamedTempFile {
    let file = NamedTempFile::new().unwrap();
    std::fs::write(file.path(), text).unwrap();
    file
}

#[test]
fn explicit_columns_and_empty_outcomes() {
    let f = csv("id,treat,out,a,b,c\n1,1,2.5,0.1,5,9\n2,0,,0.2,6,8\n3,1,NA,0.3,7,7\n4,0,1.0,0.4,8,6\n");
    let data = load_csv(f.path(), &CsvSchema::new("out", "treat", "c,a")).unwrap();
    assert_eq!(data.covariate_names(), ["c", "a"]);
    assert_eq!(data.treatment(), [1, 0, 1, 0]);
    assert_eq!(data.outcome(), [Some(2.5), None, None, Some(1.0)]);
    assert_eq!(data.covariates()[[2, 0]], 7.0);
    assert!(matches!(data.require_outcome(2), Err(Error::MissingOutcome { row: 3 })));
    assert!(matches!(
        load_csv(f.path(), &CsvSchema::new("out", "treat", "a,zz")),
        Err(Error::MissingColumn(c)) if c == "zz"
    ));
}

#[test]
fn a_single_arm_is_rejected() {
    let f = csv("t,y,x1\n1,1,1\n1,2,2\n");
    assert!(matches!(load_csv(f.path(), &CsvSchema::new("y", "t", "x*")), Err(Error::NoUntreated)));
}

#[test]
fn pairwise_expansion_names_and_values() {
    let x = Array2::from_shape_vec((4, 3), vec![1.0, 2.0, 0.0, 2.0, 0.0, 1.0, 3.0, 1.0, 0.0, 4.0, 2.0, 0.0]).unwrap();
    let data = ObservedData::new(vec![1, 0, 1, 0], vec![None; 4], x, None).unwrap();
    let basis = build_basis(&data, false, BasisExpansion::Pairwise { min_nonzero: Some(2) }).unwrap();
    // x1:x3 has one nonzero entry and x2:x3 none.
    assert_eq!(basis.names(), ["(intercept)", "x1", "x2", "x3", "x1:x2"]);
    assert_eq!(basis.column(4), [2.0, 0.0, 3.0, 8.0]);
    let all = build_basis(&data, false, BasisExpansion::Pairwise { min_nonzero: Some(1) }).unwrap();
    assert_eq!(all.names()[5], "x1:x3");
    assert_eq!(all.p(), 5);
}

proptest! {
    #[test]
    fn destandardized_coefficients_reproduce_the_linear_predictor(
        values in prop::collection::vec(-50.0f64..50.0, 30),
        coef in prop::collection::vec(-3.0f64..3.0, 4),
    ) {
        let x = Array2::from_shape_vec((10, 3), values).unwrap();
        let t = (0..10).map(|i| (i % 2) as u8).collect();
        let data = ObservedData::new(t, vec![None; 10], x.clone(), None).unwrap();
        let Ok(basis) = build_basis(&data, true, BasisExpansion::Raw) else { return Ok(()) };
        let raw = basis.raw_coefficients(&coef).unwrap();
        let eta = basis.linear_predictor(&coef);
        for i in 0..10 {
            let direct = raw[0] + (0..3).map(|j| raw[j + 1] * x[[i, j]]).sum::<f64>();
            prop_assert!((direct - eta[i]).abs() <= 1e-9 * (1.0 + eta[i].abs()));
        }
        let record = basis.standardization().unwrap();
        let back = record.standardize(&raw).unwrap();
        for (a, b) in back.iter().zip(&coef) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
