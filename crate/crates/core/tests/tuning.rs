mod common;

use calibdr::losses::{Arm, Link, LossKind};
use calibdr::solver::{fit_penalized, SolverOptions};
use calibdr::tuning::{cross_validate, lambda_max, stratified_folds, tune_and_fit, GridSpec, LambdaChoice};
use calibdr::Error;
use common::{all_kinds, instance, reference_loss};

#[test]
fn folds_are_stratified_and_balanced() {
    let inst = instance(203, 3, 1);
    let t = inst.continuous.treatment();
    for k in [2, 5, 7] {
        let folds = stratified_folds(t, k, 9).unwrap();
        let mut sizes = vec![0usize; k];
        let mut treated = vec![0usize; k];
        for (i, &f) in folds.iter().enumerate() {
            sizes[f] += 1;
            treated[f] += usize::from(t[i]);
        }
        let spread = |v: &[usize]| v.iter().max().unwrap() - v.iter().min().unwrap();
        assert!(spread(&sizes) <= 1, "{sizes:?}");
        assert!(spread(&treated) <= 1, "{treated:?}");
        assert!(treated.iter().zip(&sizes).all(|(&a, &s)| a >= 1 && a < s));
    }
}

#[test]
fn fold_errors() {
    assert!(stratified_folds(&[1, 0, 1, 0], 1, 0).is_err());
    assert!(stratified_folds(&[1, 0, 1], 2, 0).is_err());
    let lopsided = [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
    assert!(matches!(stratified_folds(&lopsided, 5, 0), Err(Error::DegenerateFold { .. })));
}

#[test]
fn cross_validation_is_reproducible() {
    let inst = instance(150, 10, 2);
    let kind = LossKind::CalPs { arm: Arm::Treated };
    let opts = SolverOptions::default();
    let a = cross_validate(&kind, &inst.basis, &inst.continuous, GridSpec::pow2(6), 5, 11, &opts).unwrap();
    let b = cross_validate(&kind, &inst.basis, &inst.continuous, GridSpec::pow2(6), 5, 11, &opts).unwrap();
    assert_eq!(a.fold_assignment, b.fold_assignment);
    assert_eq!(a.cv_values, b.cv_values);
    assert_eq!(a.selected_lambda, b.selected_lambda);
    let c = cross_validate(&kind, &inst.basis, &inst.continuous, GridSpec::pow2(6), 5, 12, &opts).unwrap();
    assert_ne!(a.fold_assignment, c.fold_assignment);
}

#[test]
fn cv_values_match_independent_recomputation() {
    let inst = instance(160, 6, 3);
    let opts = SolverOptions::default();
    for kind in all_kinds(inst.basis.dim(), 4) {
        let data = inst.data_for(&kind);
        let cv = cross_validate(&kind, &inst.basis, data, GridSpec::pow2(4), 4, 5, &opts).unwrap();
        assert_eq!(cv.grid.len(), 4);
        assert_eq!(cv.grid[0], lambda_max(&kind, &inst.basis, data).unwrap());
        for (g, &lambda) in cv.grid.iter().enumerate() {
            let Some(value) = cv.cv_values[g] else { continue };
            let mut total = 0.0;
            for fold in 0..4 {
                let (test, train): (Vec<usize>, Vec<usize>) =
                    (0..data.n()).partition(|&i| cv.fold_assignment[i] == fold);
                let train_data = data.select_rows(&train).unwrap();
                let fit =
                    fit_penalized(&kind, &inst.basis.select_rows(&train), &train_data, lambda, None, &opts).unwrap();
                assert!(fit.converged);
                let test_data = data.select_rows(&test).unwrap();
                total += reference_loss(&kind, &inst.basis.select_rows(&test), &test_data, &fit.coefficients);
            }
            assert!((value - total / 4.0).abs() < 1e-6, "{} at grid {g}", kind.label());
        }
        let best = cv.cv_values.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(cv.cv_values[cv.selected_index], Some(best));
        let first = cv.cv_values.iter().position(|v| *v == Some(best)).unwrap();
        assert_eq!(cv.selected_index, first, "ties go to the larger lambda");
    }
}

#[test]
fn cv_at_lambda_max_uses_intercept_only_fits_when_slopes_vanish() {
    let inst = instance(200, 4, 6);
    let data = &inst.continuous;
    let kind = LossKind::MlOr { link: Link::Identity, arm: Arm::Treated };
    let opts = SolverOptions::default();
    let cv = cross_validate(&kind, &inst.basis, data, GridSpec::pow2(3), 5, 8, &opts).unwrap();
    let mut total = 0.0;
    for fold in 0..5 {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..data.n()).partition(|&i| cv.fold_assignment[i] == fold);
        let train_data = data.select_rows(&train).unwrap();
        let fit = fit_penalized(&kind, &inst.basis.select_rows(&train), &train_data, cv.grid[0], None, &opts).unwrap();
        if fit.active_set.is_empty() {
            let ys: Vec<f64> =
                train.iter().filter(|&&i| data.treatment()[i] == 1).map(|&i| data.outcome()[i].unwrap()).collect();
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            assert!((fit.coefficients[0] - mean).abs() < 1e-8);
        }
        let test_data = data.select_rows(&test).unwrap();
        total += reference_loss(&kind, &inst.basis.select_rows(&test), &test_data, &fit.coefficients);
    }
    assert!((cv.cv_values[0].unwrap() - total / 5.0).abs() < 1e-8);
}

#[test]
fn held_out_loss_ignores_training_outcomes() {
    let inst = instance(120, 4, 9);
    let data = &inst.continuous;
    let folds = stratified_folds(data.treatment(), 5, 1).unwrap();
    let test: Vec<usize> = (0..data.n()).filter(|&i| folds[i] == 0).collect();
    let mut perturbed_y: Vec<Option<f64>> = data.outcome().to_vec();
    for (i, y) in perturbed_y.iter_mut().enumerate() {
        if folds[i] != 0 {
            *y = y.map(|v| v * 3.0 + 100.0);
        }
    }
    let perturbed =
        calibdr::dataset::ObservedData::new(data.treatment().to_vec(), perturbed_y, data.covariates().clone(), None)
            .unwrap();
    let kind = LossKind::MlOr { link: Link::Identity, arm: Arm::Treated };
    let theta = vec![0.3, -0.2, 0.1, 0.0, 0.5];
    let test_basis = inst.basis.select_rows(&test);
    let a = reference_loss(&kind, &test_basis, &data.select_rows(&test).unwrap(), &theta);
    let b = reference_loss(&kind, &test_basis, &perturbed.select_rows(&test).unwrap(), &theta);
    assert_eq!(a, b);
}

#[test]
fn single_point_grid_is_selected() {
    let inst = instance(100, 5, 10);
    let kind = LossKind::MlPs;
    let cv = cross_validate(&kind, &inst.basis, &inst.continuous, GridSpec::pow2(1), 5, 0, &SolverOptions::default())
        .unwrap();
    assert_eq!(cv.selected_index, 0);
    assert_eq!(cv.selected_lambda, cv.lambda_max);
}

#[test]
fn tune_and_fit_refits_at_the_selected_lambda() {
    let inst = instance(150, 8, 11);
    let kind = LossKind::CalPs { arm: Arm::Treated };
    let opts = SolverOptions::default();
    let choice = LambdaChoice::Auto { grid: GridSpec::pow2(5), folds: 5, seed: 3 };
    let tuned = tune_and_fit(&kind, &inst.basis, &inst.continuous, choice, &opts).unwrap();
    let cv = tuned.cv.as_ref().unwrap();
    assert_eq!(tuned.fit.lambda, cv.selected_lambda);
    let cold = fit_penalized(&kind, &inst.basis, &inst.continuous, cv.selected_lambda, None, &opts).unwrap();
    assert!((tuned.fit.objective - cold.objective).abs() < 1e-8);

    let fixed = tune_and_fit(&kind, &inst.basis, &inst.continuous, LambdaChoice::Fixed(0.05), &opts).unwrap();
    assert!(fixed.cv.is_none());
    assert_eq!(fixed.fit.lambda, 0.05);
}

#[test]
fn default_grids_follow_the_halving_schedules() {
    let g = GridSpec::pow2(11).lambdas(3.0);
    for (j, l) in g.iter().enumerate() {
        assert!((l - 3.0 / 2f64.powi(j as i32)).abs() < 1e-15);
    }
    let g = GridSpec::pow2q(25).lambdas(3.0);
    assert_eq!(g.len(), 25);
    for (j, l) in g.iter().enumerate() {
        assert!((l - 3.0 / 2f64.powf(j as f64 / 4.0)).abs() < 1e-14);
    }
}
