mod common;

use std::sync::Arc;

use calibdr::dataset::{build_basis, BasisExpansion, ObservedData};
use calibdr::losses::{self, evaluate, Arm, Link, LossKind};
use common::{all_kinds, instance, random_coef, reference_loss, rng};
use ndarray::Array2;
use proptest::prelude::*;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn values_match_row_by_row_reference() {
    let inst = instance(150, 6, 1);
    let mut r = rng(2);
    for kind in all_kinds(inst.basis.dim(), 3) {
        let data = inst.data_for(&kind);
        for _ in 0..5 {
            let c = random_coef(&mut r, inst.basis.dim(), 0.3);
            let got = evaluate(&kind, &c, &inst.basis, data).unwrap().value;
            let want = reference_loss(&kind, &inst.basis, data, &c);
            assert!(rel_err(got, want) < 1e-12, "{}: {got} vs {want}", kind.label());
        }
    }
}

#[test]
fn gradients_match_finite_differences_of_reference() {
    let inst = instance(200, 10, 4);
    let mut r = rng(5);
    let h = 1e-5;
    for kind in all_kinds(inst.basis.dim(), 6) {
        let data = inst.data_for(&kind);
        for _ in 0..20 {
            let c = random_coef(&mut r, inst.basis.dim(), 0.2);
            let g = evaluate(&kind, &c, &inst.basis, data).unwrap().gradient;
            let mut probe = c.clone();
            let mut worst: f64 = 0.0;
            let mut scale: f64 = 1e-8;
            for j in 0..c.len() {
                probe[j] = c[j] + h;
                let up = reference_loss(&kind, &inst.basis, data, &probe);
                probe[j] = c[j] - h;
                let down = reference_loss(&kind, &inst.basis, data, &probe);
                probe[j] = c[j];
                let fd = (up - down) / (2.0 * h);
                worst = worst.max((g[j] - fd).abs());
                scale = scale.max(fd.abs());
            }
            assert!(worst / scale <= 1e-5, "{}: relative error {}", kind.label(), worst / scale);
        }
    }
}

#[test]
fn every_loss_is_convex_along_segments() {
    let inst = instance(120, 5, 7);
    let mut r = rng(8);
    for kind in all_kinds(inst.basis.dim(), 9) {
        let data = inst.data_for(&kind);
        for _ in 0..20 {
            let a = random_coef(&mut r, inst.basis.dim(), 0.5);
            let b = random_coef(&mut r, inst.basis.dim(), 0.5);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let v = |c: &[f64]| evaluate(&kind, c, &inst.basis, data).unwrap().value;
            assert!(v(&mid) <= 0.5 * (v(&a) + v(&b)) + 1e-10, "{}", kind.label());
        }
    }
}

#[test]
fn curvature_weights_give_the_directional_second_derivative() {
    let inst = instance(150, 6, 10);
    let mut r = rng(11);
    let h = 1e-5;
    let f = inst.basis.matrix();
    for kind in all_kinds(inst.basis.dim(), 12) {
        let data = inst.data_for(&kind);
        for _ in 0..5 {
            let c = random_coef(&mut r, inst.basis.dim(), 0.2);
            let u = random_coef(&mut r, inst.basis.dim(), 1.0);
            let eval = evaluate(&kind, &c, &inst.basis, data).unwrap();
            assert!(eval.curvature_weights.iter().all(|w| w.is_finite() && *w >= 0.0));
            let quad: f64 = (0..data.n())
                .map(|i| {
                    let fu: f64 = (0..u.len()).map(|j| f[[i, j]] * u[j]).sum();
                    eval.curvature_weights[i] * fu * fu
                })
                .sum::<f64>()
                / data.n() as f64;
            let shift = |s: f64| -> Vec<f64> { c.iter().zip(&u).map(|(a, b)| a + s * b).collect() };
            let gu = |s: f64| -> f64 {
                let g = evaluate(&kind, &shift(s), &inst.basis, data).unwrap().gradient;
                g.iter().zip(&u).map(|(a, b)| a * b).sum()
            };
            let fd = (gu(h) - gu(-h)) / (2.0 * h);
            assert!((fd - quad).abs() <= 1e-4 * quad.abs().max(1e-8), "{}: {fd} vs {quad}", kind.label());
        }
    }
}

fn balanced_data() -> ObservedData {
    let x = Array2::from_shape_vec((4, 2), vec![1.0, 0.5, 2.0, -1.0, 3.0, 0.0, 4.0, 2.0]).unwrap();
    let t = vec![1, 0, 1, 0];
    let y = vec![Some(1.0), Some(0.0), Some(0.0), Some(1.0)];
    ObservedData::new(t, y, x, None).unwrap()
}

#[test]
fn closed_form_values_at_zero() {
    let data = balanced_data();
    let basis = build_basis(&data, true, BasisExpansion::Raw).unwrap();
    let zero = vec![0.0; basis.dim()];

    let ml = losses::eval_ml_ps(&zero, &basis, &data).unwrap();
    assert!((ml.value - 2f64.ln()).abs() < 1e-15);
    assert!(ml.gradient[0].abs() < 1e-15);

    let cal = losses::eval_cal_ps(&zero, &basis, &data, Arm::Treated).unwrap();
    assert!((cal.value - 0.5).abs() < 1e-15);

    let or = losses::eval_ml_or(&zero, &basis, &data, Link::Logistic, Arm::Treated).unwrap();
    assert!((or.value - 0.5 * 2f64.ln()).abs() < 1e-15);
}

#[test]
fn weighted_losses_reduce_to_unweighted_ones() {
    let inst = instance(100, 4, 13);
    let mut r = rng(14);
    let dim = inst.basis.dim();
    let zero: Arc<[f64]> = vec![0.0; dim].into();
    for _ in 0..5 {
        let c = random_coef(&mut r, dim, 0.3);
        for link in [Link::Identity, Link::Logistic] {
            let data = inst.data_for(&LossKind::MlOr { link, arm: Arm::Treated });
            let wl =
                evaluate(&LossKind::WlOr { link, arm: Arm::Treated, ps_coef: zero.clone() }, &c, &inst.basis, data)
                    .unwrap();
            let ml = evaluate(&LossKind::MlOr { link, arm: Arm::Treated }, &c, &inst.basis, data).unwrap();
            assert_eq!(wl.value, ml.value);
            assert_eq!(wl.gradient, ml.gradient);
        }

        let cal = evaluate(&LossKind::CalPs { arm: Arm::Treated }, &c, &inst.basis, &inst.continuous).unwrap();
        let random_or: Arc<[f64]> = random_coef(&mut r, dim, 0.3).into();
        let wcal_id =
            evaluate(&LossKind::WcalPs { link: Link::Identity, or_coef: random_or }, &c, &inst.basis, &inst.continuous)
                .unwrap();
        assert_eq!(wcal_id.value, cal.value);
        assert_eq!(wcal_id.gradient, cal.gradient);

        let wcal_lg = evaluate(
            &LossKind::WcalPs { link: Link::Logistic, or_coef: zero.clone() },
            &c,
            &inst.basis,
            &inst.continuous,
        )
        .unwrap();
        assert!((wcal_lg.value - 0.25 * cal.value).abs() < 1e-15);
    }
}

#[test]
fn missing_outcome_on_a_contributing_row_is_an_error() {
    let x = Array2::from_shape_vec((3, 1), vec![0.0, 1.0, 2.0]).unwrap();
    let data = ObservedData::new(vec![1, 0, 1], vec![Some(1.0), None, None], x, None).unwrap();
    let basis = build_basis(&data, true, BasisExpansion::Raw).unwrap();
    let c = vec![0.0; 2];
    assert!(losses::eval_ml_or(&c, &basis, &data, Link::Identity, Arm::Treated).is_err());
    assert!(losses::eval_ml_or(&c, &basis, &data, Link::Identity, Arm::Untreated).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn untreated_calibration_is_the_flipped_treated_loss(seed in 0u64..1000, scale in 0.01f64..1.0) {
        let inst = instance(40, 3, seed);
        let mut r = rng(seed + 1);
        let gamma = random_coef(&mut r, inst.basis.dim(), scale);
        let neg: Vec<f64> = gamma.iter().map(|g| -g).collect();
        let flipped = inst.continuous.flipped();
        let u = losses::eval_cal_ps(&gamma, &inst.basis, &inst.continuous, Arm::Untreated).unwrap();
        let t = losses::eval_cal_ps(&neg, &inst.basis, &flipped, Arm::Treated).unwrap();
        prop_assert_eq!(u.value, t.value);
        prop_assert_eq!(&u.curvature_weights, &t.curvature_weights);
        let negated: Vec<f64> = t.gradient.iter().map(|g| -g).collect();
        prop_assert_eq!(u.gradient, negated);
    }

    #[test]
    fn losses_are_midpoint_convex(seed in 0u64..1000) {
        let inst = instance(30, 2, seed);
        let mut r = rng(seed + 7);
        for kind in all_kinds(inst.basis.dim(), seed) {
            let data = inst.data_for(&kind);
            let a = random_coef(&mut r, inst.basis.dim(), 1.0);
            let b = random_coef(&mut r, inst.basis.dim(), 1.0);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let v = |c: &[f64]| evaluate(&kind, c, &inst.basis, data).unwrap().value;
            prop_assert!(v(&mid) <= 0.5 * (v(&a) + v(&b)) + 1e-10);
        }
    }
}
