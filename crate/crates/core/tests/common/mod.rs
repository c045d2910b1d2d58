#![allow(dead_code)]

use std::sync::Arc;

use calibdr::dataset::{build_basis, BasisExpansion, ObservedData, RegressorBasis};
use calibdr::losses::{Arm, Link, LossKind};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn expit(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// A random data set with both a continuous and a binary outcome observed
/// on every row, and the standardized raw basis.
pub struct Instance {
    pub continuous: ObservedData,
    pub binary: ObservedData,
    pub basis: RegressorBasis,
}

impl Instance {
    pub fn data_for(&self, kind: &LossKind) -> &ObservedData {
        match kind.outcome_link() {
            Some(Link::Logistic) => &self.binary,
            _ => &self.continuous,
        }
    }
}

pub fn instance(n: usize, p: usize, seed: u64) -> Instance {
    let mut rng = rng(seed);
    let mut x = Array2::zeros((n, p));
    for v in x.iter_mut() {
        *v = std_normal(&mut rng);
    }
    let mut t = Vec::with_capacity(n);
    let mut yc = Vec::with_capacity(n);
    let mut yb = Vec::with_capacity(n);
    for i in 0..n {
        let z = |j: usize| if j < p { x[[i, j]] } else { 0.0 };
        let ps = 0.6 * z(0) - 0.4 * z(1) + 0.2 * z(2);
        t.push(u8::from(rng.random::<f64>() < expit(ps)));
        let lin = 0.5 + z(0) + 0.5 * z(1) - 0.25 * z(3);
        yc.push(Some(lin + std_normal(&mut rng)));
        yb.push(Some(f64::from(u8::from(rng.random::<f64>() < expit(lin)))));
    }
    t[0] = 1;
    t[1] = 0;
    let continuous = ObservedData::new(t.clone(), yc, x.clone(), None).unwrap();
    let binary = ObservedData::new(t, yb, x, None).unwrap();
    let basis = build_basis(&continuous, true, BasisExpansion::Raw).unwrap();
    Instance { continuous, binary, basis }
}

pub fn random_coef(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * std_normal(rng)).collect()
}

/// Every loss variant, with small random companion fits for the weighted
/// ones.
pub fn all_kinds(dim: usize, seed: u64) -> Vec<LossKind> {
    let mut rng = rng(seed);
    let mut companion = || -> Arc<[f64]> { random_coef(&mut rng, dim, 0.2).into() };
    let mut kinds =
        vec![LossKind::MlPs, LossKind::CalPs { arm: Arm::Treated }, LossKind::CalPs { arm: Arm::Untreated }];
    for link in [Link::Identity, Link::Logistic] {
        for arm in [Arm::Treated, Arm::Untreated] {
            kinds.push(LossKind::MlOr { link, arm });
            kinds.push(LossKind::WlOr { link, arm, ps_coef: companion() });
        }
        kinds.push(LossKind::WcalPs { link, or_coef: companion() });
    }
    kinds
}

fn row_predictor(basis: &RegressorBasis, coef: &[f64], i: usize) -> f64 {
    let f = basis.matrix();
    (0..coef.len()).map(|j| f[[i, j]] * coef[j]).sum()
}

/// Loss value computed row by row straight from the defining formulas.
pub fn reference_loss(kind: &LossKind, basis: &RegressorBasis, data: &ObservedData, coef: &[f64]) -> f64 {
    let n = data.n();
    let mut total = 0.0;
    for i in 0..n {
        let t = f64::from(data.treatment()[i]);
        let y = data.outcome()[i].unwrap_or(f64::NAN);
        let eta = row_predictor(basis, coef, i);
        let cumulant = |link: &Link| match link {
            Link::Identity => eta * eta / 2.0,
            Link::Logistic => (1.0 + eta.exp()).ln(),
        };
        let arm_ind = |arm: &Arm| match arm {
            Arm::Treated => t,
            Arm::Untreated => 1.0 - t,
        };
        total += match kind {
            LossKind::MlPs => (1.0 + eta.exp()).ln() - t * eta,
            LossKind::CalPs { arm: Arm::Treated } => t * (-eta).exp() + (1.0 - t) * eta,
            LossKind::CalPs { arm: Arm::Untreated } => (1.0 - t) * eta.exp() - t * eta,
            LossKind::MlOr { link, arm } => {
                if arm_ind(arm) == 0.0 {
                    0.0
                } else {
                    -y * eta + cumulant(link)
                }
            }
            LossKind::WlOr { link, arm, ps_coef } => {
                if arm_ind(arm) == 0.0 {
                    0.0
                } else {
                    let g = row_predictor(basis, ps_coef, i);
                    let w = match arm {
                        Arm::Treated => (-g).exp(),
                        Arm::Untreated => g.exp(),
                    };
                    w * (-y * eta + cumulant(link))
                }
            }
            LossKind::WcalPs { link, or_coef } => {
                let a = row_predictor(basis, or_coef, i);
                let psi2 = match link {
                    Link::Identity => 1.0,
                    Link::Logistic => expit(a) * (1.0 - expit(a)),
                };
                psi2 * (t * (-eta).exp() + (1.0 - t) * eta)
            }
        };
    }
    total / n as f64
}

pub fn reference_objective(
    kind: &LossKind,
    basis: &RegressorBasis,
    data: &ObservedData,
    coef: &[f64],
    lambda: f64,
) -> f64 {
    reference_loss(kind, basis, data, coef) + lambda * coef[1..].iter().map(|c| c.abs()).sum::<f64>()
}

/// Minimizes a convex function of one variable on `[lo, hi]`.
fn golden_section(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if hi - lo < 1e-13 {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Brute-force minimizer of the penalized objective: a coarse grid over a
/// box, then cyclic one-dimensional golden-section refinement until the
/// iterate stops moving.
pub fn brute_force_minimizer(kind: &LossKind, basis: &RegressorBasis, data: &ObservedData, lambda: f64) -> Vec<f64> {
    let dim = basis.dim();
    let obj = |c: &[f64]| {
        let v = reference_objective(kind, basis, data, c, lambda);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let steps = 17;
    let half = 3.0;
    let mut best = vec![0.0; dim];
    let mut best_val = f64::INFINITY;
    let mut idx = vec![0usize; dim];
    loop {
        let c: Vec<f64> = idx.iter().map(|&k| -half + 2.0 * half * k as f64 / (steps - 1) as f64).collect();
        let v = obj(&c);
        if v < best_val {
            best_val = v;
            best = c;
        }
        let mut j = 0;
        while j < dim {
            idx[j] += 1;
            if idx[j] < steps {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == dim {
            break;
        }
    }

    let mut theta = best;
    for _ in 0..2000 {
        let mut moved: f64 = 0.0;
        for j in 0..dim {
            let width = 1.0;
            let center = theta[j];
            let mut probe = theta.clone();
            let x = golden_section(
                |v| {
                    probe[j] = v;
                    obj(&probe)
                },
                center - width,
                center + width,
            );
            moved = moved.max((x - theta[j]).abs());
            theta[j] = x;
        }
        if moved < 1e-10 {
            break;
        }
    }
    theta
}
