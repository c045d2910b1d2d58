//! Closed-form moments of the truncated-normal covariates and the
//! constants that standardize the transformed covariates `X†₁..X†₄`.

use serde::{Deserialize, Serialize};

use crate::normal::{cdf, pdf};
use crate::quadrature::integrate;

/// Truncation bound of the simulated covariates.
pub const TRUNCATION: f64 = 2.5;

/// Tabulated `sd(X₂/(1+e^{X₁}))` for `a = 2.5`.
pub const TABULATED_RATIO_SD: f64 = 0.542_578_65;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

/// Moments of `Z ~ N(0,1)` truncated to `(-a, a)`, of `X = Z/b`, and the
/// mean/sd pairs of the four covariate transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizationConstants {
    pub a: f64,
    /// `2Φ(a) − 1`.
    pub c: f64,
    /// `var(Z) = 1 − 2aφ(a)/c`.
    pub b2: f64,
    pub b: f64,
    /// `E X⁴` and `E X⁶`.
    pub m4: f64,
    pub m6: f64,
    /// `e^{0.5 X₁}`.
    pub exp_half: Moments,
    /// `10 + X₂/(1 + e^{X₁})`.
    pub ratio: Moments,
    /// `(0.04 X₁X₃ + 0.6)³`.
    pub cubic: Moments,
    /// `(X₂ + X₄ + 20)²`.
    pub square: Moments,
}

/// `(1/c) E e^{tZ}` restricted to `(-a, a)`, i.e. `E e^{tZ}` for the
/// truncated variable.
fn truncated_mgf(t: f64, a: f64, c: f64) -> f64 {
    (0.5 * t * t).exp() * (cdf(a - t) - cdf(-a - t)) / c
}

/// `∫_{-a}^{a} z^{2k} φ(z) dz` for `k = 2, 3` via the closed-form
/// antiderivatives.
fn even_moment_integral(k: u32, a: f64) -> f64 {
    let at = |z: f64| match k {
        2 => 1.5 * (2.0 * cdf(z) - 1.0) - z * (z * z + 3.0) * pdf(z),
        3 => 7.5 * (2.0 * cdf(z) - 1.0) - z * (z.powi(4) + 5.0 * z * z + 15.0) * pdf(z),
        _ => unreachable!("only fourth and sixth moments are needed"),
    };
    at(a) - at(-a)
}

impl StandardizationConstants {
    pub fn new(a: f64) -> Self {
        let c = 2.0 * cdf(a) - 1.0;
        let b2 = 1.0 - 2.0 * a * pdf(a) / c;
        let b = b2.sqrt();
        let m4 = even_moment_integral(2, a) / (b2 * b2 * c);
        let m6 = even_moment_integral(3, a) / (b2 * b2 * b2 * c);

        let e_half = truncated_mgf(0.5 / b, a, c);
        let e_one = truncated_mgf(1.0 / b, a, c);
        let exp_half = Moments { mean: e_half, sd: (e_one - e_half * e_half).sqrt() };

        let ratio_var = integrate(
            |z| {
                let d = 1.0 + (z / b).exp();
                pdf(z) / (d * d)
            },
            -a,
            a,
            1e-15,
            1e-14,
        ) / c;
        let ratio = Moments { mean: 10.0, sd: ratio_var.sqrt() };

        let e3 = 3.0 / 625.0 * 0.6 + 0.6f64.powi(3);
        let e6 = m6 * m6 / 25f64.powi(6)
            + 15.0 * m4 * m4 / 25f64.powi(4) * 0.36
            + 15.0 / 625.0 * 0.6f64.powi(4)
            + 0.6f64.powi(6);
        let cubic = Moments { mean: e3, sd: (e6 - e3 * e3).sqrt() };

        let e2 = 2.0 + 400.0;
        let e4 = (2.0 * m4 + 6.0) + 6.0 * 2.0 * 400.0 + 20f64.powi(4);
        let square = Moments { mean: e2, sd: (e4 - e2 * e2).sqrt() };

        Self { a, c, b2, b, m4, m6, exp_half, ratio, cubic, square }
    }

    /// Constants for the simulation design, `a = 2.5`.
    pub fn standard() -> Self {
        Self::new(TRUNCATION)
    }

    /// Every closed-form constant next to an adaptive-quadrature evaluation
    /// of its defining integral.
    pub fn quadrature_checks(&self) -> Vec<ConstantCheck> {
        let (a, b, c) = (self.a, self.b, self.c);
        let tol = 1e-14;
        let q1 = |f: &dyn Fn(f64) -> f64| integrate(|z| f(z) * pdf(z), -a, a, tol, tol) / c;
        let q2 = |f: &dyn Fn(f64, f64) -> f64| {
            integrate(|z1| pdf(z1) * integrate(|z2| f(z1, z2) * pdf(z2), -a, a, tol, tol), -a, a, tol, tol) / (c * c)
        };
        let x = |z: f64| z / b;

        let cubic = |z1: f64, z3: f64| (0.04 * x(z1) * x(z3) + 0.6).powi(3);
        let square = |z2: f64, z4: f64| (x(z2) + x(z4) + 20.0).powi(2);
        let mut checks = vec![
            ConstantCheck::new("c", self.c, integrate(pdf, -a, a, tol, tol), 1e-8),
            ConstantCheck::new("b2", self.b2, q1(&|z| z * z), 1e-12),
            ConstantCheck::new("m4", self.m4, q1(&|z| x(z).powi(4)), 1e-8),
            ConstantCheck::new("m6", self.m6, q1(&|z| x(z).powi(6)), 1e-8),
            ConstantCheck::new("E exp(X/2)", self.exp_half.mean, q1(&|z| (0.5 * x(z)).exp()), 1e-8),
            ConstantCheck::new(
                "var exp(X/2)",
                self.exp_half.sd.powi(2),
                q1(&|z| x(z).exp()) - self.exp_half.mean.powi(2),
                1e-8,
            ),
            ConstantCheck::new("E cubic", self.cubic.mean, q2(&|u, v| cubic(u, v)), 1e-8),
            ConstantCheck::new(
                "E cubic^2",
                self.cubic.sd.powi(2) + self.cubic.mean.powi(2),
                q2(&|u, v| cubic(u, v).powi(2)),
                1e-8,
            ),
            ConstantCheck::new("E square", self.square.mean, q2(&|u, v| square(u, v)), 1e-8),
            ConstantCheck::new(
                "E square^2",
                self.square.sd.powi(2) + self.square.mean.powi(2),
                q2(&|u, v| square(u, v).powi(2)),
                1e-8,
            ),
        ];
        // The ratio's variance has no closed form; check the tabulated sd and
        // the two-dimensional definition of its variance.
        checks.push(ConstantCheck::new("sd ratio (tabulated)", TABULATED_RATIO_SD, self.ratio.sd, 1e-6));
        checks.push(ConstantCheck::new(
            "var ratio",
            self.ratio.sd.powi(2),
            q2(&|z1, z2| (x(z2) / (1.0 + x(z1).exp())).powi(2)),
            1e-8,
        ));
        checks
    }
}

/// A closed-form constant against its quadrature value. The check passes
/// when `|analytic − quadrature| ≤ tolerance · max(1, |quadrature|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantCheck {
    pub name: String,
    pub analytic: f64,
    pub quadrature: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ConstantCheck {
    fn new(name: &str, analytic: f64, quadrature: f64, tolerance: f64) -> Self {
        let pass = (analytic - quadrature).abs() <= tolerance * quadrature.abs().max(1.0);
        Self { name: name.to_string(), analytic, quadrature, tolerance, pass }
    }

    pub fn error(&self) -> f64 {
        (self.analytic - self.quadrature).abs()
    }
}
