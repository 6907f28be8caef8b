//! Positive roots of the normalization equation
//!
//! ```text
//! 1 = A / (1 + λ) + B2 / (c1 + c2 λ) + C / λ
//! ```
//!
//! Clearing denominators gives a polynomial of degree at most three, which is
//! solved through the eigenvalues of its companion matrix.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{Error, Result};

const TRIM: f64 = 1e-300;
const IMAG_TOL: f64 = 1e-9;

/// Coefficients of the normalization equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEquation {
    pub a: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub c: f64,
}

impl NormEquation {
    /// `A/(1+λ) + B2/(c1+c2λ) + C/λ - 1`; strictly decreasing for `λ > 0`.
    pub fn residual(&self, lambda: f64) -> f64 {
        let mut f = self.a / (1.0 + lambda) + self.b2 / (self.c1 + self.c2 * lambda) - 1.0;
        if self.c != 0.0 {
            f += self.c / lambda;
        }
        f
    }

    pub fn derivative(&self, lambda: f64) -> f64 {
        let den = self.c1 + self.c2 * lambda;
        let mut g = -self.a / ((1.0 + lambda) * (1.0 + lambda)) - self.b2 * self.c2 / (den * den);
        if self.c != 0.0 {
            g -= self.c / (lambda * lambda);
        }
        g
    }

    /// Polynomial coefficients, constant term first.
    pub fn cleared(&self) -> [f64; 4] {
        let NormEquation { a, b2, c1, c2, c } = *self;
        [
            -c * c1,
            c1 - a * c1 - b2 - c * (c1 + c2),
            c1 + c2 - a * c2 - b2 - c * c2,
            c2,
        ]
    }
}

/// All real roots `λ > 0` of the normalization equation, ascending.
pub fn cubic_positive_roots(a: f64, b2: f64, c1: f64, c2: f64, c: f64) -> Result<Vec<f64>> {
    if !(a >= 0.0 && b2 >= 0.0 && c >= 0.0 && c1 >= 1.0 && c2 >= 1.0) {
        return Err(Error::InvalidInput("need A, B2, C >= 0 and c1, c2 >= 1"));
    }
    let eq = NormEquation { a, b2, c1, c2, c };
    let mut coeffs: Vec<f64> = eq.cleared().to_vec();
    while coeffs.last().is_some_and(|x| x.abs() < TRIM) {
        coeffs.pop();
    }
    // Zero constant terms are roots at λ = 0, which is never admissible.
    let lead = coeffs.iter().position(|x| x.abs() >= TRIM);
    let Some(lead) = lead else {
        return Err(Error::ZeroPolynomial);
    };
    let coeffs = &coeffs[lead..];
    let mut roots = real_roots(coeffs)
        .into_iter()
        .filter(|&x| x > 0.0)
        .map(|x| polish(&eq, x))
        .filter(|&x| x > 0.0 && x.is_finite())
        .collect::<Vec<f64>>();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * y.abs().max(1.0));
    Ok(roots)
}

/// Real roots of `Σ coeffs[i] x^i` with a nonzero constant term.
fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let deg = coeffs.len() - 1;
    match deg {
        0 => Vec::new(),
        1 => alloc::vec![-coeffs[0] / coeffs[1]],
        _ => {
            let lead = coeffs[deg];
            let mut comp = DMatrix::<f64>::zeros(deg, deg);
            for i in 1..deg {
                comp[(i, i - 1)] = 1.0;
            }
            for i in 0..deg {
                comp[(i, deg - 1)] = -coeffs[i] / lead;
            }
            comp.complex_eigenvalues()
                .iter()
                .filter(|z| z.im.abs() <= IMAG_TOL * z.norm())
                .map(|z| z.re)
                .collect()
        }
    }
}

fn polish(eq: &NormEquation, mut x: f64) -> f64 {
    for _ in 0..2 {
        let f = eq.residual(x);
        let g = eq.derivative(x);
        if g == 0.0 || !g.is_finite() {
            break;
        }
        let next = x - f / g;
        if next > 0.0 && eq.residual(next).abs() <= f.abs() {
            x = next;
        } else {
            break;
        }
    }
    x
}
