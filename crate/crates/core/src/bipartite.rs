//! Schmidt-rank truncation of bipartite pure states.
//!
//! Both optimal approximation problems reduce to the sparse problem on the
//! vector of Schmidt coefficients; sampled sparse coefficient vectors are
//! lifted back through the Schmidt bases.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;
#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;
use rand::Rng;

use crate::ensemble::{SparseEnsemble, DEFAULT_FIT_TOL};
use crate::specvec::CanonicalVector;
use crate::{robust, tracedist, Error, Result};

const RANK_TOL: f64 = 1e-14;
const RENORM_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    TraceDistance,
    Robustness,
}

/// A pure state on `C^a ⊗ C^b` with its Schmidt decomposition
/// `M = left · diag(schmidt) · right†`.
#[derive(Clone, Debug)]
pub struct BipartiteState {
    a: usize,
    b: usize,
    matrix: DMatrix<Complex64>,
    schmidt: Vec<f64>,
    left: DMatrix<Complex64>,
    right: DMatrix<Complex64>,
    renormalized: bool,
}

impl BipartiteState {
    /// `coeffs[i * b + j]` is the amplitude of `|i⟩ ⊗ |j⟩`. Inputs whose norm
    /// differs from 1 by more than `1e-6` are rescaled and flagged.
    pub fn schmidt(coeffs: &[Complex64], a: usize, b: usize) -> Result<Self> {
        if a == 0 || b == 0 {
            return Err(Error::InvalidInput("subsystem dimensions must be positive"));
        }
        if coeffs.len() != a * b {
            return Err(Error::DimensionMismatch {
                expected: a * b,
                found: coeffs.len(),
            });
        }
        if coeffs
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidInput("non-finite amplitude"));
        }
        let norm = coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroState);
        }
        let renormalized = (norm - 1.0).abs() > RENORM_TOL;
        let matrix = DMatrix::from_row_slice(a, b, coeffs) / Complex64::new(norm, 0.0);
        let svd = matrix.clone().svd(true, true);
        let u = svd.u.expect("requested");
        let v_t = svd.v_t.expect("requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
        let r = order.len();
        let mut schmidt = Vec::with_capacity(r);
        let mut left = DMatrix::zeros(a, r);
        let mut right = DMatrix::zeros(b, r);
        for (c, &o) in order.iter().enumerate() {
            let s = svd.singular_values[o];
            schmidt.push(if s < RANK_TOL { 0.0 } else { s });
            left.set_column(c, &u.column(o));
            right.set_column(c, &v_t.row(o).adjoint());
        }
        Ok(BipartiteState {
            a,
            b,
            matrix,
            schmidt,
            left,
            right,
            renormalized,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.a, self.b)
    }

    /// Nonincreasing Schmidt coefficients (length `min(a, b)`).
    pub fn coefficients(&self) -> &[f64] {
        &self.schmidt
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn left_basis(&self) -> &DMatrix<Complex64> {
        &self.left
    }

    pub fn right_basis(&self) -> &DMatrix<Complex64> {
        &self.right
    }

    /// Whether the input had to be rescaled to unit norm.
    pub fn renormalized(&self) -> bool {
        self.renormalized
    }

    pub fn rank(&self) -> usize {
        self.schmidt.iter().filter(|&&s| s > 0.0).count()
    }

    /// The Schmidt coefficients as a canonical vector (identity permutation).
    pub fn coefficient_vector(&self) -> Result<CanonicalVector> {
        CanonicalVector::from_sorted(&self.schmidt)
    }

    /// `‖left · diag(schmidt) · right† - M‖_F`.
    pub fn reconstruction_residual(&self) -> f64 {
        let r = self.schmidt.len();
        let mut rec = DMatrix::<Complex64>::zeros(self.a, self.b);
        for s in 0..r {
            rec += self.left.column(s)
                * self.right.column(s).adjoint()
                * Complex64::new(self.schmidt[s], 0.0);
        }
        (rec - &self.matrix).norm()
    }

    /// `Σ_s w_s x_s ⊗ y_s` flattened row-major, for coefficients `w` over the
    /// Schmidt index.
    pub fn lift_vector(&self, w: &[f64]) -> Result<Vec<Complex64>> {
        if w.len() != self.schmidt.len() {
            return Err(Error::DimensionMismatch {
                expected: self.schmidt.len(),
                found: w.len(),
            });
        }
        let mut out = alloc::vec![Complex64::new(0.0, 0.0); self.a * self.b];
        for (s, &ws) in w.iter().enumerate() {
            if ws == 0.0 {
                continue;
            }
            for i in 0..self.a {
                let x = self.left[(i, s)] * ws;
                for j in 0..self.b {
                    out[i * self.b + j] += x * self.right[(j, s)].conj();
                }
            }
        }
        Ok(out)
    }

    /// `W σ W†`, where column `s` of `W` is `x_s ⊗ y_s`.
    pub fn lift_density(&self, sigma: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
        let r = self.schmidt.len();
        if sigma.nrows() != r || sigma.ncols() != r {
            return Err(Error::DimensionMismatch {
                expected: r,
                found: sigma.nrows(),
            });
        }
        let mut w = DMatrix::<Complex64>::zeros(self.a * self.b, r);
        for s in 0..r {
            let mut e = alloc::vec![0.0; r];
            e[s] = 1.0;
            let col = self.lift_vector(&e)?;
            for (row, z) in col.into_iter().enumerate() {
                w[(row, s)] = z;
            }
        }
        let sc = sigma.map(|x| Complex64::new(x, 0.0));
        Ok(&w * sc * w.adjoint())
    }
}

/// Optimal value and ensemble for Schmidt-rank-`k` truncation.
pub fn solve_entangled(
    state: &BipartiteState,
    k: usize,
    objective: Objective,
) -> Result<(f64, SparseEnsemble)> {
    let canon = state.coefficient_vector()?;
    if k == 0 || k > canon.dim() {
        return Err(Error::KOutOfRange { k, d: canon.dim() });
    }
    match objective {
        Objective::TraceDistance => {
            let sol = tracedist::solve(&canon, k)?;
            let ens = tracedist::build_ensemble(&sol, &canon, DEFAULT_FIT_TOL)?;
            Ok((sol.lambda, ens))
        }
        Objective::Robustness => {
            let ens = robust::build_ensemble(&canon, k)?;
            Ok((ens.value(), ens))
        }
    }
}

/// Draws one state of Schmidt rank at most `k` from the ensemble.
pub fn sample_low_rank_state<R: Rng + ?Sized>(
    state: &BipartiteState,
    ensemble: &SparseEnsemble,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let w = ensemble.sample_state(rng);
    state.lift_vector(&w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn product_state() {
        let s = BipartiteState::schmidt(&[c(0.6), c(0.8), c(0.0), c(0.0)], 2, 2).unwrap();
        assert!((s.coefficients()[0] - 1.0).abs() < 1e-12);
        assert_eq!(s.coefficients()[1], 0.0);
        for k in 1..=2 {
            for obj in [Objective::TraceDistance, Objective::Robustness] {
                assert_eq!(solve_entangled(&s, k, obj).unwrap().0, 0.0);
            }
        }
    }

    #[test]
    fn bell_state() {
        let h = 0.5f64.sqrt();
        let s = BipartiteState::schmidt(&[c(h), c(0.0), c(0.0), c(h)], 2, 2).unwrap();
        for x in s.coefficients() {
            assert!((x - h).abs() < 1e-12);
        }
        assert!(s.reconstruction_residual() < 1e-12);
        assert!(!s.renormalized());
    }

    #[test]
    fn renormalization_flag() {
        let s = BipartiteState::schmidt(&[c(2.0), c(0.0), c(0.0), c(0.0)], 2, 2).unwrap();
        assert!(s.renormalized());
        assert!(matches!(
            BipartiteState::schmidt(&[c(0.0); 4], 2, 2),
            Err(Error::ZeroState)
        ));
    }

    #[test]
    fn lift_full_vector_reproduces_state() {
        let coeffs: Vec<Complex64> = (0..12)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let s = BipartiteState::schmidt(&coeffs, 3, 4).unwrap();
        let back = s.lift_vector(s.coefficients()).unwrap();
        let norm = coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for (x, y) in back.iter().zip(&coeffs) {
            assert!((x - y / norm).norm() < 1e-12);
        }
    }
}
