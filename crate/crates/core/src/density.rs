//! Dense density matrices and the trace distance.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;

use crate::specvec::CanonicalVector;
use crate::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

/// A validated Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validates `entries` against the density-matrix tolerances.
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::InvalidDensity("matrix is not square"));
        }
        let n = entries.nrows();
        let scale = entries.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(1.0);
        for i in 0..n {
            for j in 0..=i {
                if (entries[(i, j)] - entries[(j, i)].conj()).norm() > HERMITIAN_TOL * scale {
                    return Err(Error::InvalidDensity("matrix is not Hermitian"));
                }
            }
        }
        let tr: f64 = (0..n).map(|i| entries[(i, i)].re).sum();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidDensity("trace is not 1"));
        }
        let dm = DensityMatrix { entries };
        if dm.min_eigenvalue() < -PSD_TOL {
            return Err(Error::InvalidDensity("matrix is not positive semidefinite"));
        }
        Ok(dm)
    }

    /// Builds from a real symmetric matrix.
    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|x| Complex64::new(x, 0.0)))
    }

    /// The projector onto a (renormalized) pure state.
    pub fn from_pure(v: &[Complex64]) -> Result<Self> {
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroState);
        }
        let col = DVector::from_iterator(v.len(), v.iter().map(|z| z / norm));
        Self::new(&col * col.adjoint())
    }

    pub fn from_pure_real(v: &[f64]) -> Result<Self> {
        let z: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_pure(&z)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    /// Real parts of the entries (exact for matrices built in the canonical
    /// basis, which are real).
    pub fn real_part(&self) -> DMatrix<f64> {
        self.entries.map(|z| z.re)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Expectation `tr(rho M)` of a Hermitian observable.
    pub fn expectation(&self, m: &DMatrix<Complex64>) -> Result<f64> {
        if m.nrows() != self.dim() || m.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: m.nrows(),
            });
        }
        Ok((&self.entries * m).trace().re)
    }

    /// Maps a matrix expressed in the canonical basis of `canon` back to the
    /// original coordinates: `rho[p(a), p(b)] = phase_a sigma[a, b] conj(phase_b)`.
    pub fn restore(&self, canon: &CanonicalVector) -> Result<Self> {
        let d = canon.dim();
        if d != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: self.dim(),
            });
        }
        let perm = canon.perm();
        let ph = canon.phases();
        let mut out = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                let (pa, pb) = (perm[a], perm[b]);
                out[(pa, pb)] = ph[pa] * self.entries[(a, b)] * ph[pb].conj();
            }
        }
        Ok(DensityMatrix { entries: out })
    }
}

pub(crate) fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().collect()
}

pub(crate) fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let h = (m + m.transpose()) * 0.5;
    h.symmetric_eigenvalues().iter().copied().collect()
}

/// Half the sum of the absolute eigenvalues of `rho - sigma`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    let diff = &rho.entries - &sigma.entries;
    Ok(0.5
        * hermitian_eigenvalues(&diff)
            .iter()
            .map(|x| x.abs())
            .sum::<f64>())
}

/// Trace distance between the pure state `v` (real, assumed unit) and a real
/// symmetric matrix. Avoids the complex eigensolver for the canonical basis.
pub fn trace_distance_pure_real(v: &[f64], sigma: &DMatrix<f64>) -> f64 {
    let col = DVector::from_column_slice(v);
    let diff = &col * col.transpose() - sigma;
    0.5 * symmetric_eigenvalues(&diff)
        .iter()
        .map(|x| x.abs())
        .sum::<f64>()
}
