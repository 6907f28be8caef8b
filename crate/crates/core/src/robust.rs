//! Robustness-optimal mixed approximation.
//!
//! The ensemble keeps the canonical prefix `v_1 .. v_{k-r-1}` and puts the
//! common amplitude `s_{k-r} / (r + 1)` on a random `(r + 1)`-subset of the
//! remaining positions, where `r` is the window index of the `k`-support
//! norm. Every such state has squared norm `1 + R_k`.

use nalgebra::{DMatrix, DVector};

use crate::ensemble::{EnsembleKind, SparseEnsemble};
use crate::specvec::CanonicalVector;
use crate::{Error, Result};

/// Default tolerance for the weight fit. Cross terms between the prefix and
/// the window carry the fit residual directly into the off-diagonal of the
/// certificate matrix, so this is tighter than the trace-distance default.
pub const DEFAULT_FIT_TOL: f64 = 1e-13;

const MIN_DIAG_TOL: f64 = 1e-12;
const MAX_OFFDIAG_TOL: f64 = 1e-12;
const ROWSUM_TOL: f64 = 1e-10;

/// Sign pattern of `Δ = (1 + R) τ - v vᵀ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaCertificate {
    pub min_diag: f64,
    pub max_offdiag: f64,
    pub max_abs_rowsum: f64,
}

impl DeltaCertificate {
    pub fn of(delta: &DMatrix<f64>) -> Self {
        let n = delta.nrows();
        let mut min_diag = f64::INFINITY;
        let mut max_offdiag = f64::NEG_INFINITY;
        let mut max_abs_rowsum = 0.0f64;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let x = delta[(i, j)];
                row += x;
                if i == j {
                    min_diag = min_diag.min(x);
                } else {
                    max_offdiag = max_offdiag.max(x);
                }
            }
            max_abs_rowsum = max_abs_rowsum.max(row.abs());
        }
        DeltaCertificate {
            min_diag,
            max_offdiag: if n < 2 { 0.0 } else { max_offdiag },
            max_abs_rowsum,
        }
    }

    pub fn passes(&self) -> bool {
        self.min_diag >= -MIN_DIAG_TOL
            && self.max_offdiag <= MAX_OFFDIAG_TOL
            && self.max_abs_rowsum <= ROWSUM_TOL
    }
}

/// Builds the robustness ensemble using [`DEFAULT_FIT_TOL`].
pub fn build_ensemble(canon: &CanonicalVector, k: usize) -> Result<SparseEnsemble> {
    build_ensemble_with_tol(canon, k, DEFAULT_FIT_TOL)
}

pub fn build_ensemble_with_tol(
    canon: &CanonicalVector,
    k: usize,
    fit_tol: f64,
) -> Result<SparseEnsemble> {
    let ks = canon.k_support_norm(k)?;
    if canon.support() <= k {
        return Ok(SparseEnsemble::point_mass(
            EnsembleKind::Robustness,
            canon.clone(),
            k,
        ));
    }
    let r = ks.r;
    let v = canon.values();
    let d = canon.dim();
    // 0-based window start is k - r - 1.
    let start = k - r - 1;
    let s: f64 = v[start..].iter().sum();
    let amp = s / (r + 1) as f64;
    let q = v[start..].iter().map(|&x| x / amp).collect();
    let prefix = v[..start].to_vec();
    let robustness = (ks.value * ks.value - 1.0).max(0.0);
    SparseEnsemble::new(
        EnsembleKind::Robustness,
        canon.clone(),
        k,
        prefix,
        start..d,
        amp,
        r + 1,
        q,
        robustness,
        fit_tol,
    )
}

/// `τ = E[u uᵀ] / (1 + R)` in the canonical basis, and its certificate.
pub fn density_matrix(ens: &SparseEnsemble) -> Result<(DMatrix<f64>, DeltaCertificate)> {
    let tau = ens.density_matrix();
    let cert = certificate(ens, &tau);
    if !cert.passes() {
        return Err(Error::CertificateViolation {
            min_diag: cert.min_diag,
            max_offdiag: cert.max_offdiag,
            max_abs_rowsum: cert.max_abs_rowsum,
        });
    }
    Ok((tau, cert))
}

/// `Δ = (1 + R) τ - v vᵀ` for the ensemble's target.
pub fn delta_matrix(ens: &SparseEnsemble, tau: &DMatrix<f64>) -> DMatrix<f64> {
    let v = DVector::from_column_slice(ens.canon().values());
    tau * (ens.norm_const() * ens.norm_const()) - &v * v.transpose()
}

pub fn certificate(ens: &SparseEnsemble, tau: &DMatrix<f64>) -> DeltaCertificate {
    DeltaCertificate::of(&delta_matrix(ens, tau))
}
