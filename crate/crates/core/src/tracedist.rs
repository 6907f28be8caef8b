//! Optimal trace distance to the `k`-sparse states.
//!
//! For a canonical target `v` the optimal measurement vector has three
//! regions: `v_i / (1 + λ)` on a prefix, a flat value `θ` on a window and
//! `v_i / λ` on the tail, with `λ = T_k(v)`. [`solve`] searches the window
//! boundaries `(r, ℓ)` in order and returns the first consistent triple.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;
use rand::Rng;

use crate::cubic::{cubic_positive_roots, NormEquation};
use crate::density::{symmetric_eigenvalues, trace_distance_pure_real};
use crate::ensemble::{EnsembleKind, SparseEnsemble};
use crate::specvec::{k_support_norm_of, top_k_norm_of, CanonicalVector};
use crate::{Error, Result};

/// Relative widening of the window bounds used by the interval screen.
const SCREEN_REL: f64 = 1e-9;
const SCREEN_F: f64 = 1e-9;
/// Absolute slack for the final window test.
const ACCEPT_TOL: f64 = 1e-12;

/// Output of [`solve`]. Indices follow the 1-based convention of the
/// formulas: the window is canonical positions `k - r ..= ell - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceDistSolution {
    /// `T_k(v)`.
    pub lambda: f64,
    pub r: usize,
    pub ell: usize,
    pub theta: f64,
    /// Unnormalized measurement vector (canonical order, full dimension).
    pub m_tilde: Vec<f64>,
    /// `m_tilde` scaled to unit norm.
    pub m: Vec<f64>,
    pub k: usize,
}

impl TraceDistSolution {
    /// Canonical positions (0-based) of the flat window.
    pub fn window(&self) -> core::ops::Range<usize> {
        if self.lambda == 0.0 {
            return 0..0;
        }
        (self.k - self.r - 1)..(self.ell - 1)
    }
}

/// 1-indexed views of the stripped vector with the sentinels
/// `v[0] = +inf` and `v[d + 1] = 0`.
struct Prep {
    d: usize,
    v: Vec<f64>,
    /// `pre_sq[j] = Σ_{i ≤ j} v_i²`.
    pre_sq: Vec<f64>,
    /// `suf_sq[j] = Σ_{i ≥ j} v_i²`, `suf_sq[d + 1] = 0`.
    suf_sq: Vec<f64>,
    /// `s[j] = Σ_{i ≥ j} v_i`, `s[d + 1] = 0`.
    s: Vec<f64>,
}

impl Prep {
    fn new(values: &[f64]) -> Self {
        let d = values.len();
        let mut v = Vec::with_capacity(d + 2);
        v.push(f64::INFINITY);
        v.extend_from_slice(values);
        v.push(0.0);
        let mut pre_sq = alloc::vec![0.0; d + 2];
        for j in 1..=d {
            pre_sq[j] = pre_sq[j - 1] + v[j] * v[j];
        }
        let mut suf_sq = alloc::vec![0.0; d + 2];
        let mut s = alloc::vec![0.0; d + 2];
        for j in (1..=d).rev() {
            suf_sq[j] = suf_sq[j + 1] + v[j] * v[j];
            s[j] = s[j + 1] + v[j];
        }
        Prep {
            d,
            v,
            pre_sq,
            suf_sq,
            s,
        }
    }

    fn equation(&self, k: usize, r: usize, ell: usize) -> (NormEquation, f64) {
        let b = self.s[k - r] - self.s[ell];
        (
            NormEquation {
                a: self.pre_sq[k - r - 1],
                b2: b * b,
                c1: (r + 1) as f64,
                c2: (ell - k + r) as f64,
                c: self.suf_sq[ell],
            },
            b,
        )
    }

    /// Largest violation of the window conditions at `λ` (`<= 0` means
    /// satisfied within the acceptance slack).
    fn violation(
        &self,
        k: usize,
        r: usize,
        ell: usize,
        b: f64,
        eq: &NormEquation,
        lambda: f64,
    ) -> f64 {
        let theta = b / (eq.c1 + eq.c2 * lambda);
        let h1 = (1.0 + lambda) * theta;
        let h2 = lambda * theta;
        let tol = ACCEPT_TOL * self.v[1].max(1.0);
        let mut worst = f64::NEG_INFINITY;
        // Closed sides may undershoot by tol; strict sides need margin > -tol.
        worst = worst.max(self.v[k - r] - h1 - tol);
        if k - r - 1 > 0 {
            worst = worst.max(h1 - self.v[k - r - 1] - tol);
        }
        worst = worst.max(self.v[ell] - h2 - tol);
        worst = worst.max(h2 - self.v[ell - 1] - tol);
        worst
    }

    /// Cheap necessary test: intersects the λ-intervals on which each window
    /// condition can hold and checks the normalization residual changes sign
    /// there.
    fn screen(&self, k: usize, r: usize, ell: usize, b: f64, eq: &NormEquation) -> bool {
        let (c1, c2) = (eq.c1, eq.c2);
        let mut lo = 0.0f64;
        let mut hi = f64::INFINITY;
        let mut ok = true;
        let mut apply = |alpha: f64, beta: f64, ge: bool| {
            if alpha > 0.0 {
                if ge {
                    lo = lo.max(beta / alpha);
                } else {
                    hi = hi.min(beta / alpha);
                }
            } else if alpha < 0.0 {
                if ge {
                    hi = hi.min(beta / alpha);
                } else {
                    lo = lo.max(beta / alpha);
                }
            } else if (ge && beta > 0.0) || (!ge && beta < 0.0) {
                ok = false;
            }
        };
        // (1 + λ) θ >= v_{k-r}  <=>  λ (B - y c2) >= y c1 - B
        let y = self.v[k - r] * (1.0 - SCREEN_REL);
        apply(b - y * c2, y * c1 - b, true);
        if k - r - 1 > 0 {
            let y = self.v[k - r - 1] * (1.0 + SCREEN_REL);
            apply(b - y * c2, y * c1 - b, false);
        }
        // λ θ >= v_ℓ  <=>  λ (B - y c2) >= y c1
        let y = self.v[ell] * (1.0 - SCREEN_REL);
        apply(b - y * c2, y * c1, true);
        let y = self.v[ell - 1] * (1.0 + SCREEN_REL);
        apply(b - y * c2, y * c1, false);
        if !ok || lo > hi {
            return false;
        }
        let f_lo = if lo == 0.0 && eq.c > 0.0 {
            f64::INFINITY
        } else {
            eq.residual(lo)
        };
        let f_hi = if hi.is_infinite() {
            -1.0
        } else {
            eq.residual(hi)
        };
        f_lo >= -SCREEN_F && f_hi <= SCREEN_F
    }
}

fn check_k(canon: &CanonicalVector, k: usize) -> Result<()> {
    if k == 0 || k > canon.dim() {
        return Err(Error::KOutOfRange { k, d: canon.dim() });
    }
    Ok(())
}

fn trivial(canon: &CanonicalVector, k: usize) -> TraceDistSolution {
    let v = canon.values().to_vec();
    TraceDistSolution {
        lambda: 0.0,
        r: 0,
        ell: canon.dim() + 1,
        theta: 0.0,
        m_tilde: v.clone(),
        m: v,
        k,
    }
}

/// Computes `T_k(v)`, the optimal measurement and its window parameters.
pub fn solve(canon: &CanonicalVector, k: usize) -> Result<TraceDistSolution> {
    solve_with(canon, k, true)
}

/// Same as [`solve`] but runs the cubic solve for every `(r, ℓ)` pair.
/// Quadratically more root solves; intended for cross-checking the screen.
pub fn solve_exhaustive(canon: &CanonicalVector, k: usize) -> Result<TraceDistSolution> {
    solve_with(canon, k, false)
}

fn solve_with(canon: &CanonicalVector, k: usize, screened: bool) -> Result<TraceDistSolution> {
    check_k(canon, k)?;
    let support = canon.support();
    if support <= k {
        return Ok(trivial(canon, k));
    }
    let prep = Prep::new(&canon.values()[..support]);
    let d = prep.d;
    for r in 0..k {
        for ell in k + 1..=d + 1 {
            let (eq, b) = prep.equation(k, r, ell);
            if screened && !prep.screen(k, r, ell, b, &eq) {
                continue;
            }
            for lambda in cubic_positive_roots(eq.a, eq.b2, eq.c1, eq.c2, eq.c)? {
                if prep.violation(k, r, ell, b, &eq, lambda) <= 0.0 {
                    return Ok(finish(canon, &prep, k, r, ell, lambda));
                }
            }
        }
    }
    Err(nearest_miss(&prep, k))
}

fn nearest_miss(prep: &Prep, k: usize) -> Error {
    let mut best = (0, 0, f64::NAN, f64::INFINITY);
    for r in 0..k {
        for ell in k + 1..=prep.d + 1 {
            let (eq, b) = prep.equation(k, r, ell);
            let roots = cubic_positive_roots(eq.a, eq.b2, eq.c1, eq.c2, eq.c).unwrap_or_default();
            for lambda in roots {
                let viol = prep.violation(k, r, ell, b, &eq, lambda);
                if viol < best.3 {
                    best = (r, ell, lambda, viol);
                }
            }
        }
    }
    Error::NoAcceptingTriple {
        r: best.0,
        ell: best.1,
        lambda: best.2,
        violation: best.3,
    }
}

/// Rebuilds the coefficients by direct summation (avoiding the cancellation
/// in tail-sum differences), re-polishes `λ` and assembles `m`.
fn finish(
    canon: &CanonicalVector,
    prep: &Prep,
    k: usize,
    r: usize,
    ell: usize,
    lambda0: f64,
) -> TraceDistSolution {
    let v = &prep.v;
    let b: f64 = (k - r..ell).map(|j| v[j]).sum();
    let eq = NormEquation {
        a: (1..k - r).map(|j| v[j] * v[j]).sum(),
        b2: b * b,
        c1: (r + 1) as f64,
        c2: (ell - k + r) as f64,
        c: (ell..=prep.d).map(|j| v[j] * v[j]).sum(),
    };
    let mut lambda = lambda0;
    for _ in 0..3 {
        let f = eq.residual(lambda);
        let g = eq.derivative(lambda);
        let next = lambda - f / g;
        if next > 0.0 && next.is_finite() && eq.residual(next).abs() < f.abs() {
            lambda = next;
        } else {
            break;
        }
    }
    let theta = b / (eq.c1 + eq.c2 * lambda);
    let mut m_tilde = alloc::vec![0.0; canon.dim()];
    for j in 1..=prep.d {
        m_tilde[j - 1] = if j < k - r {
            v[j] / (1.0 + lambda)
        } else if j < ell {
            theta
        } else {
            v[j] / lambda
        };
    }
    let norm = m_tilde.iter().map(|x| x * x).sum::<f64>().sqrt();
    let m = m_tilde.iter().map(|x| x / norm).collect();
    TraceDistSolution {
        lambda,
        r,
        ell,
        theta,
        m_tilde,
        m,
        k,
    }
}

/// Builds the optimal mixed approximation as a samplable ensemble.
pub fn build_ensemble(
    sol: &TraceDistSolution,
    canon: &CanonicalVector,
    fit_tol: f64,
) -> Result<SparseEnsemble> {
    if sol.m_tilde.len() != canon.dim() {
        return Err(Error::DimensionMismatch {
            expected: canon.dim(),
            found: sol.m_tilde.len(),
        });
    }
    let k = sol.k;
    if sol.lambda == 0.0 {
        return Ok(SparseEnsemble::point_mass(
            EnsembleKind::TraceDistance,
            canon.clone(),
            k,
        ));
    }
    let v = canon.values();
    let window = sol.window();
    let q: Vec<f64> = window
        .clone()
        .map(|j| v[j] / sol.theta - sol.lambda)
        .collect();
    let prefix = sol.m_tilde[..k - sol.r - 1].to_vec();
    SparseEnsemble::new(
        EnsembleKind::TraceDistance,
        canon.clone(),
        k,
        prefix,
        window,
        sol.theta,
        sol.r + 1,
        q,
        sol.lambda,
        fit_tol,
    )
}

/// Diagnostics for a claimed optimal solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimalityReport {
    /// `‖(v vᵀ - σ) m - λ m‖₂`.
    pub eigen_residual: f64,
    /// `|‖u‖²_(k,*) + ‖m‖²_(k) - 2 ⟨u, m⟩|` with `u = ⟨v, m⟩ v - λ m`.
    pub fenchel_gap: f64,
    /// `T(v, σ) - λ`, with the trace distance computed spectrally.
    pub spectral_gap: f64,
    /// Second largest eigenvalue of `v vᵀ - σ`.
    pub second_eigenvalue: f64,
}

/// Checks the eigenvector equation, the Fenchel optimality condition and the
/// spectral trace distance. `sigma` is in the canonical basis.
pub fn verify_optimality(
    canon: &CanonicalVector,
    sol: &TraceDistSolution,
    sigma: &DMatrix<f64>,
) -> Result<OptimalityReport> {
    let d = canon.dim();
    if sigma.nrows() != d || sigma.ncols() != d || sol.m.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: sigma.nrows(),
        });
    }
    let v = DVector::from_column_slice(canon.values());
    let m = DVector::from_column_slice(&sol.m);
    let diff = &v * v.transpose() - sigma;
    let eigen_residual = (&diff * &m - &m * sol.lambda).norm();
    let vm = v.dot(&m);
    let u: Vec<f64> = (0..d).map(|i| vm * v[i] - sol.lambda * m[i]).collect();
    let ks = k_support_norm_of(&u, sol.k)?.value;
    let tk = top_k_norm_of(&sol.m, sol.k)?;
    let um: f64 = u.iter().zip(&sol.m).map(|(a, b)| a * b).sum();
    let fenchel_gap = (ks * ks + tk * tk - 2.0 * um).abs();
    let spectral_gap = trace_distance_pure_real(canon.values(), sigma) - sol.lambda;
    let mut eig = symmetric_eigenvalues(&diff);
    eig.sort_by(|a, b| b.total_cmp(a));
    let second_eigenvalue = eig.get(1).copied().unwrap_or(f64::NEG_INFINITY);
    Ok(OptimalityReport {
        eigen_residual,
        fenchel_gap,
        spectral_gap,
        second_eigenvalue,
    })
}

/// Convenience: solve, build the ensemble and draw one state in the
/// original coordinates.
pub fn sample_truncation<R: Rng + ?Sized>(
    canon: &CanonicalVector,
    k: usize,
    rng: &mut R,
) -> Result<Vec<crate::Complex64>> {
    let sol = solve(canon, k)?;
    let ens = build_ensemble(&sol, canon, crate::ensemble::DEFAULT_FIT_TOL)?;
    canon.restore(&ens.sample_state(rng))
}
