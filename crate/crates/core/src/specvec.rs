//! Canonical target vectors and the norms built on them.
//!
//! Every quantity in this crate is invariant under permuting coordinates and
//! multiplying them by phases, so targets are first reduced to a
//! [`CanonicalVector`]: nonincreasing nonnegative magnitudes plus the
//! permutation and phases needed to map results back.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;

use crate::{Error, Result};

/// A unit vector split into sorted magnitudes, a permutation and phases.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalVector {
    values: Vec<f64>,
    perm: Vec<usize>,
    phases: Vec<Complex64>,
}

/// `s[j] = values[j] + values[j + 1] + ...`, with a trailing zero so that
/// `s.len() == d + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TailSums(pub Vec<f64>);

impl TailSums {
    pub fn of(values: &[f64]) -> Self {
        let mut s = alloc::vec![0.0; values.len() + 1];
        for j in (0..values.len()).rev() {
            s[j] = s[j + 1] + values[j];
        }
        TailSums(s)
    }

    /// 1-indexed access matching `s_j` in the formulas (`j` in `1..=d+1`).
    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        self.0[j - 1]
    }
}

/// Value of the `k`-support norm together with its active window parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KSupportResult {
    pub value: f64,
    /// The flat region holds the canonical positions `k - r ..= d` (1-indexed).
    pub r: usize,
}

impl CanonicalVector {
    /// Sorts magnitudes (stably, so ties keep their original order), strips
    /// phases and renormalizes to unit Euclidean norm.
    pub fn new(v: &[Complex64]) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidInput("empty vector"));
        }
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry"));
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroState);
        }
        let mags: Vec<f64> = v.iter().map(|z| z.norm() / norm).collect();
        let phases = v
            .iter()
            .map(|z| {
                let r = z.norm();
                if r == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    z / r
                }
            })
            .collect();
        let mut perm: Vec<usize> = (0..v.len()).collect();
        perm.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]));
        let values = perm.iter().map(|&i| mags[i]).collect();
        Ok(CanonicalVector {
            values,
            perm,
            phases,
        })
    }

    pub fn from_real(v: &[f64]) -> Result<Self> {
        let z: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::new(&z)
    }

    /// Builds a canonical vector from magnitudes that are already sorted and
    /// nonnegative (identity permutation, unit phases). Renormalizes.
    pub fn from_sorted(values: &[f64]) -> Result<Self> {
        if values.windows(2).any(|w| w[0] < w[1]) || values.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidInput(
                "values must be nonnegative and nonincreasing",
            ));
        }
        Self::from_real(values)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn phases(&self) -> &[Complex64] {
        &self.phases
    }

    /// Number of nonzero magnitudes.
    pub fn support(&self) -> usize {
        self.values.iter().take_while(|&&x| x > 0.0).count()
    }

    pub fn tail_sums(&self) -> TailSums {
        TailSums::of(&self.values)
    }

    /// Maps a real vector given in canonical order back to the original
    /// coordinates, reattaching the phases.
    pub fn restore(&self, w: &[f64]) -> Result<Vec<Complex64>> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: w.len(),
            });
        }
        let mut out = alloc::vec![Complex64::new(0.0, 0.0); self.dim()];
        for (c, &orig) in self.perm.iter().enumerate() {
            out[orig] = self.phases[orig] * w[c];
        }
        Ok(out)
    }

    /// The normalized input vector in its original coordinates.
    pub fn original(&self) -> Vec<Complex64> {
        self.restore(&self.values)
            .expect("length matches by construction")
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.dim() {
            Err(Error::KOutOfRange { k, d: self.dim() })
        } else {
            Ok(())
        }
    }

    /// Best fidelity with any `k`-sparse state.
    pub fn top_k_norm(&self, k: usize) -> Result<f64> {
        self.check_k(k)?;
        Ok(top_k_sorted(&self.values, k))
    }

    pub fn k_support_norm(&self, k: usize) -> Result<KSupportResult> {
        self.check_k(k)?;
        Ok(k_support_sorted(&self.values, k))
    }

    pub fn fidelity_k(&self, k: usize) -> Result<f64> {
        self.top_k_norm(k)
    }

    /// Optimal robustness; equals the squared `k`-support norm minus one.
    pub fn robustness_k(&self, k: usize) -> Result<f64> {
        let ks = self.k_support_norm(k)?;
        Ok((ks.value * ks.value - 1.0).max(0.0))
    }
}

pub(crate) fn top_k_sorted(values: &[f64], k: usize) -> f64 {
    values[..k].iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `k`-support norm of a nonincreasing nonnegative vector.
///
/// `r` is found by a linear scan for the index with
/// `v[k-r-1] > s[k-r] / (r+1) >= v[k-r]` (1-indexed, `v[0] = +inf`).
/// Under rounding near ties, the smallest `r` satisfying the right-hand
/// inequality is used.
pub(crate) fn k_support_sorted(values: &[f64], k: usize) -> KSupportResult {
    let d = values.len();
    debug_assert!(k >= 1 && k <= d);
    let tail = TailSums::of(values);
    let v1 = |j: usize| if j == 0 { f64::INFINITY } else { values[j - 1] };
    let mut fallback = None;
    let mut chosen = None;
    for r in 0..k {
        let avg = tail.at(k - r) / (r + 1) as f64;
        let right = avg >= v1(k - r);
        if right && fallback.is_none() {
            fallback = Some(r);
        }
        if right && v1(k - r - 1) > avg {
            chosen = Some(r);
            break;
        }
    }
    let r = chosen.or(fallback).unwrap_or(k - 1);
    let head: f64 = values[..k - r - 1].iter().map(|x| x * x).sum();
    let s = tail.at(k - r);
    KSupportResult {
        value: (head + s * s / (r + 1) as f64).sqrt(),
        r,
    }
}

/// `k`-support norm of an arbitrary real vector (magnitudes are sorted
/// internally). Used for optimality diagnostics on unnormalized vectors.
pub fn k_support_norm_of(x: &[f64], k: usize) -> Result<KSupportResult> {
    let sorted = sorted_magnitudes(x);
    if k == 0 || k > sorted.len() {
        return Err(Error::KOutOfRange { k, d: sorted.len() });
    }
    Ok(k_support_sorted(&sorted, k))
}

/// Top-`k` norm of an arbitrary real vector.
pub fn top_k_norm_of(x: &[f64], k: usize) -> Result<f64> {
    let sorted = sorted_magnitudes(x);
    if k == 0 || k > sorted.len() {
        return Err(Error::KOutOfRange { k, d: sorted.len() });
    }
    Ok(top_k_sorted(&sorted, k))
}

fn sorted_magnitudes(x: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}
