//! Power-law target states `v_i ∝ i^{-γ}` and sweeps of the optimal
//! errors against the deterministic truncation error.

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;

use crate::specvec::CanonicalVector;
use crate::{tracedist, Error, Result};

/// `Σ_{i=1}^d i^{-2γ}`.
pub fn normalizer(d: usize, gamma: f64) -> f64 {
    (1..=d).map(|i| (i as f64).powf(-2.0 * gamma)).sum()
}

/// The unit vector with entries `i^{-γ} / √Z`.
pub fn powerlaw_vector(d: usize, gamma: f64) -> Result<CanonicalVector> {
    if d < 2 {
        return Err(Error::InvalidInput("dimension must be at least 2"));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput("gamma must be finite and nonnegative"));
    }
    let z = normalizer(d, gamma).sqrt();
    let v: Vec<f64> = (1..=d).map(|i| (i as f64).powf(-gamma) / z).collect();
    CanonicalVector::from_sorted(&v)
}

/// One point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub d: usize,
    pub k: usize,
    /// Deterministic truncation error `1 - F_k²`.
    pub epsilon: f64,
    pub t_k: f64,
    pub r_k: f64,
}

/// Evaluates every `k` in `ks` for the power law with exponent `gamma`.
pub fn sweep(d: usize, gamma: f64, ks: &[usize]) -> Result<Vec<SweepRow>> {
    let canon = powerlaw_vector(d, gamma)?;
    let v = canon.values();
    // Tail sums of squares give ε without the cancellation in 1 - F².
    let mut tail = alloc::vec![0.0; d + 1];
    for i in (0..d).rev() {
        tail[i] = tail[i + 1] + v[i] * v[i];
    }
    ks.iter()
        .map(|&k| {
            let sol = tracedist::solve(&canon, k)?;
            Ok(SweepRow {
                gamma,
                d,
                k,
                epsilon: tail[k],
                t_k: sol.lambda,
                r_k: canon.robustness_k(k)?,
            })
        })
        .collect()
}

/// Least-squares slope of `ln T_k` against `ln ε` over the `points` rows with
/// the smallest positive `ε`. `None` if fewer than two usable rows.
pub fn fit_exponent(rows: &[SweepRow], points: usize) -> Option<f64> {
    let mut usable: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.epsilon > 0.0 && r.t_k > 0.0)
        .collect();
    usable.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    usable.truncate(points);
    if usable.len() < 2 {
        return None;
    }
    let n = usable.len() as f64;
    let xs: Vec<f64> = usable.iter().map(|r| r.epsilon.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|r| r.t_k.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}
