//! Independent reference computations: subset enumeration, a first-order
//! search for `T_k` and Monte Carlo moments of an ensemble.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::density::trace_distance_pure_real;
use crate::ensemble::SparseEnsemble;
use crate::{Error, Result};

const MAX_ENUM: usize = 20;

/// The full distribution over size-`ell` subsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Enumeration {
    pub ell: usize,
    /// Subsets as bit masks over the items.
    pub subsets: Vec<u32>,
    pub probs: Vec<f64>,
    pub q: Vec<f64>,
    pub pairs: DMatrix<f64>,
    /// Weights in the gauge `Σ exp(-μ_i) = ell`.
    pub mu: Vec<f64>,
}

impl Enumeration {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// Probability of the subset given as sorted indices.
    pub fn probability_of(&self, subset: &[usize]) -> f64 {
        let mask = subset.iter().fold(0u32, |m, &i| m | (1 << i));
        self.subsets
            .iter()
            .position(|&s| s == mask)
            .map_or(0.0, |i| self.probs[i])
    }

    /// Total variation distance to another distribution over the same
    /// subsets (same ordering).
    pub fn total_variation(&self, other: &Enumeration) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// All masks with `ell` bits set among the low `n` bits, ascending.
pub fn subset_masks(n: usize, ell: usize) -> Vec<u32> {
    let mut out = Vec::new();
    if ell == 0 {
        out.push(0);
        return out;
    }
    if ell > n {
        return out;
    }
    let mut m: u32 = (1 << ell) - 1;
    let limit: u64 = 1 << n;
    while (m as u64) < limit {
        out.push(m);
        // Gosper's hack: next integer with the same popcount.
        let c = m & m.wrapping_neg();
        let r = m + c;
        m = (((r ^ m) >> 2) / c) | r;
        if r == 0 {
            break;
        }
    }
    out
}

/// Neumaier-compensated sum.
fn ksum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Enumerates the Gibbs distribution for weights `mu`.
pub fn enumerate_maxent(mu: &[f64], ell: usize) -> Result<Enumeration> {
    let n = mu.len();
    if n > MAX_ENUM {
        return Err(Error::EnumerationTooLarge { n });
    }
    if ell == 0 || ell > n {
        return Err(Error::EllOutOfRange { ell, n });
    }
    let subsets = subset_masks(n, ell);
    let energies: Vec<f64> = subsets
        .iter()
        .map(|&s| ksum((0..n).filter(|&i| s >> i & 1 == 1).map(|i| mu[i])))
        .collect();
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|e| (e0 - e).exp()).collect();
    let z = ksum(weights.iter().copied());
    let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let mut pairs = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = ksum(
                subsets
                    .iter()
                    .zip(&probs)
                    .filter(|(&s, _)| s >> i & 1 == 1 && s >> j & 1 == 1)
                    .map(|(_, &p)| p),
            );
            pairs[(i, j)] = v;
            pairs[(j, i)] = v;
        }
    }
    let mut q: Vec<f64> = (0..n).map(|i| pairs[(i, i)]).collect();
    let total = ksum(q.iter().copied());
    for x in q.iter_mut() {
        *x *= ell as f64 / total;
    }
    for i in 0..n {
        pairs[(i, i)] = q[i];
    }
    let shift = ksum(mu.iter().map(|&m| (-m).exp())).ln() - (ell as f64).ln();
    Ok(Enumeration {
        ell,
        subsets,
        probs,
        q,
        pairs,
        mu: mu.iter().map(|m| m + shift).collect(),
    })
}

/// Max-entropy distribution with marginals `q_target`, found by Newton's
/// method on the dual using enumerated moments. Converges to `‖q - q*‖_∞ ≤
/// 1e-12` or returns the best iterate after 500 steps.
pub fn enumerate_maxent_for_marginals(q_target: &[f64]) -> Result<Enumeration> {
    let n = q_target.len();
    if n > MAX_ENUM {
        return Err(Error::EnumerationTooLarge { n });
    }
    let sum = q_target.iter().sum::<f64>();
    let ell = sum.round() as usize;
    if (sum - ell as f64).abs() > 1e-6 {
        return Err(Error::MarginalSum { sum });
    }
    let dual = |e: &Enumeration| -> f64 {
        // ln Z in the gauge of e.mu, recomputed directly.
        let lz = ksum(
            e.subsets
                .iter()
                .map(|&s| (-ksum((0..n).filter(|&i| s >> i & 1 == 1).map(|i| e.mu[i]))).exp()),
        )
        .ln();
        ksum(e.mu.iter().zip(q_target).map(|(m, q)| m * q)) + lz
    };
    let mut mu: Vec<f64> = q_target.iter().map(|&q| ((1.0 - q) / q).ln()).collect();
    let mut cur = enumerate_maxent(&mu, ell)?;
    let mut g = dual(&cur);
    for _ in 0..500 {
        let resid: Vec<f64> = q_target.iter().zip(&cur.q).map(|(a, b)| a - b).collect();
        let rmax = resid.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if rmax <= 1e-12 {
            break;
        }
        let mut k = DMatrix::from_fn(n, n, |i, j| cur.pairs[(i, j)] - cur.q[i] * cur.q[j]);
        k.add_scalar_mut(1.0 / n as f64);
        let rhs = DVector::from_iterator(n, resid.iter().map(|x| -x));
        let Some(step) = k.lu().solve(&rhs) else {
            break;
        };
        let slope: f64 = resid.iter().zip(step.iter()).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = mu.iter().zip(step.iter()).map(|(m, s)| m + t * s).collect();
            let e = enumerate_maxent(&trial, ell)?;
            let ge = dual(&e);
            let rt = q_target
                .iter()
                .zip(&e.q)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if ge <= g + 1e-4 * t * slope || rt < rmax {
                mu = e.mu.clone();
                cur = e;
                g = ge;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(cur)
}

/// Best value of `⟨m, v⟩² - ‖m‖²_(k)` found by projected gradient ascent.
#[derive(Clone, Debug, PartialEq)]
pub struct BruteForceResult {
    pub value: f64,
    /// Maximizer (unit, nonincreasing, nonnegative; canonical order).
    pub m: Vec<f64>,
}

/// Projection onto `{x_1 >= x_2 >= ... >= x_d >= 0}` (pool adjacent
/// violators, then clip).
fn project_monotone(x: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(x.len());
    for &xi in x {
        blocks.push((xi, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a >= b {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().expect("nonempty");
            *last = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
        }
    }
    let mut out = Vec::with_capacity(x.len());
    for (val, cnt) in blocks {
        out.extend(core::iter::repeat_n(val.max(0.0), cnt));
    }
    out
}

fn objective(v: &[f64], m: &[f64], k: usize) -> f64 {
    let ip: f64 = v.iter().zip(m).map(|(a, b)| a * b).sum();
    ip * ip - m[..k].iter().map(|x| x * x).sum::<f64>()
}

fn normalize(x: &mut [f64]) -> bool {
    let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    x.iter_mut().for_each(|a| *a /= n);
    true
}

fn ascend(v: &[f64], k: usize, start: Vec<f64>) -> (f64, Vec<f64>) {
    let d = v.len();
    let mut m = project_monotone(&start);
    if !normalize(&mut m) {
        m = alloc::vec![0.0; d];
        m[0] = 1.0;
    }
    let mut f = objective(v, &m, k);
    let mut eta = 0.5;
    for _ in 0..20_000 {
        let ip: f64 = v.iter().zip(&m).map(|(a, b)| a * b).sum();
        let grad: Vec<f64> = (0..d)
            .map(|i| 2.0 * ip * v[i] - if i < k { 2.0 * m[i] } else { 0.0 })
            .collect();
        let mut improved = false;
        while eta > 1e-12 {
            let trial: Vec<f64> = m.iter().zip(&grad).map(|(a, g)| a + eta * g).collect();
            let mut p = project_monotone(&trial);
            if normalize(&mut p) {
                let ft = objective(v, &p, k);
                if ft > f {
                    let gain = ft - f;
                    m = p;
                    f = ft;
                    improved = true;
                    eta *= 1.5;
                    if gain < 1e-15 {
                        return (f, m);
                    }
                    break;
                }
            }
            eta *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (f, m)
}

/// First-order estimate of `T_k(v)` for a nonincreasing nonnegative unit `v`.
///
/// The objective is smooth on the cone of nonincreasing nonnegative vectors,
/// where the top-`k` norm is the norm of the first `k` coordinates, so the
/// ascent works there. Uses `restarts` Gaussian starts, the vector `v`
/// itself and an optional extra start.
pub fn brute_force_tk<R: Rng + ?Sized>(
    v: &[f64],
    k: usize,
    restarts: usize,
    rng: &mut R,
    extra_start: Option<&[f64]>,
) -> Result<BruteForceResult> {
    let d = v.len();
    if k == 0 || k > d {
        return Err(Error::KOutOfRange { k, d });
    }
    if v.windows(2).any(|w| w[0] < w[1]) || v.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidInput(
            "v must be nonnegative and nonincreasing",
        ));
    }
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(restarts + 2);
    starts.push(v.to_vec());
    if let Some(s) = extra_start {
        starts.push(s.to_vec());
    }
    for _ in 0..restarts {
        starts.push(
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z.abs()
                })
                .collect(),
        );
    }
    let mut best = BruteForceResult {
        value: f64::NEG_INFINITY,
        m: Vec::new(),
    };
    for s in starts {
        let (f, m) = ascend(v, k, s);
        if f > best.value {
            best = BruteForceResult { value: f, m };
        }
    }
    best.value = best.value.max(0.0);
    Ok(best)
}

/// Empirical moments of `w† M w` and of `T(v, w)` over ensemble draws,
/// together with the variance-lemma bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentReport {
    pub mean_estimate: f64,
    pub sample_variance: f64,
    /// Standard error of `sample_variance`.
    pub variance_std_error: f64,
    pub mean_trace_distance: f64,
    pub trace_distance_std_error: f64,
    pub n_samples: usize,
    /// `T(v, σ)` for the ensemble's density matrix.
    pub t_sigma: f64,
    /// `√T(v, σ)`.
    pub bias_bound: f64,
    /// `T(v, σ) (1 + √T(v, σ))²`.
    pub variance_bound: f64,
}

/// Samples `n` states and reports moment estimates. `m` is a real symmetric
/// observable in the canonical basis with operator norm at most 1.
pub fn monte_carlo_moments<R: Rng + ?Sized>(
    ens: &SparseEnsemble,
    m: &DMatrix<f64>,
    n: usize,
    rng: &mut R,
) -> Result<MomentReport> {
    let d = ens.canon().dim();
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: m.nrows(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidInput("need at least two samples"));
    }
    let v = ens.canon().values();
    let t_sigma = trace_distance_pure_real(v, &ens.density_matrix()).max(0.0);
    let mut xs = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    let mut support = Vec::with_capacity(ens.k());
    for _ in 0..n {
        let w = ens.sample_state(rng);
        support.clear();
        support.extend((0..d).filter(|&i| w[i] != 0.0));
        let mut x = 0.0;
        for &i in &support {
            for &j in &support {
                x += w[i] * m[(i, j)] * w[j];
            }
        }
        let ip: f64 = support.iter().map(|&i| w[i] * v[i]).sum();
        xs.push(x);
        ts.push((1.0 - ip * ip).max(0.0).sqrt());
    }
    let nf = n as f64;
    // Centering on the first draw makes a constant sample exactly zero.
    let x0 = xs[0];
    let shift = xs.iter().map(|x| x - x0).sum::<f64>() / nf;
    let mean = x0 + shift;
    let m2 = xs.iter().map(|x| (x - x0 - shift).powi(2)).sum::<f64>() / nf;
    let m4 = xs.iter().map(|x| (x - x0 - shift).powi(4)).sum::<f64>() / nf;
    let sample_variance = m2 * nf / (nf - 1.0);
    let variance_std_error = ((m4 - m2 * m2).max(0.0) / nf).sqrt();
    let tmean = ts.iter().sum::<f64>() / nf;
    let tvar = ts.iter().map(|t| (t - tmean).powi(2)).sum::<f64>() / (nf - 1.0);
    let bias_bound = t_sigma.sqrt();
    Ok(MomentReport {
        mean_estimate: mean,
        sample_variance,
        variance_std_error,
        mean_trace_distance: tmean,
        trace_distance_std_error: (tvar / nf).sqrt(),
        n_samples: n,
        t_sigma,
        bias_bound,
        variance_bound: t_sigma * (1.0 + bias_bound).powi(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn masks_are_complete() {
        assert_eq!(subset_masks(5, 2).len(), 10);
        assert_eq!(subset_masks(20, 10).len(), 184_756);
        assert_eq!(subset_masks(4, 4), alloc::vec![15]);
        assert!(subset_masks(3, 4).is_empty());
    }

    #[test]
    fn uniform_enumeration() {
        let e = enumerate_maxent(&[0.0; 5], 2).unwrap();
        for p in &e.probs {
            assert!((p - 0.1).abs() < 1e-15);
        }
        assert!((e.q.iter().sum::<f64>() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn too_large() {
        assert!(matches!(
            enumerate_maxent(&[0.0; 21], 2),
            Err(Error::EnumerationTooLarge { n: 21 })
        ));
    }

    #[test]
    fn marginal_target_enumeration() {
        let q = [0.9, 0.7, 0.3, 0.1];
        let e = enumerate_maxent_for_marginals(&q).unwrap();
        for (a, b) in e.q.iter().zip(q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_projection() {
        let p = project_monotone(&[0.1, 0.5, 0.2, -0.3]);
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] - 0.3).abs() < 1e-15);
        assert_eq!(p[3], 0.0);
    }

    #[test]
    fn brute_force_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = [0.5; 4];
        let r = brute_force_tk(&u, 2, 64, &mut rng, None).unwrap();
        assert!((r.value - 0.5).abs() < 1e-6);
        let q = [0.75f64.sqrt(), 0.5];
        let r = brute_force_tk(&q, 1, 64, &mut rng, None).unwrap();
        assert!((r.value - (0.25f64 * 0.75).sqrt()).abs() < 1e-6);
    }
}
