//! Maximum-entropy distributions over fixed-size subsets.
//!
//! For weights `μ` over `n` items and a subset size `ℓ`, the model is
//! `p(S) ∝ exp(-Σ_{i∈S} μ_i)` on subsets with `|S| = ℓ` (the conditional
//! Poisson design). Partition values are elementary symmetric polynomials of
//! `w_i = exp(-μ_i)`, kept in prefix and suffix tables.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;
use rand::Rng;
use twofloat::TwoFloat;

use crate::{Error, Result};

const BOUNDARY: f64 = 1e-12;
const SUM_TOL: f64 = 1e-6;
/// Pairs whose weight ratio is within this of 1 are computed directly rather
/// than through the two-item difference formula.
const NEAR_TIE: f64 = 1e-4;
const MAX_STEP: f64 = 10.0;

/// Target inclusion probabilities, each strictly inside `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalVector {
    q: Vec<f64>,
    ell: usize,
}

impl MarginalVector {
    /// The subset size is the rounded sum, which must be within `1e-6` of an
    /// integer in `1..=n`.
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidInput("empty marginal vector"));
        }
        for (index, &value) in q.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::InvalidInput("non-finite marginal"));
            }
            if value <= BOUNDARY || value >= 1.0 - BOUNDARY {
                return Err(Error::BoundaryMarginal { index, value });
            }
        }
        let sum: f64 = q.iter().sum();
        let ell = sum.round();
        if (sum - ell).abs() > SUM_TOL || ell < 1.0 || ell > q.len() as f64 {
            return Err(Error::MarginalSum { sum });
        }
        Ok(MarginalVector {
            q,
            ell: ell as usize,
        })
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Inclusion probabilities of pairs; `Q[(i, i)] = q_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMarginals(pub DMatrix<f64>);

impl PairMarginals {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// A sampled subset: sorted item indices and the number of rejected rounds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsetSample {
    pub indices: Vec<usize>,
    pub restarts: usize,
}

/// Log partition tables: `table[i][t] = ln e_t(items)` stored row-major with
/// `ell + 1` columns.
#[derive(Clone, Debug, PartialEq)]
struct LogTable {
    cols: usize,
    data: Vec<f64>,
}

impl LogTable {
    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    fn get(&self, i: usize, t: usize) -> f64 {
        self.data[i * self.cols + t]
    }
}

/// Gibbs distribution over size-`ell` subsets of `n` items.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxEntModel {
    ell: usize,
    mu: Vec<f64>,
    logw: Vec<f64>,
    /// `prefix.row(i)` covers items `0..i`.
    prefix: LogTable,
    /// `suffix.row(i)` covers items `i..n`.
    suffix: LogTable,
    log_z: f64,
    linear: bool,
    /// Inclusion odds factor for the rejection sampler: item `i` is drawn
    /// with probability `c w_i / (1 + c w_i)`, `Σ = ell`. `None` when `ell = n`.
    bernoulli: Option<Vec<f64>>,
}

#[inline]
fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn lse(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Shift `μ` so that `Σ exp(-μ_i) = ell`; returns the shifted weights and
/// the shift `c` (`μ' = μ + c`).
fn gauge(mu: &[f64], ell: usize) -> Result<(Vec<f64>, f64)> {
    if ell == 0 || ell > mu.len() {
        return Err(Error::EllOutOfRange { ell, n: mu.len() });
    }
    for (index, &value) in mu.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteWeight { index, value });
        }
    }
    let c = lse(mu.iter().map(|&m| -m)) - (ell as f64).ln();
    let shifted: Vec<f64> = mu.iter().map(|&m| m + c).collect();
    for (index, &value) in shifted.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteWeight { index, value });
        }
    }
    Ok((shifted, c))
}

/// Linear arithmetic cannot overflow or underflow when every partial
/// product of at most `ell` weights, times the subset count, stays within
/// `e^±690`.
fn linear_is_safe(logw: &[f64], ell: usize) -> bool {
    let lmax = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lmin = logw.iter().copied().fold(f64::INFINITY, f64::min);
    let n = logw.len() as f64;
    let l = ell as f64;
    l * (n.ln() + lmax.max(0.0)) < 690.0 && l * lmin.min(0.0) > -690.0
}

fn build_tables(logw: &[f64], ell: usize, linear: bool) -> (LogTable, LogTable) {
    let n = logw.len();
    let cols = ell + 1;
    let mut pre = vec![0.0; (n + 1) * cols];
    let mut suf = vec![0.0; (n + 1) * cols];
    if linear {
        let w: Vec<f64> = logw.iter().map(|x| x.exp()).collect();
        pre[0] = 1.0;
        for i in 0..n {
            let (prev, next) = pre.split_at_mut((i + 1) * cols);
            let prev = &prev[i * cols..];
            next[0] = 1.0;
            for t in 1..cols {
                next[t] = prev[t] + w[i] * prev[t - 1];
            }
        }
        suf[n * cols] = 1.0;
        for i in (0..n).rev() {
            let (cur, next) = suf.split_at_mut((i + 1) * cols);
            let cur = &mut cur[i * cols..];
            cur[0] = 1.0;
            for t in 1..cols {
                cur[t] = next[t] + w[i] * next[t - 1];
            }
        }
        for x in pre.iter_mut().chain(suf.iter_mut()) {
            *x = x.ln();
        }
    } else {
        pre.fill(f64::NEG_INFINITY);
        suf.fill(f64::NEG_INFINITY);
        pre[0] = 0.0;
        for i in 0..n {
            let (prev, next) = pre.split_at_mut((i + 1) * cols);
            let prev = &prev[i * cols..];
            next[0] = 0.0;
            for t in 1..cols {
                next[t] = lse2(prev[t], logw[i] + prev[t - 1]);
            }
        }
        suf[n * cols] = 0.0;
        for i in (0..n).rev() {
            let (cur, next) = suf.split_at_mut((i + 1) * cols);
            let cur = &mut cur[i * cols..];
            cur[0] = 0.0;
            for t in 1..cols {
                cur[t] = lse2(next[t], logw[i] + next[t - 1]);
            }
        }
    }
    (LogTable { cols, data: pre }, LogTable { cols, data: suf })
}

/// Solves `Σ σ(s + a_i) = ell` for `s` and returns `σ(s + a_i)`.
fn bernoulli_probs(logw: &[f64], ell: usize) -> Option<Vec<f64>> {
    let n = logw.len();
    if ell == n {
        return None;
    }
    let sigmoid = |x: f64| {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    };
    let amax = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let amin = logw.iter().copied().fold(f64::INFINITY, f64::min);
    let l = ell as f64;
    let mut lo = (l / n as f64).ln() - amax - 1.0;
    let mut hi = (l / (n - ell) as f64).ln() - amin + 1.0;
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (mut h, mut dh) = (-l, 0.0);
        for &a in logw {
            let p = sigmoid(s + a);
            h += p;
            dh += p * (1.0 - p);
        }
        if h > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        if h.abs() <= 1e-13 * l {
            break;
        }
        let newton = s - h / dh;
        s = if dh > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * s.abs().max(1.0) {
            break;
        }
    }
    Some(logw.iter().map(|&a| sigmoid(s + a)).collect())
}

impl MaxEntModel {
    /// Gauge-fixes `μ` and computes the partition tables.
    pub fn new(mu: &[f64], ell: usize) -> Result<Self> {
        let (mu, _) = gauge(mu, ell)?;
        let logw: Vec<f64> = mu.iter().map(|&m| -m).collect();
        let linear = linear_is_safe(&logw, ell);
        let (prefix, suffix) = build_tables(&logw, ell, linear);
        let log_z = suffix.get(0, ell);
        let bernoulli = bernoulli_probs(&logw, ell);
        Ok(MaxEntModel {
            ell,
            mu,
            logw,
            prefix,
            suffix,
            log_z,
            linear,
            bernoulli,
        })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Weights in the gauge `Σ exp(-μ_i) = ell`.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `ln Z(ell, [n])` in the fixed gauge.
    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    /// Whether the tables were built with linear (rather than log-domain)
    /// arithmetic.
    pub fn is_linear(&self) -> bool {
        self.linear
    }

    /// `ln Z(t, {i, ..., n-1})` in the fixed gauge (0-based `i`, `i <= n`).
    pub fn log_suffix_partition(&self, t: usize, i: usize) -> f64 {
        self.suffix.get(i, t)
    }

    /// Probability of a subset (any order); zero if its size is not `ell`.
    pub fn probability(&self, subset: &[usize]) -> f64 {
        if subset.len() != self.ell {
            return 0.0;
        }
        (subset.iter().map(|&i| self.logw[i]).sum::<f64>() - self.log_z).exp()
    }

    pub fn marginals(&self) -> Vec<f64> {
        let n = self.n();
        let l = self.ell;
        (0..n)
            .map(|i| {
                let pre = self.prefix.row(i);
                let suf = self.suffix.row(i + 1);
                let inner = lse((0..l).map(|t| pre[t] + suf[l - 1 - t]));
                (self.logw[i] + inner - self.log_z).exp()
            })
            .collect()
    }

    /// `ln e_{ell-2}` of all items except `i < j`, by folding the items
    /// between them into the prefix table.
    fn log_pair_partition(&self, i: usize, j: usize) -> f64 {
        let l = self.ell;
        let mut row: Vec<f64> = self.prefix.row(i)[..l - 1].to_vec();
        for m in i + 1..j {
            for t in (1..l - 1).rev() {
                row[t] = lse2(row[t], self.logw[m] + row[t - 1]);
            }
        }
        let suf = self.suffix.row(j + 1);
        lse((0..l - 1).map(|t| row[t] + suf[l - 2 - t]))
    }

    fn pair_direct(&self, i: usize, j: usize) -> f64 {
        (self.logw[i] + self.logw[j] + self.log_pair_partition(i, j) - self.log_z).exp()
    }

    pub fn pair_marginals(&self) -> PairMarginals {
        let n = self.n();
        let l = self.ell;
        let q = self.marginals();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = q[i];
        }
        if l == 1 {
            return PairMarginals(m);
        }
        if l == n {
            return PairMarginals(DMatrix::from_element(n, n, 1.0));
        }
        // Items with bitwise-equal weights share the same pair probability
        // with each other, so it is computed once per group.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.logw[a].total_cmp(&self.logw[b]).then(a.cmp(&b)));
        let mut group = vec![0usize; n];
        let mut g = 0;
        for w in 0..n {
            if w > 0 && self.logw[order[w]] != self.logw[order[w - 1]] {
                g += 1;
            }
            group[order[w]] = g;
        }
        let mut tied: Vec<Option<f64>> = vec![None; g + 1];
        for i in 0..n {
            for j in i + 1..n {
                let value = if group[i] == group[j] {
                    *tied[group[i]].get_or_insert_with(|| self.pair_direct(i, j))
                } else {
                    let (big, small) = if self.logw[i] >= self.logw[j] {
                        (i, j)
                    } else {
                        (j, i)
                    };
                    let rho = (self.logw[small] - self.logw[big]).exp();
                    if 1.0 - rho < NEAR_TIE {
                        self.pair_direct(i, j)
                    } else {
                        (q[small] - q[big] * rho) / (1.0 - rho)
                    }
                };
                m[(i, j)] = value;
                m[(j, i)] = value;
            }
        }
        PairMarginals(m)
    }

    /// Covariance of the inclusion indicators, `Q - q qᵀ` off the diagonal
    /// and `q (1 - q)` on it.
    pub fn covariance(&self) -> DMatrix<f64> {
        let pm = self.pair_marginals().0;
        let n = self.n();
        let q: Vec<f64> = (0..n).map(|i| pm[(i, i)]).collect();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                q[i] * (1.0 - q[i])
            } else {
                pm[(i, j)] - q[i] * q[j]
            }
        })
    }

    /// Exact sample by sequential inclusion decisions; `O(n)` per draw.
    pub fn sample_sequential<R: Rng + ?Sized>(&self, rng: &mut R) -> SubsetSample {
        let n = self.n();
        let mut need = self.ell;
        let mut out = Vec::with_capacity(self.ell);
        for i in 0..n {
            if need == 0 {
                break;
            }
            if n - i == need {
                out.extend(i..n);
                break;
            }
            let p =
                (self.logw[i] + self.suffix.get(i + 1, need - 1) - self.suffix.get(i, need)).exp();
            if rng.random::<f64>() < p {
                out.push(i);
                need -= 1;
            }
        }
        SubsetSample {
            indices: out,
            restarts: 0,
        }
    }

    /// Rejection sampler: draw independent inclusions, run `n` single-site
    /// resampling steps (which leave the product law invariant), and accept
    /// when the final size equals `ell`.
    pub fn sample_glauber<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        max_restarts: usize,
    ) -> Result<SubsetSample> {
        let n = self.n();
        let Some(p) = &self.bernoulli else {
            return Ok(SubsetSample {
                indices: (0..n).collect(),
                restarts: 0,
            });
        };
        let mut x = vec![false; n];
        for restarts in 0..=max_restarts {
            let mut size = 0usize;
            for (xi, &pi) in x.iter_mut().zip(p) {
                *xi = rng.random::<f64>() < pi;
                size += *xi as usize;
            }
            for _ in 0..n {
                let i = rng.random_range(0..n);
                let new = rng.random::<f64>() < p[i];
                size = size + new as usize - x[i] as usize;
                x[i] = new;
            }
            if size == self.ell {
                let indices = (0..n).filter(|&i| x[i]).collect();
                return Ok(SubsetSample { indices, restarts });
            }
        }
        Err(Error::RestartBudget {
            restarts: max_restarts,
        })
    }

    /// `g_q(μ) = Σ μ_i q_i + ln Z(μ)`; invariant under shifting `μ`.
    pub fn dual_objective(&self, q_target: &[f64]) -> f64 {
        self.mu
            .iter()
            .zip(q_target)
            .map(|(m, q)| m * q)
            .sum::<f64>()
            + self.log_z
    }
}

/// Table of `Z(t, {i, ..., n-1})` for the given (unshifted) weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionTable {
    ell: usize,
    shift: f64,
    suffix: LogTable,
}

impl PartitionTable {
    /// `ln Z(t, {i, ..., n-1})` for the original weights (0-based `i`).
    pub fn log_value(&self, t: usize, i: usize) -> f64 {
        let raw = self.suffix.get(i, t);
        if raw == f64::NEG_INFINITY {
            raw
        } else {
            raw + self.shift * t as f64
        }
    }

    pub fn value(&self, t: usize, i: usize) -> f64 {
        self.log_value(t, i).exp()
    }

    /// `Z(ell, [n])`.
    pub fn total(&self) -> f64 {
        self.value(self.ell, 0)
    }
}

/// Suffix partition values by the one-item recursion.
pub fn partition_recursive(mu: &[f64], ell: usize) -> Result<PartitionTable> {
    let (shifted, shift) = gauge(mu, ell)?;
    let logw: Vec<f64> = shifted.iter().map(|&m| -m).collect();
    let (_, suffix) = build_tables(&logw, ell, linear_is_safe(&logw, ell));
    Ok(PartitionTable { ell, shift, suffix })
}

/// `Z(ell, [n])` by the signed power-sum (Newton identity) recursion,
/// cross-checked against [`partition_recursive`].
pub fn partition_power_sums(mu: &[f64], ell: usize) -> Result<f64> {
    let (shifted, shift) = gauge(mu, ell)?;
    // The signed recursion amplifies rounding by up to ~n 2^n / C(n, ell), so
    // it runs in double-double.
    let w: Vec<TwoFloat> = shifted
        .iter()
        .map(|&m| TwoFloat::from((-m).exp()))
        .collect();
    let zero = TwoFloat::from(0.0);
    let mut p = vec![zero; ell + 1];
    let mut pow = vec![TwoFloat::from(1.0); w.len()];
    for pj in p.iter_mut().skip(1) {
        for (pw, &wi) in pow.iter_mut().zip(&w) {
            *pw *= wi;
            *pj += *pw;
        }
    }
    let mut z = vec![zero; ell + 1];
    z[0] = TwoFloat::from(1.0);
    for t in 1..=ell {
        let mut acc = zero;
        for j in 1..=t {
            let term = p[j] * z[t - j];
            if j % 2 == 1 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        z[t] = acc / t as f64;
    }
    let z_ell = z[ell].hi() + z[ell].lo();
    let scale = (shift * ell as f64).exp();
    let power_sums = z_ell * scale;
    let recursion = partition_recursive(mu, ell)?.total();
    let rel = (power_sums - recursion).abs() / recursion.abs().max(f64::MIN_POSITIVE);
    if !(z_ell > 0.0) || !(rel <= 1e-6) {
        return Err(Error::PowerSumCancellation {
            power_sums,
            recursion,
        });
    }
    Ok(power_sums)
}

/// Outcome of [`fit_weights`].
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub model: MaxEntModel,
    /// Newton steps taken.
    pub iterations: usize,
    /// Final `‖q(μ) - q_target‖_∞`.
    pub residual: f64,
    /// Final `g_q(μ)`.
    pub dual_objective: f64,
    /// Whether the dense covariance was used for any step.
    pub used_full_newton: bool,
}

fn inf_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Fits weights whose marginals match `target` in the ∞-norm to `tol`.
///
/// Newton's method on the dual objective, with the diagonal covariance by
/// default and the dense covariance after five iterations that fail to halve
/// the residual. Steps are clipped per coordinate and backtracked.
pub fn fit_weights(target: &MarginalVector, tol: f64, max_iter: usize) -> Result<FitReport> {
    let q_star = target.q();
    let ell = target.ell();
    let n = q_star.len();
    let mu0: Vec<f64> = q_star.iter().map(|&q| ((1.0 - q) / q).ln()).collect();
    let mut model = MaxEntModel::new(&mu0, ell)?;
    let mut q = model.marginals();
    let mut residual = inf_norm(&q, q_star);
    let mut g = model.dual_objective(q_star);
    let mut full = false;
    let mut slow = 0usize;
    let mut iterations = 0usize;

    while residual > tol && iterations < max_iter {
        iterations += 1;
        let grad: Vec<f64> = q_star.iter().zip(&q).map(|(a, b)| a - b).collect();
        let mut step: Vec<f64> = if full {
            let mut k = model.covariance();
            k.add_scalar_mut(1.0 / n as f64);
            let rhs = DVector::from_iterator(n, grad.iter().map(|x| -x));
            let sol = k
                .clone()
                .cholesky()
                .map(|c| c.solve(&rhs))
                .or_else(|| k.lu().solve(&rhs));
            match sol {
                Some(s) => s.iter().copied().collect(),
                None => diagonal_step(&grad, &q),
            }
        } else {
            diagonal_step(&grad, &q)
        };
        for s in step.iter_mut() {
            *s = s.clamp(-MAX_STEP, MAX_STEP);
        }
        let slope: f64 = grad.iter().zip(&step).map(|(a, b)| a * b).sum();

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = model
                .mu()
                .iter()
                .zip(&step)
                .map(|(m, s)| m + t * s)
                .collect();
            if let Ok(m) = MaxEntModel::new(&trial, ell) {
                let qt = m.marginals();
                let rt = inf_norm(&qt, q_star);
                let gt = m.dual_objective(q_star);
                if gt <= g + 1e-4 * t * slope || rt < residual {
                    accepted = Some((m, qt, rt, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((m, qt, rt, gt)) = accepted else {
            if !full {
                full = true;
                continue;
            }
            break;
        };
        if rt > 0.5 * residual {
            slow += 1;
        } else {
            slow = 0;
        }
        if slow >= 5 {
            full = true;
        }
        model = m;
        q = qt;
        residual = rt;
        g = gt;
    }

    let report = FitReport {
        model,
        iterations,
        residual,
        dual_objective: g,
        used_full_newton: full,
    };
    if report.residual <= tol {
        Ok(report)
    } else {
        Err(Error::NotConverged(Box::new(report)))
    }
}

/// `Δμ_i = -(q*_i - q_i) / (q_i (1 - q_i))`.
fn diagonal_step(grad: &[f64], q: &[f64]) -> Vec<f64> {
    grad.iter()
        .zip(q)
        .map(|(g, &qi)| -g / (qi * (1.0 - qi)).max(1e-300))
        .collect()
}
