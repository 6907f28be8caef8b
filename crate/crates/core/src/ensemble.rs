//! Random `k`-sparse states shared by the trace-distance and robustness
//! constructions.
//!
//! Every state in the ensemble keeps a fixed prefix of canonical amplitudes
//! and places one common amplitude on a random subset of a window. The
//! subset is drawn from a max-entropy model matching prescribed inclusion
//! marginals.

use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::DMatrix;
#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;
use rand::Rng;

use crate::maxent::{fit_weights, MarginalVector, MaxEntModel};
use crate::specvec::CanonicalVector;
use crate::{Error, Result};

pub const DEFAULT_FIT_TOL: f64 = 1e-10;
/// Marginals this close to 0 or 1 are fixed deterministically.
const PEEL_TOL: f64 = 1e-9;
const MARGINAL_RANGE_TOL: f64 = 1e-9;
const MARGINAL_SUM_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnsembleKind {
    TraceDistance,
    Robustness,
}

#[derive(Clone, Debug)]
pub struct SparseEnsemble {
    kind: EnsembleKind,
    canon: CanonicalVector,
    k: usize,
    prefix: Vec<f64>,
    window: Range<usize>,
    window_amp: f64,
    subset_size: usize,
    /// Target marginals over the window, as computed.
    marginals: Vec<f64>,
    /// Marginals realized by the sampler over the window.
    realized: Vec<f64>,
    forced: Vec<usize>,
    free: Vec<usize>,
    free_size: usize,
    model: Option<MaxEntModel>,
    norm_const: f64,
    value: f64,
}

impl SparseEnsemble {
    /// The deterministic truncation to the top `min(k, support)` entries.
    pub(crate) fn point_mass(kind: EnsembleKind, canon: CanonicalVector, k: usize) -> Self {
        let keep = k.min(canon.support());
        let prefix = canon.values()[..keep].to_vec();
        let norm_const = prefix.iter().map(|x| x * x).sum::<f64>().sqrt();
        SparseEnsemble {
            kind,
            canon,
            k,
            prefix,
            window: keep..keep,
            window_amp: 0.0,
            subset_size: 0,
            marginals: Vec::new(),
            realized: Vec::new(),
            forced: Vec::new(),
            free: Vec::new(),
            free_size: 0,
            model: None,
            norm_const,
            value: 0.0,
        }
    }

    /// Validates the window marginals, peels deterministic items and fits
    /// the max-entropy model on the rest.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        kind: EnsembleKind,
        canon: CanonicalVector,
        k: usize,
        prefix: Vec<f64>,
        window: Range<usize>,
        window_amp: f64,
        subset_size: usize,
        marginals: Vec<f64>,
        value: f64,
        fit_tol: f64,
    ) -> Result<Self> {
        for (i, &q) in marginals.iter().enumerate() {
            if !(-MARGINAL_RANGE_TOL..=1.0 + MARGINAL_RANGE_TOL).contains(&q) {
                return Err(Error::InconsistentMarginal {
                    index: window.start + i,
                    value: q,
                });
            }
        }
        let sum: f64 = marginals.iter().sum();
        if (sum - subset_size as f64).abs() > MARGINAL_SUM_TOL {
            return Err(Error::InconsistentMarginalSum {
                sum,
                expected: subset_size as f64,
            });
        }
        let mut forced = Vec::new();
        let mut free = Vec::new();
        for (i, &q) in marginals.iter().enumerate() {
            let pos = window.start + i;
            if q >= 1.0 - PEEL_TOL {
                forced.push(pos);
            } else if q > PEEL_TOL {
                free.push(pos);
            }
        }
        if forced.len() > subset_size || forced.len() + free.len() < subset_size {
            return Err(Error::InconsistentMarginalSum {
                sum,
                expected: subset_size as f64,
            });
        }
        let free_size = subset_size - forced.len();
        let mut realized = alloc::vec![0.0; marginals.len()];
        for &p in &forced {
            realized[p - window.start] = 1.0;
        }
        let model = if free_size == 0 {
            None
        } else if free_size == free.len() {
            for &p in &free {
                realized[p - window.start] = 1.0;
            }
            None
        } else {
            let mut q: Vec<f64> = free.iter().map(|&p| marginals[p - window.start]).collect();
            adjust_sum(&mut q, free_size as f64);
            let report = fit_weights(&MarginalVector::new(q)?, fit_tol, 200)?;
            for (&p, qi) in free.iter().zip(report.model.marginals()) {
                realized[p - window.start] = qi;
            }
            Some(report.model)
        };
        let norm_const = (prefix.iter().map(|x| x * x).sum::<f64>()
            + subset_size as f64 * window_amp * window_amp)
            .sqrt();
        Ok(SparseEnsemble {
            kind,
            canon,
            k,
            prefix,
            window,
            window_amp,
            subset_size,
            marginals,
            realized,
            forced,
            free,
            free_size,
            model,
            norm_const,
            value,
        })
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn canon(&self) -> &CanonicalVector {
        &self.canon
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Unnormalized amplitudes on canonical positions `0..prefix.len()`.
    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    /// Canonical positions (0-based) of the sampled window.
    pub fn window(&self) -> Range<usize> {
        self.window.clone()
    }

    pub fn window_amp(&self) -> f64 {
        self.window_amp
    }

    pub fn subset_size(&self) -> usize {
        self.subset_size
    }

    /// Inclusion probabilities over the window as derived from the target.
    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    /// Inclusion probabilities over the window realized by the fitted model.
    pub fn realized_marginals(&self) -> &[f64] {
        &self.realized
    }

    pub fn model(&self) -> Option<&MaxEntModel> {
        self.model.as_ref()
    }

    /// Positions inside the window that the fitted model draws from.
    pub fn free_positions(&self) -> &[usize] {
        &self.free
    }

    /// Norm of every unnormalized ensemble state.
    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    /// `T_k` or `R_k`, depending on the kind.
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_point_mass(&self) -> bool {
        self.subset_size == 0
    }

    /// Pair inclusion probabilities over the window.
    fn window_pairs(&self) -> DMatrix<f64> {
        let w = self.window.len();
        let s = self.window.start;
        let mut pm = DMatrix::zeros(w, w);
        for &a in &self.forced {
            for &b in &self.forced {
                pm[(a - s, b - s)] = 1.0;
            }
        }
        for &f in &self.forced {
            for &p in &self.free {
                let q = self.realized[p - s];
                pm[(f - s, p - s)] = q;
                pm[(p - s, f - s)] = q;
            }
        }
        match &self.model {
            Some(model) => {
                let q = model.pair_marginals().0;
                for (x, &a) in self.free.iter().enumerate() {
                    for (y, &b) in self.free.iter().enumerate() {
                        pm[(a - s, b - s)] = q[(x, y)];
                    }
                }
            }
            None => {
                for &a in &self.free {
                    for &b in &self.free {
                        if self.realized[a - s] == 1.0 && self.realized[b - s] == 1.0 {
                            pm[(a - s, b - s)] = 1.0;
                        }
                    }
                }
            }
        }
        pm
    }

    /// `E[w wᵀ]` in the canonical basis (real symmetric, unit trace).
    pub fn density_matrix(&self) -> DMatrix<f64> {
        let d = self.canon.dim();
        let n2 = self.norm_const * self.norm_const;
        let mut sigma = DMatrix::zeros(d, d);
        let p = self.prefix.len();
        for i in 0..p {
            for j in 0..p {
                sigma[(i, j)] = self.prefix[i] * self.prefix[j];
            }
        }
        if self.subset_size > 0 {
            let a = self.window_amp;
            let s = self.window.start;
            for (x, &q) in self.realized.iter().enumerate() {
                for i in 0..p {
                    let val = a * q * self.prefix[i];
                    sigma[(i, s + x)] = val;
                    sigma[(s + x, i)] = val;
                }
            }
            let pm = self.window_pairs();
            for x in 0..self.window.len() {
                for y in 0..self.window.len() {
                    sigma[(s + x, s + y)] = a * a * pm[(x, y)];
                }
            }
        }
        sigma / n2
    }

    /// Draws a subset of the window (canonical positions, sorted).
    pub fn sample_subset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut out = self.forced.clone();
        match &self.model {
            Some(model) => out.extend(
                model
                    .sample_sequential(rng)
                    .indices
                    .into_iter()
                    .map(|i| self.free[i]),
            ),
            None if self.free_size > 0 => out.extend_from_slice(&self.free),
            None => {}
        }
        out.sort_unstable();
        out
    }

    /// Builds the unit-norm state for a given subset of window positions.
    pub fn state_for_subset(&self, subset: &[usize]) -> Vec<f64> {
        let mut w = alloc::vec![0.0; self.canon.dim()];
        for (wi, &p) in w.iter_mut().zip(&self.prefix) {
            *wi = p / self.norm_const;
        }
        let amp = self.window_amp / self.norm_const;
        for &j in subset {
            w[j] = amp;
        }
        w
    }

    /// One `k`-sparse unit vector in canonical order.
    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let subset = self.sample_subset(rng);
        self.state_for_subset(&subset)
    }

    /// One sample mapped back to the original coordinates and phases.
    pub fn sample_restored<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<crate::Complex64> {
        self.canon
            .restore(&self.sample_state(rng))
            .expect("sample has the canonical dimension")
    }
}

/// Shifts `q` so it sums to `target`, spreading the correction in
/// proportion to `q (1 - q)` so entries stay inside `(0, 1)`.
fn adjust_sum(q: &mut [f64], target: f64) {
    let diff = target - q.iter().sum::<f64>();
    let weight: f64 = q.iter().map(|x| x * (1.0 - x)).sum();
    if diff == 0.0 || weight == 0.0 {
        return;
    }
    for x in q.iter_mut() {
        *x += diff * *x * (1.0 - *x) / weight;
    }
}
