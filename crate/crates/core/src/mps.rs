//! A small matrix-product-state laboratory.
//!
//! States are chains of site tensors `A[j]` of shape `(r_{j-1}, p, r_j)`.
//! In mixed-canonical form with center at bond `m` (between sites `m - 1`
//! and `m`), sites left of the bond are left isometries, sites right of it
//! are right isometries and the Schmidt spectrum is stored separately.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;
#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ensemble::DEFAULT_FIT_TOL;
use crate::specvec::CanonicalVector;
use crate::{robust, tracedist, Error, Result};

const DROP_REL: f64 = 1e-14;

fn c64(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Site tensor with indices `(left, physical, right)`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteTensor {
    pub left: usize,
    pub phys: usize,
    pub right: usize,
    pub data: Vec<Complex64>,
}

impl SiteTensor {
    #[inline]
    pub fn get(&self, a: usize, s: usize, b: usize) -> Complex64 {
        self.data[(a * self.phys + s) * self.right + b]
    }

    /// `(left · phys) × right`.
    pub fn left_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.left * self.phys, self.right, &self.data)
    }

    /// `left × (phys · right)`.
    pub fn right_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.left, self.phys * self.right, &self.data)
    }

    fn from_left_matrix(m: &DMatrix<Complex64>, phys: usize) -> Self {
        let left = m.nrows() / phys;
        SiteTensor {
            left,
            phys,
            right: m.ncols(),
            data: row_major(m),
        }
    }

    fn from_right_matrix(m: &DMatrix<Complex64>, phys: usize) -> Self {
        SiteTensor {
            left: m.nrows(),
            phys,
            right: m.ncols() / phys,
            data: row_major(m),
        }
    }

    /// `C · A` on the left bond.
    fn mul_left(&self, c: &DMatrix<Complex64>) -> Self {
        Self::from_right_matrix(&(c * self.right_matrix()), self.phys)
    }

    /// `A · C` on the right bond.
    fn mul_right(&self, c: &DMatrix<Complex64>) -> Self {
        Self::from_left_matrix(&(self.left_matrix() * c), self.phys)
    }
}

fn row_major(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// SVD with singular values sorted nonincreasing and those below
/// `DROP_REL · max` removed (at least one is kept).
fn svd_sorted(m: DMatrix<Complex64>) -> (DMatrix<Complex64>, Vec<f64>, DMatrix<Complex64>) {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let max = order.first().map_or(0.0, |&i| sv[i]);
    let keep: Vec<usize> = order
        .iter()
        .copied()
        .enumerate()
        .filter(|&(pos, i)| pos == 0 || sv[i] > DROP_REL * max)
        .map(|(_, i)| i)
        .collect();
    let mut uo = DMatrix::zeros(u.nrows(), keep.len());
    let mut vo = DMatrix::zeros(keep.len(), vt.ncols());
    let mut s = Vec::with_capacity(keep.len());
    for (c, &i) in keep.iter().enumerate() {
        uo.set_column(c, &u.column(i));
        vo.set_row(c, &vt.row(i));
        s.push(sv[i]);
    }
    (uo, s, vo)
}

fn diag(s: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_fn(
        s.len(),
        s.len(),
        |i, j| if i == j { c64(s[i]) } else { c64(0.0) },
    )
}

#[derive(Clone, Debug, PartialEq)]
struct Center {
    bond: usize,
    spectrum: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MPSState {
    phys_dim: usize,
    tensors: Vec<SiteTensor>,
    center: Option<Center>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Deterministic,
    RandomTraceDistance,
    RandomRobustness,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::Deterministic => "dtrunc",
            Strategy::RandomTraceDistance => "rtrunc-td",
            Strategy::RandomRobustness => "rtrunc-rob",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "dtrunc" => Some(Strategy::Deterministic),
            "rtrunc-td" => Some(Strategy::RandomTraceDistance),
            "rtrunc-rob" => Some(Strategy::RandomRobustness),
            _ => None,
        }
    }

    pub fn is_random(&self) -> bool {
        !matches!(self, Strategy::Deterministic)
    }
}

impl MPSState {
    /// Builds a state from raw tensors, checking the bond chain.
    pub fn from_tensors(tensors: Vec<SiteTensor>) -> Result<Self> {
        let Some(first) = tensors.first() else {
            return Err(Error::InvalidInput("empty tensor chain"));
        };
        let phys_dim = first.phys;
        if first.left != 1 || tensors.last().map(|t| t.right) != Some(1) {
            return Err(Error::InvalidInput("boundary bonds must have dimension 1"));
        }
        for w in tensors.windows(2) {
            if w[0].right != w[1].left {
                return Err(Error::DimensionMismatch {
                    expected: w[0].right,
                    found: w[1].left,
                });
            }
        }
        for t in &tensors {
            if t.phys != phys_dim || t.data.len() != t.left * t.phys * t.right {
                return Err(Error::InvalidInput("inconsistent site tensor shape"));
            }
        }
        Ok(MPSState {
            phys_dim,
            tensors,
            center: None,
        })
    }

    /// The product state with every site in basis state `level`.
    pub fn product(n: usize, phys_dim: usize, level: usize) -> Result<Self> {
        if level >= phys_dim || n == 0 {
            return Err(Error::InvalidInput("invalid product state"));
        }
        let mut data = alloc::vec![c64(0.0); phys_dim];
        data[level] = c64(1.0);
        let t = SiteTensor {
            left: 1,
            phys: phys_dim,
            right: 1,
            data,
        };
        Self::from_tensors(alloc::vec![t; n])
    }

    /// `(|0…0⟩ + |1…1⟩) / √2` on qubits.
    pub fn ghz(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput("GHZ needs at least two sites"));
        }
        let h = 0.5f64.sqrt();
        let mut tensors = Vec::with_capacity(n);
        for j in 0..n {
            let (l, r) = (if j == 0 { 1 } else { 2 }, if j == n - 1 { 1 } else { 2 });
            let mut data = alloc::vec![c64(0.0); l * 2 * r];
            for branch in 0..2 {
                let a = if l == 1 { 0 } else { branch };
                let b = if r == 1 { 0 } else { branch };
                let amp = if j == 0 { h } else { 1.0 };
                data[(a * 2 + branch) * r + b] = c64(amp);
            }
            tensors.push(SiteTensor {
                left: l,
                phys: 2,
                right: r,
                data,
            });
        }
        Self::from_tensors(tensors)
    }

    pub fn n(&self) -> usize {
        self.tensors.len()
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    pub fn tensors(&self) -> &[SiteTensor] {
        &self.tensors
    }

    /// Bond dimensions `r_0, ..., r_n`.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.tensors.iter().map(|t| t.left).collect();
        out.push(1);
        out
    }

    pub fn center_bond(&self) -> Option<usize> {
        self.center.as_ref().map(|c| c.bond)
    }

    /// Schmidt spectrum at the canonical center, if any.
    pub fn center_spectrum(&self) -> Option<&[f64]> {
        self.center.as_ref().map(|c| c.spectrum.as_slice())
    }

    /// Folds the stored spectrum back into a neighbouring tensor.
    fn absorb_center(&mut self) {
        if let Some(c) = self.center.take() {
            let d = diag(&c.spectrum);
            if c.bond < self.n() {
                self.tensors[c.bond] = self.tensors[c.bond].mul_left(&d);
            } else {
                let last = self.n() - 1;
                self.tensors[last] = self.tensors[last].mul_right(&d);
            }
        }
    }

    /// Moves to mixed-canonical form at bond `m` (`0 ..= n`).
    pub fn canonicalize(&mut self, m: usize) -> Result<()> {
        let n = self.n();
        if m > n {
            return Err(Error::InvalidInput("bond index out of range"));
        }
        self.absorb_center();
        let p = self.phys_dim;
        let mut carry: Option<DMatrix<Complex64>> = None;
        for j in 0..m {
            let t = match carry.take() {
                Some(c) => self.tensors[j].mul_left(&c),
                None => self.tensors[j].clone(),
            };
            let (u, s, vt) = svd_sorted(t.left_matrix());
            self.tensors[j] = SiteTensor::from_left_matrix(&u, p);
            carry = Some(diag(&s) * vt);
        }
        let center_matrix = if m < n {
            if let Some(c) = carry.take() {
                self.tensors[m] = self.tensors[m].mul_left(&c);
            }
            let mut rcarry: Option<DMatrix<Complex64>> = None;
            for j in (m..n).rev() {
                let t = match rcarry.take() {
                    Some(c) => self.tensors[j].mul_right(&c),
                    None => self.tensors[j].clone(),
                };
                let (u, s, vt) = svd_sorted(t.right_matrix());
                self.tensors[j] = SiteTensor::from_right_matrix(&vt, p);
                rcarry = Some(u * diag(&s));
            }
            rcarry.expect("at least one site right of the bond")
        } else {
            carry.expect("at least one site left of the bond")
        };
        let (u, s, vt) = svd_sorted(center_matrix);
        match (m > 0, m < n) {
            (true, true) => {
                self.tensors[m - 1] = self.tensors[m - 1].mul_right(&u);
                self.tensors[m] = self.tensors[m].mul_left(&vt);
            }
            (false, true) => {
                self.tensors[0] = self.tensors[0].mul_left(&(u * vt));
            }
            (true, false) => {
                self.tensors[n - 1] = self.tensors[n - 1].mul_right(&(u * vt));
            }
            (false, false) => unreachable!("a chain has at least one site"),
        }
        self.center = Some(Center {
            bond: m,
            spectrum: s,
        });
        Ok(())
    }

    /// `⟨ψ|ψ⟩^{1/2}`.
    pub fn norm(&self) -> f64 {
        match &self.center {
            Some(c) => c.spectrum.iter().map(|x| x * x).sum::<f64>().sqrt(),
            None => self.inner(self).norm().sqrt(),
        }
    }

    /// Rescales to unit norm (canonicalizing at bond 1 if needed).
    pub fn normalize(&mut self) -> Result<()> {
        if self.center.is_none() {
            self.canonicalize(1.min(self.n()))?;
        }
        let c = self.center.as_mut().expect("canonical");
        let nrm = c.spectrum.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return Err(Error::ZeroState);
        }
        c.spectrum.iter_mut().for_each(|x| *x /= nrm);
        Ok(())
    }

    /// Tensors with the center spectrum folded in.
    fn plain_tensors(&self) -> Vec<SiteTensor> {
        let mut s = self.clone();
        s.absorb_center();
        s.tensors
    }

    /// Dense amplitudes, site 0 most significant.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let ts = self.plain_tensors();
        let mut cur: Vec<Complex64> = alloc::vec![c64(1.0)];
        let mut width = 1;
        for t in &ts {
            let rows = cur.len() / width;
            let mut next = alloc::vec![c64(0.0); rows * t.phys * t.right];
            for row in 0..rows {
                for a in 0..t.left {
                    let x = cur[row * width + a];
                    if x == c64(0.0) {
                        continue;
                    }
                    for s in 0..t.phys {
                        for b in 0..t.right {
                            next[(row * t.phys + s) * t.right + b] += x * t.get(a, s, b);
                        }
                    }
                }
            }
            cur = next;
            width = t.right;
        }
        cur
    }

    /// `⟨self|O_site|other⟩`, with `op = None` meaning the identity.
    fn transfer(&self, other: &Self, op: Option<(usize, &DMatrix<Complex64>)>) -> Complex64 {
        let bra = self.plain_tensors();
        let ket = other.plain_tensors();
        let mut env = DMatrix::from_element(1, 1, c64(1.0));
        for (j, (a, b)) in bra.iter().zip(&ket).enumerate() {
            let mut next = DMatrix::zeros(a.right, b.right);
            for s in 0..a.phys {
                for s2 in 0..b.phys {
                    let w = match op {
                        Some((site, o)) if site == j => o[(s, s2)],
                        _ if s == s2 => c64(1.0),
                        _ => continue,
                    };
                    if w == c64(0.0) {
                        continue;
                    }
                    for x in 0..a.left {
                        for y in 0..b.left {
                            let e = env[(x, y)] * w;
                            if e == c64(0.0) {
                                continue;
                            }
                            for bx in 0..a.right {
                                let ax = a.get(x, s, bx).conj() * e;
                                for by in 0..b.right {
                                    next[(bx, by)] += ax * b.get(y, s2, by);
                                }
                            }
                        }
                    }
                }
            }
            env = next;
        }
        env[(0, 0)]
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.transfer(other, None)
    }

    /// `⟨ψ|O_site|ψ⟩ / ⟨ψ|ψ⟩` for a single-site observable (0-based site).
    pub fn expectation_single_site(&self, site: usize, obs: &DMatrix<Complex64>) -> Result<f64> {
        if site >= self.n() {
            return Err(Error::InvalidInput("site out of range"));
        }
        if obs.nrows() != self.phys_dim || obs.ncols() != self.phys_dim {
            return Err(Error::DimensionMismatch {
                expected: self.phys_dim,
                found: obs.nrows(),
            });
        }
        let num = self.transfer(self, Some((site, obs)));
        let den = self.inner(self);
        Ok(num.re / den.re)
    }

    /// Replaces the spectrum at the current center with `new` (same length,
    /// entries may be zero); zero entries are removed from the bond.
    fn install_spectrum(&mut self, new: &[f64]) -> Result<()> {
        let c = self
            .center
            .as_ref()
            .ok_or(Error::InvalidInput("not canonical"))?;
        let m = c.bond;
        let n = self.n();
        let mut order: Vec<usize> = (0..new.len()).filter(|&i| new[i] != 0.0).collect();
        order.sort_by(|&a, &b| new[b].total_cmp(&new[a]));
        if order.is_empty() {
            return Err(Error::ZeroState);
        }
        let r = new.len();
        let mut sel = DMatrix::<Complex64>::zeros(r, order.len());
        for (c, &i) in order.iter().enumerate() {
            sel[(i, c)] = c64(1.0);
        }
        if m > 0 {
            self.tensors[m - 1] = self.tensors[m - 1].mul_right(&sel);
        }
        if m < n {
            self.tensors[m] = self.tensors[m].mul_left(&sel.transpose());
        }
        self.center = Some(Center {
            bond: m,
            spectrum: order.iter().map(|&i| new[i]).collect(),
        });
        Ok(())
    }

    /// Truncates bond `m` to dimension at most `dmax` with the given
    /// strategy. Leaves the state canonical at `m` with unit norm.
    pub fn truncate_bond<R: Rng + ?Sized>(
        &mut self,
        m: usize,
        dmax: usize,
        strategy: Strategy,
        rng: &mut R,
    ) -> Result<()> {
        if self.center_bond() != Some(m) {
            self.canonicalize(m)?;
        }
        self.normalize()?;
        let s = self.center_spectrum().expect("canonical").to_vec();
        if dmax == 0 || dmax > s.len() {
            return Err(Error::KOutOfRange {
                k: dmax,
                d: s.len(),
            });
        }
        if dmax == s.len() {
            return Ok(());
        }
        let new: Vec<f64> = match strategy {
            Strategy::Deterministic => {
                let mut w = s.clone();
                w[dmax..].fill(0.0);
                let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                w.iter().map(|x| x / nrm).collect()
            }
            Strategy::RandomTraceDistance => {
                let canon = CanonicalVector::from_sorted(&s)?;
                let sol = tracedist::solve(&canon, dmax)?;
                let ens = tracedist::build_ensemble(&sol, &canon, DEFAULT_FIT_TOL)?;
                ens.sample_state(rng)
            }
            Strategy::RandomRobustness => {
                let canon = CanonicalVector::from_sorted(&s)?;
                let ens = robust::build_ensemble_with_tol(&canon, dmax, DEFAULT_FIT_TOL)?;
                ens.sample_state(rng)
            }
        };
        self.install_spectrum(&new)
    }

    /// Truncates every interior bond left to right, recanonicalizing before
    /// each step. Bonds already within `dmax` are left alone.
    pub fn truncate_all<R: Rng + ?Sized>(
        &mut self,
        dmax: usize,
        strategy: Strategy,
        rng: &mut R,
    ) -> Result<()> {
        for m in 1..self.n() {
            self.canonicalize(m)?;
            let r = self.center_spectrum().expect("canonical").len();
            self.truncate_bond(m, dmax.min(r), strategy, rng)?;
        }
        Ok(())
    }
}

/// Random state with complex Gaussian entries and bond dimensions
/// `min(p^j, p^{n-j}, max_bond)`, canonicalized at the middle bond and
/// normalized.
pub fn random_mps<R: Rng + ?Sized>(
    n: usize,
    phys_dim: usize,
    max_bond: usize,
    rng: &mut R,
) -> Result<MPSState> {
    if n < 2 || phys_dim < 1 || max_bond < 1 {
        return Err(Error::InvalidInput(
            "need n >= 2, phys_dim >= 1, max_bond >= 1",
        ));
    }
    let bond = |j: usize| -> usize {
        let cap = |e: usize| -> usize {
            let mut x: usize = 1;
            for _ in 0..e {
                x = x.saturating_mul(phys_dim);
                if x >= max_bond {
                    return max_bond;
                }
            }
            x
        };
        cap(j).min(cap(n - j)).min(max_bond)
    };
    let mut tensors = Vec::with_capacity(n);
    for j in 0..n {
        let (l, r) = (bond(j), bond(j + 1));
        let data = (0..l * phys_dim * r)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re, im)
            })
            .collect();
        tensors.push(SiteTensor {
            left: l,
            phys: phys_dim,
            right: r,
            data,
        });
    }
    let mut s = MPSState::from_tensors(tensors)?;
    s.canonicalize(n / 2)?;
    s.normalize()?;
    Ok(s)
}

/// Replaces every interior bond spectrum by the normalized power law
/// `j^{-γ}`, left to right. Returns the spectra read back afterwards (later
/// replacements can disturb earlier bonds).
pub fn respectrum_power_law(mps: &mut MPSState, gamma: f64) -> Result<Vec<Vec<f64>>> {
    let n = mps.n();
    for m in 1..n {
        mps.canonicalize(m)?;
        let len = mps.center_spectrum().expect("canonical").len();
        let z = (1..=len)
            .map(|j| (j as f64).powf(-2.0 * gamma))
            .sum::<f64>()
            .sqrt();
        let c = mps.center.as_mut().expect("canonical");
        for (j, x) in c.spectrum.iter_mut().enumerate() {
            *x = ((j + 1) as f64).powf(-gamma) / z;
        }
    }
    let mut spectra = Vec::with_capacity(n.saturating_sub(1));
    for m in 1..n {
        mps.canonicalize(m)?;
        spectra.push(mps.center_spectrum().expect("canonical").to_vec());
    }
    mps.normalize()?;
    Ok(spectra)
}

/// Pauli Z.
pub fn pauli_z() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[c64(1.0), c64(0.0), c64(0.0), c64(-1.0)])
}

/// How the truncation dimension is chosen per state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cutoff {
    Fixed(usize),
    /// The `D` below the largest bond whose deterministic full-chain
    /// truncation fidelity is closest to this target.
    TargetFidelity(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub phys_dim: usize,
    /// Cap on the bond dimension of the random states.
    pub max_bond: usize,
    pub gammas: Vec<f64>,
    pub cutoff: Cutoff,
    pub seeds: Vec<u64>,
    pub samples: usize,
    /// 1-based site of the `Z` observable.
    pub site: usize,
    pub strategies: Vec<Strategy>,
}

impl ExperimentConfig {
    /// Nine qubits, `⟨Z_5⟩`, 100 samples, full bond dimension.
    pub fn figure(gammas: Vec<f64>, seeds: Vec<u64>, cutoff: Cutoff) -> Self {
        ExperimentConfig {
            n: 9,
            phys_dim: 2,
            max_bond: 16,
            gammas,
            cutoff,
            seeds,
            samples: 100,
            site: 5,
            strategies: alloc::vec![Strategy::Deterministic, Strategy::RandomTraceDistance],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub gamma: f64,
    pub cutoff: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub estimate: f64,
    pub exact: f64,
    pub samples: usize,
    pub sample_std: f64,
    /// Fidelity `|⟨ψ|φ⟩|` of the deterministic truncation at this cutoff.
    pub dtrunc_fidelity: f64,
}

impl ExperimentRecord {
    pub fn label(&self) -> String {
        String::from(self.strategy.label())
    }
}

fn fidelity(a: &MPSState, b: &MPSState) -> f64 {
    a.inner(b).norm() / (a.norm() * b.norm())
}

/// Generates the target state for a seed and exponent.
pub fn experiment_state(config: &ExperimentConfig, seed: u64, gamma: f64) -> Result<MPSState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = random_mps(config.n, config.phys_dim, config.max_bond, &mut rng)?;
    respectrum_power_law(&mut state, gamma)?;
    Ok(state)
}

/// Deterministic full-chain truncation fidelity for each `D` from 1 to the
/// largest bond.
pub fn dtrunc_fidelities(state: &MPSState) -> Result<Vec<(usize, f64)>> {
    let max = state.bond_dims().into_iter().max().unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (1..=max)
        .map(|d| {
            let mut t = state.clone();
            t.truncate_all(d, Strategy::Deterministic, &mut rng)?;
            Ok((d, fidelity(state, &t)))
        })
        .collect()
}

/// Runs the truncation comparison; one record per (seed, γ, strategy).
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    if config.site == 0 || config.site > config.n {
        return Err(Error::InvalidInput(
            "site is 1-based and must be within the chain",
        ));
    }
    if config.samples == 0 {
        return Err(Error::InvalidInput("need at least one sample"));
    }
    let site = config.site - 1;
    let z = pauli_z();
    let mut out = Vec::new();
    for &seed in &config.seeds {
        for (gi, &gamma) in config.gammas.iter().enumerate() {
            let state = experiment_state(config, seed, gamma)?;
            let exact = state.expectation_single_site(site, &z)?;
            let fids = dtrunc_fidelities(&state)?;
            let cutoff = match config.cutoff {
                Cutoff::Fixed(d) => d,
                Cutoff::TargetFidelity(f) => {
                    // Only cutoffs that actually truncate something qualify.
                    let proper = &fids[..fids.len().saturating_sub(1).max(1)];
                    proper
                        .iter()
                        .min_by(|a, b| (a.1 - f).abs().total_cmp(&(b.1 - f).abs()))
                        .expect("at least one bond dimension")
                        .0
                }
            };
            let dfid = fids.iter().find(|x| x.0 == cutoff).map_or(1.0, |x| x.1);
            for &strategy in &config.strategies {
                let runs = if strategy.is_random() {
                    config.samples
                } else {
                    1
                };
                let mut vals = Vec::with_capacity(runs);
                for sample in 0..runs {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(((gi as u64) << 32) | sample as u64);
                    let mut t = state.clone();
                    t.truncate_all(cutoff, strategy, &mut rng)?;
                    vals.push(t.expectation_single_site(site, &z)?);
                }
                let nf = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / nf;
                let std = if vals.len() > 1 {
                    (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
                } else {
                    0.0
                };
                out.push(ExperimentRecord {
                    gamma,
                    cutoff,
                    seed,
                    strategy,
                    estimate: mean,
                    exact,
                    samples: vals.len(),
                    sample_std: std,
                    dtrunc_fidelity: dfid,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_z(n: usize, site: usize, psi: &[Complex64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (idx, a) in psi.iter().enumerate() {
            let bit = (idx >> (n - 1 - site)) & 1;
            let sign = if bit == 0 { 1.0 } else { -1.0 };
            num += sign * a.norm_sqr();
            den += a.norm_sqr();
        }
        num / den
    }

    #[test]
    fn product_state_expectation() {
        let s = MPSState::product(4, 2, 0).unwrap();
        assert!((s.expectation_single_site(2, &pauli_z()).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ghz_spectrum_and_expectation() {
        let mut s = MPSState::ghz(3).unwrap();
        for m in 1..3 {
            s.canonicalize(m).unwrap();
            let sp = s.center_spectrum().unwrap();
            assert_eq!(sp.len(), 2);
            for x in sp {
                assert!((x - 0.5f64.sqrt()).abs() < 1e-12);
            }
        }
        for site in 0..3 {
            assert!(s.expectation_single_site(site, &pauli_z()).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn random_state_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_mps(6, 2, 8, &mut rng).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
        let psi = s.to_dense();
        let nrm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        assert!((nrm - 1.0).abs() < 1e-10);
        for site in 0..6 {
            let a = s.expectation_single_site(site, &pauli_z()).unwrap();
            assert!((a - dense_z(6, site, &psi)).abs() < 1e-10);
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = random_mps(5, 2, 4, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = random_mps(5, 2, 4, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn product_from_unit_bond() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_mps(2, 2, 1, &mut rng).unwrap();
        assert_eq!(s.bond_dims(), alloc::vec![1, 1, 1]);
    }
}
