//! Optimal randomized truncation of pure quantum states.
//!
//! Given a unit vector `v` and a sparsity budget `k`, the deterministic
//! answer (keep the `k` largest entries) maximizes fidelity. Mixtures of
//! `k`-sparse states can do much better in trace distance and robustness.
//! This crate computes those optimal mixtures exactly and provides
//! samplers for them:
//!
//! - [`specvec`]: canonical (sorted, phase-stripped) vectors, the top-`k` and
//!   `k`-support norms, and the closed-form fidelity and robustness values.
//! - [`maxent`]: maximum-entropy (conditional Poisson) distributions over
//!   fixed-size subsets with prescribed inclusion marginals.
//! - [`tracedist`]: the optimal trace distance, its optimal measurement and
//!   the optimal mixed approximation.
//! - [`robust`]: the robustness-optimal mixed approximation and its
//!   diagonal-dominance certificate.
//! - [`bipartite`]: the Schmidt-rank version of both problems.
//! - [`mps`]: a small matrix-product-state laboratory comparing deterministic
//!   and randomized bond truncation.
//! - [`oracle`]: brute-force and Monte Carlo checks used by tests and the
//!   command-line cross-check mode.
//! - [`powerlaw`]: power-law target states and exponent sweeps.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
#![forbid(unsafe_code)]
// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bipartite;
pub mod cubic;
pub mod density;
pub mod ensemble;
mod error;
pub mod maxent;
pub mod mps;
pub mod oracle;
pub mod powerlaw;
pub mod robust;
pub mod specvec;
pub mod tracedist;

pub use density::{trace_distance, DensityMatrix};
pub use ensemble::{EnsembleKind, SparseEnsemble};
pub use error::{Error, Result};
pub use maxent::{MarginalVector, MaxEntModel};
pub use specvec::CanonicalVector;
pub use tracedist::TraceDistSolution;

pub use num_complex::Complex64;
