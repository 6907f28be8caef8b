use alloc::boxed::Box;

use crate::maxent::FitReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),

    #[error("k = {k} is out of range for dimension {d}")]
    KOutOfRange { k: usize, d: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("subset size {ell} is out of range for {n} items")]
    EllOutOfRange { ell: usize, n: usize },

    #[error("weight {index} is not finite after the gauge shift (mu = {value})")]
    NonFiniteWeight { index: usize, value: f64 },

    #[error(
        "power-sum partition value {power_sums} disagrees with the recursion value {recursion}; \
         use the recursive partition function"
    )]
    PowerSumCancellation { power_sums: f64, recursion: f64 },

    #[error(
        "marginal {index} = {value} is at the boundary; include (q = 1) or exclude (q = 0) \
         that item deterministically before fitting"
    )]
    BoundaryMarginal { index: usize, value: f64 },

    #[error("marginals sum to {sum}, which is not an integer subset size")]
    MarginalSum { sum: f64 },

    #[error("weight fit did not converge: residual {} after {} iterations", .0.residual, .0.iterations)]
    NotConverged(Box<FitReport>),

    #[error(
        "no accepting (r, ell, lambda) triple found; nearest miss r = {r}, ell = {ell}, \
         lambda = {lambda}, violation = {violation}"
    )]
    NoAcceptingTriple {
        r: usize,
        ell: usize,
        lambda: f64,
        violation: f64,
    },

    #[error("ensemble marginal {index} = {value} lies outside [0, 1]")]
    InconsistentMarginal { index: usize, value: f64 },

    #[error("ensemble marginals sum to {sum}, expected {expected}")]
    InconsistentMarginalSum { sum: f64, expected: f64 },

    #[error(
        "robustness certificate violated: min diagonal {min_diag}, max off-diagonal \
         {max_offdiag}, max |row sum| {max_abs_rowsum}"
    )]
    CertificateViolation {
        min_diag: f64,
        max_offdiag: f64,
        max_abs_rowsum: f64,
    },

    #[error("rejection sampler exhausted its budget after {restarts} restarts")]
    RestartBudget { restarts: usize },

    #[error("{n} items is too many to enumerate")]
    EnumerationTooLarge { n: usize },

    #[error("all-zero polynomial has no well-defined roots")]
    ZeroPolynomial,

    #[error("the zero vector is not a state")]
    ZeroState,

    #[error("density matrix invalid: {0}")]
    InvalidDensity(&'static str),
}
