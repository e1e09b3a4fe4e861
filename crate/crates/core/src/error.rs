use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// n̄_B = 0: a noiseless environment leaves nothing to hide in.
    #[error("covert communication is impossible without environment noise (nbar_B must be > 0)")]
    CovertnessImpossible,

    /// A logarithm of the form log(1 + 1/n_T) blows up at n_T = 0.
    #[error("divergent logarithm: {0}")]
    DivergentLogarithm(&'static str),

    /// Small-n̄_S expansions are only meaningful for n̄_S < 1.
    #[error("expansion domain error: nbar_S = {nbar_s} must lie in (0, 1)")]
    ExpansionDomain { nbar_s: f64 },

    /// The structured-receiver approximation needs n̄_S < w.
    #[error("approximation domain error: nbar_S = {nbar_s} must be below w = {w}")]
    ApproximationDomain { nbar_s: f64, w: f64 },

    /// A quantity that is nonnegative analytically came out negative beyond rounding.
    #[error("internal consistency error: {0}")]
    InternalConsistency(String),

    /// Covariance matrix violates the uncertainty principle.
    #[error("non-physical covariance matrix: {0}")]
    NonPhysicalCm(String),

    /// Covariance matrix lacks the block pattern the closed forms assume.
    #[error("unsupported covariance structure: {0}")]
    UnsupportedStructure(String),

    /// A symplectic eigenvalue sits at 1/2, where arccoth(2λ) is singular.
    #[error("pure-state singularity: symplectic eigenvalue {lambda} is within 1e-9 of 1/2")]
    PureStateSingularity { lambda: f64 },

    /// Displacement too large for the requested Fock truncation.
    #[error("truncation unsafe: |alpha|^2 = {alpha_sq} exceeds K/4 = {limit}")]
    TruncationUnsafe { alpha_sq: f64, limit: f64 },

    /// Probability leaked out of the truncated space beyond the configured bound.
    #[error("truncation error: leakage {leakage:e} exceeds bound {bound:e}")]
    Truncation { leakage: f64, bound: f64 },

    /// Adaptive truncation did not settle before the dimension cap.
    #[error("truncation did not converge by K = {k_max} (last change {last_change:e})")]
    NoConvergence { k_max: usize, last_change: f64 },

    /// Matrix is not a valid density operator.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// supp(ρ) is not contained in supp(σ).
    #[error("infinite relative entropy: weight {weight:e} of rho lies outside the support of sigma")]
    InfiniteRelativeEntropy { weight: f64 },

    /// V = 0 makes the Φ⁻¹ term ill defined unless ε = 1/2.
    #[error("degenerate variance: V = 0 with epsilon != 1/2")]
    DegenerateVariance,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
