//! Covert communication over lossy thermal-noise bosonic channels.
//!
//! The crate computes the square-root-law quantities of covert communication
//! with and without entanglement assistance, and validates every closed form
//! against an independent truncated Fock-space oracle:
//!
//! * [`scalar_capacity`]: photon budgets, Holevo and entanglement-assisted
//!   capacities, small-n̄_S expansions, covert constants.
//! * [`symplectic_gaussian`]: two-mode covariance matrices, symplectic spectra,
//!   Gibbs matrices and the relative-entropy variance of Gaussian states.
//! * [`fock_oracle`]: brute-force density matrices and relative-entropy moments.
//! * [`finite_blocklength`]: normal-approximation lower bounds on message size.
//! * [`verify`]: the acceptance suite behind `covert verify`.
//!
//! All information quantities are reported in bits; covariance matrices use
//! qqpp ordering with vacuum variance 1/2.

pub mod error;
pub mod finite_blocklength;
pub mod fock_oracle;
pub mod scalar_capacity;
pub mod symplectic_gaussian;
pub mod verify;

pub use error::{Error, Result};
pub use finite_blocklength::{BoundInputs, MBound, MBoundTerms, QCalibration};
pub use scalar_capacity::{ChannelParams, CovertBudget, CovertConstants, ReceiverParams};
pub use fock_oracle::{ChannelSuperop, Converged, FockOperator, QpskMoments, RelEntMoments, TruncationConfig};
pub use symplectic_gaussian::{GibbsMatrix, SymplecticSpectrum, TwoModeCM};
