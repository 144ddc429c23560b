//! Error type shared by the core modules.

use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Case data violated a structural invariant.
    #[error("case validation failed: {0}")]
    Validation(String),

    /// Elimination hit a pivot below the singularity threshold.
    #[error("singular matrix: pivot failure at elimination step {pivot}")]
    SingularMatrix { pivot: usize },

    /// A listed cut edge does not exist or is out of service.
    #[error("invalid cut edge {from}-{to}: {reason}")]
    InvalidCut { from: usize, to: usize, reason: String },

    /// A subsystem or subdomain is not internally connected, or a cut
    /// fails to separate its endpoints.
    #[error("partition error: {0}")]
    Partition(String),

    /// A cut branch carries zero series admittance.
    #[error("cut edge {from}-{to} has zero series admittance")]
    ZeroCutAdmittance { from: usize, to: usize },

    /// Boundary relaxation failed to meet the port-current tolerance.
    #[error("boundary relaxation did not converge within {max_iters} iterations at t = {t} s (mismatch {mismatch:e}, sigma {sigma:e})")]
    RelaxationDiverged { t: f64, max_iters: usize, mismatch: f64, sigma: f64 },

    /// A local Schur block could not be factored.
    #[error("singular interior block in subdomain {subdomain} (pivot step {pivot})")]
    SingularSubdomain { subdomain: usize, pivot: usize },

    /// The reduced interface matrix could not be factored.
    #[error("singular reduced interface matrix (pivot step {pivot})")]
    SingularInterface { pivot: usize },

    /// Device derivatives were not at equilibrium after initialization.
    #[error("steady-state residual too large for {device}: |dx/dt| = {residual:e} (limit {limit:e})")]
    SteadyState { device: String, residual: f64, limit: f64 },

    /// Vector/matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An event referenced a bus or branch that does not exist.
    #[error("unknown event target: {0}")]
    UnknownTarget(String),

    /// A solver failure while processing an event mid-run.
    #[error("at t = {t} s, after applying events: {detail}")]
    MidRun { t: f64, detail: String },

    /// The initialization power flow did not converge.
    #[error("initialization power flow did not converge: residual {residual:e} after {iters} sweeps")]
    PowerFlowDiverged { residual: f64, iters: usize },

    /// Eigenvalue iteration failed to converge.
    #[error("eigenvalue computation did not converge")]
    EigenFailed,
}

pub type Result<T> = core::result::Result<T, Error>;
