//! Norm-ratio sparsity toolkit.
//!
//! Implements the `L1/L2` (more generally `Lp/Lq`, `0 < p <= 1 < q`)
//! ratio-sparsity models
//!
//! ```text
//! constrained:    min ||x||_p / ||x||_q   s.t.  A x = b,  x in X
//! unconstrained:  min gamma ||x||_p / ||x||_q + 1/2 ||A x - b||^2,  x in X
//! ```
//!
//! with `X` either the free space or the nonnegative orthant, and provides:
//!
//! * exact first/second derivatives of ratio objectives and the closed-form
//!   spectra of the rank-two matrices that show up in their restricted
//!   Hessians ([`calculus`]),
//! * L2-ball radii containing every local minimizer, plus per-entry magnitude
//!   bounds and case classification for nonzero entries ([`bounds`]),
//! * first/second-order certification of candidate local minimizers
//!   ([`stationarity`]),
//! * a sign-fixed descent solver with deterministic multistart and an exact
//!   vertex-scan global oracle for the reduction family ([`solver`]),
//! * encoders that turn partition / 3-partition instances into ratio-sparsity
//!   problems, certificate embedding/extraction, and optimal-value
//!   verification against exhaustive combinatorial oracles ([`reduction`]).
//!
//! All numerics are double precision; matrices are dense (desk scale).
//! Combinatorial decisions (weight sums, certificate feasibility) use exact
//! rational arithmetic.

pub mod bounds;
pub mod calculus;
pub mod model;
pub mod reduction;
pub mod solver;
pub mod stationarity;

pub use nalgebra;

pub use bounds::{
    audit_point, entry_bound_report, l2_ball_radii, sigma_min_nonzero, AuditRecord, BoundsError,
    EntryBound, EntryBoundReport, EntryCase, RadiiRecord, SpectralSummary,
};
pub use calculus::{
    q_matrix_spectrum, rank_two_eigenvalues, ratio_derivatives, restricted_l1l2_derivatives,
    CalculusError, QSpectrum, RankTwoSpec, RatioDerivatives, RatioPoint, RestrictedDerivatives,
};
pub use model::{
    feasibility_residual, objective_value, pnorm, power_inequality_check, support_and_stats,
    validate_instance, Cone, InstanceJson, ModelError, ModelKind, PowerInequalityReport,
    ProblemInstance, SignalVector, SupportStats, DEFAULT_SUPPORT_REL_TOL,
};
pub use reduction::{
    encode_partition, encode_three_partition, embed_certificate, extract_partition,
    parse_rational, parse_weights, partition_oracle, verify_reduction, OracleOutcome,
    PartitionSpec, PartitionWitness, ReductionBundle, ReductionError, ReductionKind,
    ReductionMeta, VerificationCheck, VerificationReport,
};
pub use solver::{
    global_oracle_partition_polytope, multistart_solve, solve_local, CertifiedPoint,
    GlobalOracleResult, SolveOutcome, SolveTrace, SolverError, SolverOptions, TraceRecord,
};
pub use stationarity::{
    certify_local_minimizer, constrained_stationarity, first_order_residual,
    ConstrainedStationarityReport, FirstOrderReport, MinimizerCertificate, StationarityError,
    Verdict, DEFAULT_TOL_FO, DEFAULT_TOL_SO,
};

/// Workspace-wide error wrapper, mostly useful for CLI exit-code mapping.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Stationarity(#[from] StationarityError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
}

impl Error {
    /// True when the failure is an enumeration-budget overrun rather than a
    /// malformed input.
    pub fn is_budget_exceeded(&self) -> bool {
        matches!(
            self,
            Error::Reduction(ReductionError::BudgetExceeded { .. })
                | Error::Solver(SolverError::BudgetExceeded { .. })
        )
    }
}
