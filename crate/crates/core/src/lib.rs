//! Manifold Metropolis-adjusted Langevin samplers whose proposals remain
//! well defined as the discretization of a path space is refined.
//!
//! The crate targets the posterior of a scalar diffusion path observed with
//! error, discretized on a uniform grid:
//!
//! * [`tridiag`]: O(N) factorizations, solves and Gaussian draws for
//!   symmetric tridiagonal precision matrices.
//! * [`model`]: the prior precision, the potential `Φ`, its gradient, the
//!   metric tensor `G(x)` and the drift vector `S(x)`; data simulation.
//! * [`sampler`]: the ∞-MMALA, ∞-MALA and MMALA kernels and the chain driver.
//! * [`diagnostics`]: quadratic variation, chain summaries and the exact
//!   posterior of the linear-Gaussian case.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod model;
pub mod sampler;
pub mod tridiag;

pub use diagnostics::{exact_gaussian_posterior, qv_estimate, trace_indices, ChainSummary};
pub use error::{Error, Result};
pub use model::{
    build_prior_precision, DiffusionTarget, Drift, GridSpec, MetricKind, ModelFunctions, ObsMap,
    ObservationSet, Path,
};
pub use sampler::{
    run_chain, run_chain_seeded, Algorithm, ChainState, InitStrategy, ProposalCoeffs, RunConfig,
    Sampler, StepRecord,
};
pub use tridiag::{CholBidiag, SymTridiag};
