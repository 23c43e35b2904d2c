//! Samplers on `(θ, Z)`: innovation scheme, partially conjugate Gibbs update,
//! preconditioned random walk, positivity-constrained variants, and chain
//! diagnostics.

mod act;
mod chain;
mod conjugate;
mod kernel;
mod prior;

pub use act::{act_estimate, autocorrelation, ActEstimate};
pub use chain::{
    run_chain, Acceptance, Algorithm, ChainOutput, ChainState, Counts, Flags, McmcConfig, Sampler, SegmentState,
};
pub use conjugate::{accumulate, conjugate_stats, ConjugateStats};
pub use kernel::{default_alpha, preconditioned_log_ratio, ProposalKernel};
pub use prior::{in_support, log_prior, PriorSpec};
