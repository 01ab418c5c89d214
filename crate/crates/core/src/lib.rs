//! Simulation and verification toolkit for marginally disordered systems of
//! directed-polymer type: exact lattice kernels and replica overlaps,
//! partition functions from dynamic programming, polynomial chaos and block
//! variables, closed-form limit laws with their quadratures, a regularized
//! 2d stochastic-heat-equation surrogate, and a statistics harness.
//!
//! Three concrete models are built in: the simple random walk on Z^2, a
//! long-range walk on Z with Cauchy-type steps, and a renewal (pinning)
//! process with tail exponent 1/2. All three share the same marginal
//! overlap structure: the replica overlap R_N diverges like a slowly varying
//! function, disorder is scaled as beta = beta_hat / sqrt(R_N), and for
//! beta_hat < 1 the partition function approaches an explicit log-normal
//! limit with multi-scale correlations.

pub mod chaos;
pub mod disorder;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod limits;
pub mod partition;
pub(crate) mod quad;
pub mod she;

pub use error::{Error, Result};
pub use kernels::{
    beta_schedule, block_boundaries, build_kernel, llt_diagnostic, overlap_table,
    triple_norm_zeta, BlockPartition, LatticeKernel, ModelKind, OverlapTable, SpaceTime,
};
