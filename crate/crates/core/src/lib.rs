//! Non-local transport distances on finite state spaces driven by jump kernels.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod geodesic;
pub mod kernels;
pub mod means;
pub mod numeric;
pub mod semigroup;
pub mod spaces;

/// Library version recorded in output headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use action::{action, MomentumField};
pub use analysis::{CheckReport, Harness};
pub use dynamics::{ce_residual, divergence, path_action, Path};
pub use error::{Error, Result};
pub use geodesic::{distance, solve_geodesic, two_point_oracle, GeodesicResult, SolverConfig};
pub use kernels::{build_fractional, EdgeWeights, JumpKernel, KernelSpec};
pub use means::Mean;
pub use semigroup::{entropy, evolve, fisher_information, SemigroupBackend};
pub use spaces::{make_lattice, ProbabilityDensity, StateSpace};
