//! Gaussian processes on spaces of graphs.
//!
//! Graphs on `n` labelled nodes are encoded as binary edge-indicator vectors.
//! The set of all such vectors is a hypercube whose Laplacian is diagonalized
//! by Walsh functions, so every isotropic kernel reduces to a short weighted
//! sum of Kravchuk level sums. Kernels invariant to node relabelling are
//! obtained by averaging over a permutation group.

pub mod cli;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod graphspace;
pub mod invariance;
pub mod kernels;
pub mod kravchuk;
pub mod seed;

pub use error::{GraphGpError, Result};
pub use graphspace::{GraphCode, GraphSpace, GraphSpaceKind, NodePermutation, SlotPermutation, SpaceKey};
pub use kernels::{Covariance, IsotropicKernel, KernelSpec, LaplacianVariant};
pub use kravchuk::KravchukTable;
