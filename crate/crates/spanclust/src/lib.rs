//! Bayesian spatial functional clustering.
//!
//! `spanclust` groups spatially contiguous regions by the similarity of their
//! latent temporal risk trajectories. Partitions of the region adjacency graph
//! are represented by spanning trees with removed edges and sampled with a
//! Metropolis–Hastings chain; the acceptance probability scores each proposal
//! by per-cluster marginal likelihoods of a latent Gaussian model, computed
//! with a nested Laplace approximation (inner Gaussian approximation of the
//! latent field, outer numerical integration over hyperparameters).
//!
//! The main pieces:
//!
//! * [`graph`] — region adjacency graphs, minimum spanning trees, partitions.
//! * [`model`] — within-cluster latent Gaussian models: observation families
//!   and latent components selected by name from a registry.
//! * [`laplace`] — per-cluster marginal likelihood approximation.
//! * [`moves`] — birth/death/change/hyper proposals and their prior and
//!   transition ratios.
//! * [`sampler`] — the chain itself, with incremental marginal caching.
//! * [`posterior`] — point-estimate selection (Binder loss) and partition
//!   comparison metrics (ARI, RI, NID).
//! * [`simdata`] — synthetic lattices and panels for validation studies.

pub mod error;
pub mod graph;
pub mod laplace;
pub mod model;
pub mod moves;
pub mod posterior;
pub mod sampler;
pub mod simdata;

pub use error::{GraphError, LaplaceError, ModelError, MoveError, PosteriorError, SamplerError};
