//! Riemannian generative decoder.
//!
//! Per-sample latent points live on a Riemannian manifold and are fitted
//! jointly with an MLP decoder by maximum likelihood. Latents are updated with
//! Riemannian Adam; training optionally perturbs latents with noise shaped by
//! the inverse metric, which penalizes the decoder Jacobian.

pub mod ablation;
pub mod checkpoint;
pub mod data;
pub mod decoder;
pub mod manifold;
pub mod metrics;
pub mod noise;
pub mod riemannian;
pub mod train;

pub use manifold::{ManifoldError, ManifoldKind, ManifoldSpec, MetricAt};
