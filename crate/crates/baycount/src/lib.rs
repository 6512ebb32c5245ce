//! Negative-binomial factor analysis of count matrices.
//!
//! Decomposes a genes-by-samples read-count matrix `Y` into a small number of
//! latent factors ("subclones"), modeling each entry as
//! `y_ij ~ NB(lambda*alpha_i + sum_k phi_ik*theta_kj*zeta_j, p_j)` so that raw
//! counts are analyzed directly, without normalization. Inference runs a
//! compound-Poisson blocked Gibbs sampler; the number of factors is chosen by
//! the second-order finite difference of the estimated log-likelihood over a
//! grid of candidate K.
//!
//! The crate is organized around the pipeline stages:
//!
//! * [`model`] — domain types (count matrix, hyperparameters, model state)
//!   and the deterministic model formulas (means, NB log-mass, log-likelihood).
//! * [`dist`] — exact samplers for every distribution the sampler needs
//!   (gamma, Dirichlet, CRT, logarithmic, sum-logarithmic, multinomial, NB).
//! * [`rng`] — reproducible counter-keyed random-number substreams.
//! * [`gibbs`] — the blocked Gibbs sweep and the chain runner.
//! * [`selection`] — per-K chains and the second-difference selection rule.
//! * [`synthetic`] — ground-truth data generators and recovery scoring.
//! * [`posterior`] — posterior summaries, clustering, and gene ranking.
//!
//! With the default `parallel` feature the table-allocation step, likelihood
//! evaluation, and per-K chains run on rayon; results are bitwise identical
//! to the sequential build at any worker count.

pub mod dist;
pub mod gibbs;
pub mod model;
pub mod posterior;
pub mod rng;
pub mod selection;
pub mod special;
pub mod synthetic;

mod error;

pub use error::{Error, Result};
