//! Handwriting synthesis with a character-conditioned DCGAN.
//!
//! The crate trains a generator/discriminator pair conditioned on ASCII
//! characters, with a matching-aware discriminator that also learns to reject
//! real images carrying the wrong character. Generated glyphs are then
//! composed into words by a proportional controller that drives inter-letter
//! spacing and stroke angles toward a measured handwriting profile.
//!
//! Modules:
//! - [`data`]: IDX / PGM ingestion, charsets, padding and batching
//! - [`nn`]: layers with analytic gradients and Adam
//! - [`gan`]: generator, discriminator and noise sampling
//! - [`train`]: the adversarial loop, checkpoints and evaluation
//! - [`metrics`]: ink boxes, spacing and stroke-angle measurement
//! - [`profile`]: the pair profile, penalty controller and word composition
//! - [`cli`]: the `glyphgan` command line

pub mod cli;
pub mod data;
pub mod gan;
pub mod metrics;
pub mod nn;
pub mod profile;
pub mod train;
