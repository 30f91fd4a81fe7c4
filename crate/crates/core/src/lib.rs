//! Generative design toolkit: a GAN whose generator loss adds a
//! quality-weighted determinantal point process term, where quality is the
//! Design Target Achievement Index (DTAI) of surrogate-predicted performance
//! times a classifier's feasibility likelihood.
//!
//! Module map:
//! - [`data`]: datasets, schemas, normalization, targets and target ratios.
//! - [`nn`]: dense networks, reverse-mode gradients, Adam, surrogate training.
//! - [`dtai`]: achievement scores, DTAI aggregation and its gradients.
//! - [`dpp`]: similarity kernel, quality weighting, log-determinant loss.
//! - [`gan`]: generator/discriminator training with the auxiliary loss.
//! - [`metrics`]: evaluation metrics, hypervolume, KDE export.
//! - [`benchmark`]: synthetic problem with exact oracle and the comparison harness.
//! - [`config`] and [`cli`]: experiment configuration and the command-line front end.

pub mod benchmark;
pub mod cli;
pub mod config;
pub mod data;
pub mod dpp;
pub mod dtai;
pub mod error;
pub mod gan;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod stats;

pub use error::{Error, Result};
