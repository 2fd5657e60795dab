//! Bayesian calibration engine for multidimensional explanatory item
//! response models on sparsely-linked person/item response data.
//!
//! Persons and items are both *units* carrying latent vectors. Units are
//! partitioned into blocks; each block has a multivariate latent regression
//! `u = B'x + e`, `e ~ N(0, S R S)`, and the posterior is explored by a
//! Metropolis-Hastings-within-Gibbs sampler with a four-phase adaptive
//! tuning schedule.
//!
//! Module map:
//! - [`model`]: response families, parameter transforms, linkage index.
//! - [`regression`]: block regression parameters and their conditional updates.
//! - [`sampler`]: the Gibbs driver, tuning and posterior storage.
//! - [`diagnostics`]: R-hat, WAIC and posterior predictive checks.
//! - [`io`]: configuration, tabular input and run outputs.
//! - [`simgen`]: synthetic data from the full generative model.

pub mod diagnostics;
pub mod error;
pub mod io;
pub mod model;
pub mod regression;
pub mod sampler;
pub mod simgen;

pub use error::{Error, Result};
