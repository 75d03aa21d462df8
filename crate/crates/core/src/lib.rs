//! Stability and Hopf bifurcation analysis of a harvested one-predator
//! two-prey Lotka-Volterra system whose predator responds to prey through a
//! distributed delay, with the mean delay `E` as the bifurcation parameter.
//!
//! The crate covers the model and its equilibrium ([`model`]), delay kernels
//! ([`kernel`]), the characteristic quasi-polynomial and its roots
//! ([`spectral`]), direct simulation ([`sim`]) and the command-line layer
//! ([`config`], [`report`], [`validate`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod report;
pub mod sim;
pub mod spectral;
pub mod validate;

pub use error::{Error, Result};
pub use kernel::{DelayKernel, KernelFamily};
pub use model::{Equilibrium, LinearCoeffs, ModelParams};
