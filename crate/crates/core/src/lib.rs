//! Diffusion annealed Langevin Monte Carlo along Gaussian and Student's t
//! diffusion paths, with evaluators for the associated Lipschitz, action and
//! complexity bounds and numerical diagnostics to check them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod config;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod paths;
pub mod quadrature;
pub mod sampler;
pub mod schedules;
pub mod serde_util;
pub mod special;
pub mod targets;
pub mod theory;

pub use error::{Error, Result};
pub use targets::{Target, TargetSpec};
