//! Learning task-space robot policies from demonstrations with
//! heteroscedastic Gaussian processes.
//!
//! The pipeline: demonstrations ([`alignment::Trajectory`]) are aligned with
//! dynamic time warping over the task completion index, pooled on a common
//! normalized-time grid, and encoded as six independent heteroscedastic GPs
//! over `(x, y, z, θu_x, θu_y, θu_z)` ([`policy::TaskPolicy`]). The policy can
//! be adapted with via-points by a product of Gaussians, and its predictive
//! uncertainty drives a variable-stiffness admittance controller
//! ([`admittance`]).

pub mod admittance;
pub mod alignment;
mod error;
pub mod gp;
pub mod io;
pub mod policy;
pub mod se3;

pub use error::{Error, Result};
