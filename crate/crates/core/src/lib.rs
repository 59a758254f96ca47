//! Continuous-time q-learning for jump-diffusion control problems regularized
//! by Tsallis entropy, with closed-form reference solutions for a liquidation
//! problem with a dark pool and a repo-lending problem.

pub mod closed_form;
pub mod config;
pub mod entropy;
pub mod envs;
pub mod error;
pub mod normalizer;
pub mod params;
pub mod policy;
pub mod qlearn;
pub mod quadrature;
pub mod trace;

pub use entropy::EntropyParams;
pub use error::{Error, Result};
pub use params::ParamVector;
pub use policy::QGaussian2D;
