//! Extremes of a pair of correlated fractional Brownian motions.
//!
//! The pair `(X1, X2)` has marginal fBm laws with indices `alpha1`, `alpha2`
//! and cross-covariance `r * s^{alpha1/2} * t^{alpha2/2}`.

pub mod asymptotics;
pub mod bounds;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod pickands;
pub mod sampler;
pub mod special;

pub use error::{Error, Result};
pub use model::{build_joint_covariance, cross_covariance, fbm_covariance, Grid, JointCovariance, ModelParams};
pub use sampler::{path_supremum, sample_fbm_path, sample_pair, PairSampler, PathPair, SeedSpec};
