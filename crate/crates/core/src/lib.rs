//! Over-approximate collision probability between two rectangular vehicles.
//!
//! Both footprints are covered by equal circles along their longitudinal
//! axes. The object's position and heading are uncertain; the set of object
//! configurations where any pair of circles touch contains every rectangle
//! collision, so integrating the belief over it bounds the true probability
//! from above.
//!
//! - [`geometry`]: covers, polar transforms, per-pair heading intervals
//! - [`interval`]: integration grid and disjoint interval sets
//! - [`poc`]: Gaussian densities and the precomputed estimator
//! - [`mcs`]: Monte Carlo ground truth on the exact rectangles
//! - [`smpc`]: path-following stochastic MPC with a collision-probability constraint
//! - [`scenarios`]: reproducible experiments built on the above

pub mod error;
pub mod geometry;
pub mod interval;
pub mod mcs;
pub mod poc;
pub mod scenarios;
pub mod smpc;

pub use error::{Error, Result};
pub use geometry::{AngleInterval, CircleCover, Configuration, RectangleFootprint};
pub use mcs::{McsResult, SeededSampler};
pub use poc::{AdaptivePocEstimator, GaussianBelief, HeadingTruncation, PocEstimator};
