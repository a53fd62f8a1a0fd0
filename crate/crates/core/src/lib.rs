//! Learn a parametric model of an attributed partite graph and generate
//! synthetic replicas of arbitrary size.
//!
//! The model has three parts that are fitted independently and recombined at
//! generation time:
//!
//! * [`structgen`] fits a generalized stochastic-Kronecker seed to the
//!   observed in/out degree distributions and samples scaled edge lists;
//! * [`featgen`] learns the joint distribution of edge-centric feature rows;
//! * [`aligner`] pairs generated feature rows with generated edges using
//!   boosted-tree predictions from structural node features.
//!
//! [`metrics`] scores a synthetic graph against the original and
//! [`pipeline`] wires everything into fit / generate / evaluate commands.

pub mod aligner;
pub mod error;
pub mod featgen;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod structgen;
pub mod table;

pub use error::{Error, Result};
