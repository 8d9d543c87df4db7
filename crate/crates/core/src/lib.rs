//! Lifting chains on linear preferential attachment trees and the
//! Λ n-coalescents they induce.
//!
//! The crate is organized bottom-up:
//!
//! - [`partitions`]: finite set partitions in least-element order
//! - [`port_trees`]: plane-oriented recursive trees, counting, enumeration
//!   and uniform (preferential attachment) sampling
//! - [`lifting`]: edge lifting and the continuous-time lifting chain
//! - [`coalescent`]: Λ-coalescent rates (quadrature, closed form, exact) and
//!   a simulator
//! - [`exact_oracle`]: exhaustive small-n enumeration in rational arithmetic
//! - [`crp_gem`]: Chinese restaurant process, GEM sticks, root partitions
//! - [`stats_verify`]: statistical comparisons and the experiment harness

pub mod coalescent;
pub mod crp_gem;
pub mod error;
pub mod exact_oracle;
pub mod lifting;
pub mod partitions;
pub mod port_trees;
pub mod quadrature;
pub mod stats_verify;
pub mod trajectory;

/// Exact big-integer fraction, always in lowest terms.
pub type Rational = num_rational::BigRational;

pub use coalescent::{LambdaMeasure, RateTable};
pub use error::{Error, Result};
pub use lifting::{LiftEvent, LiftTrajectory};
pub use partitions::{BlockIndex, Partition};
pub use port_trees::{NodeRef, PlaneTree};
pub use trajectory::{PartitionPath, StateChange};
pub use stats_verify::{ComparisonReport, Experiment, ExperimentConfig, RngSpec};
