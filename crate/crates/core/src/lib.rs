//! Deterministic round-based simulator of a clustered wireless sensor network.
//!
//! Cluster heads are elected each round from fuzzy-normalized node criteria,
//! members reach their head over a minimum spanning tree, and heads fuse the
//! collected readings with a small neural network before a single uplink to
//! the base station. All energy is charged with the first-order radio model.

pub mod clustering;
pub mod config;
pub mod energy;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod metrics;
pub mod rng;
pub mod routing;
pub mod sensing;
pub mod sim;
pub mod verify;

pub use config::{Protocol, SimConfig};
pub use error::{Result, SimError};
pub use geometry::Point;
pub use metrics::{RoundMetrics, RunSummary};
pub use sim::{run_simulation, Simulation, SimulationRun};
