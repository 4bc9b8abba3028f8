//! Distributed Nash equilibrium seeking for coalition games played by
//! uncertain Euler-Lagrange agents under local and coupling constraints.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: communication topologies, Laplacians, connectivity and the
//!   selector matrices of the stacked estimation layer.
//! * [`game`]: the coalition game data model, pseudogradients, projections,
//!   KKT certificates and a centralized reference solver.
//! * [`seeker`]: the decision-layer vector field (auxiliary primal dynamics,
//!   multiplier dynamics, gradient tracking and action estimation).
//! * [`plant`]: Euler-Lagrange plants driven by the adaptive robust tracking
//!   controller.
//! * [`usv`]: the surface-vehicle swarm confrontation instantiation.
//! * [`sim`]: fixed-step integration, trajectory logging and convergence
//!   detection.
//! * [`cli`]: scenario files and the command-line front end.

pub mod cli;
pub mod error;
pub mod game;
pub mod graph;
pub mod plant;
pub mod seeker;
pub mod sim;
pub mod usv;

pub use error::{Error, Result};
