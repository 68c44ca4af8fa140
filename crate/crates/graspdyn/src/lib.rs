//! Estimation of a grasped rigid object's inertial parameters (mass, center
//! of mass, inertia matrix) and static friction coefficient from timestamped
//! pose observations and multi-point contact-force measurements.
//!
//! Inertial estimation runs as sparse nonlinear least squares over a factor
//! graph whose variables live on mixed manifolds (poses on SE(3), inertial
//! parameters on a physically-consistent manifold, forces and contact points
//! in Euclidean space). A built-in rigid-body simulator generates ground
//! truth trajectories for validation, and a force-servo procedure estimates
//! Coulomb friction from the force right before slip.

pub mod dynamics;
pub mod error;
pub mod filter;
pub mod friction;
pub mod graph;
pub mod hull;
pub mod inertia;
pub mod io;
pub mod se3;
pub mod sim;

pub use error::{Error, Result};
