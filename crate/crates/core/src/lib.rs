//! Desk-scale convex integration for the incompressible Euler equations on
//! the periodic unit torus.
//!
//! The crate is organised bottom-up: [`spectral`] provides band-limited
//! fields and constant-coefficient operators; [`mikado`] builds the pipe
//! flows; [`flow`] computes back-to-labels charts and transport solutions;
//! [`gluing`] localizes the stress in time; [`osc`] inverts the divergence
//! of oscillatory right-hand sides; [`step`] performs one convex integration
//! step; [`scheduler`] evolves the frequency-energy parameters; [`verify`]
//! bundles the invariant checks into named suites.

pub mod error;
pub mod euler;
pub mod flow;
pub mod gluing;
pub mod mikado;
pub mod osc;
pub mod scheduler;
pub mod spectral;
pub mod step;
pub mod verify;

pub use error::{Error, Result};
pub use spectral::*;
