//! Lattice approximations of the parabolic Anderson model with Dirichlet
//! boundary conditions, and of the branching random walk in random
//! environment that is killed on leaving a box.
//!
//! Module map:
//! - [`lattice`]: boxes, the doubled torus, odd/even extensions.
//! - [`spectral`]: sine/cosine transforms, multipliers, the lattice Laplacian.
//! - [`besov`]: Littlewood-Paley blocks, Bony products, Besov norms.
//! - [`environment`]: noise sampling and the renormalized enhancement.
//! - [`pam`]: linear and nonlinear solvers, principal eigenpair.
//! - [`brwre`]: exact event-driven particle simulation and killing.
//! - [`verify`]: statistical duality and martingale checks.
//! - [`io`]: text and binary dump formats.

pub mod besov;
pub mod brwre;
pub mod environment;
pub mod error;
pub mod io;
pub mod lattice;
pub mod pam;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use lattice::{Field, Flavor, LatticeSpec, TorusField};
