//! Lorenz '96 style systems `x' = G(x) - x + F e` with general advection terms.
//!
//! * [`gmap`]: symbolic advection terms, energy certificates, parsing
//! * [`spectral`]: Laurent polynomials, eigenvalue curves, the bilinear symbol
//! * [`bifurcation`]: Hopf and Hopf-Hopf analysis in closed form
//! * [`dynamics`]: integrators, invariant audits, low-dimensional reductions
//! * [`equilibria`]: Newton and homotopy continuation for stationary states
//! * [`experiments`]: attractor classification, ensembles, Hovmoeller diagnostics

pub mod bifurcation;
pub mod dynamics;
pub mod equilibria;
pub mod experiments;
pub mod error;
pub mod gmap;
pub mod spectral;

pub use error::{Error, Result};
pub use gmap::{GMap, Monomial};
