//! Simulation and bifurcation-analysis toolkit for an artificial neuron
//! circuit built around a quantum memristive element.
//!
//! The device is a two-level quantum particle shuttling between two
//! terminals; electron tunneling through it gives a conductance that
//! depends on the particle state, which in turn is driven by the voltage
//! across the device. Coupled to an external RC circuit this produces
//! hysteretic DC characteristics and, for moderate dissipation,
//! self-sustained voltage oscillations.
//!
//! The crate is organized around the dimensionless model:
//!
//! - [`overlap`]: conductance overlap functions `F_ij(x_V)` and their
//!   derivatives, by Gauss-Hermite quadrature, with an optional
//!   interpolation table for hot loops.
//! - [`model`]: parameter and state types, the explicit ODE right-hand
//!   side, conductance/current, unit conversion and parameter validation.
//! - [`dynamics`]: adaptive Runge-Kutta time integration, stationary
//!   span extraction and power spectra.
//! - [`equilibria`]: DC equilibria as roots of the balance function
//!   `f(V)`, Jacobian assembly, eigenvalues and stability classes.
//! - [`bifurcation`]: cusp, saddle-node and Andronov-Hopf point location.
//! - [`sweeps`]: hysteresis sweeps, amplitude-vs-parameter curves with
//!   square-root-law fits, and 2-D parameter scans.

pub mod bifurcation;
pub mod dynamics;
pub mod equilibria;
mod error;
pub mod model;
pub mod overlap;
pub mod sweeps;

pub use error::{Error, Result};
pub use model::{CircuitParams, DeviceParams, State};
pub use overlap::{Geometry, OverlapEvaluator, OverlapSource, OverlapTable};
