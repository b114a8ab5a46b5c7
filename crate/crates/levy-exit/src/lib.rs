//! Scale functions and exit identities for spectrally-negative Levy processes
//! observed at Poisson arrival times.
//!
//! The model family is restricted to processes with a rational Laplace
//! exponent (linear drift, optional Brownian component, compound-Poisson
//! downward jumps with hyperexponential sizes). For that family the scale
//! functions `W_q`, `Z_q(.,theta)` and the two-parameter `Z~` are finite sums
//! of exponentials obtained by partial fractions, so every identity can be
//! evaluated to near machine precision and cross-checked against an exact
//! event-driven Monte Carlo simulator and a quadrature-based identity suite.

pub mod error;
pub mod identities;
pub mod ks;
pub mod model;
pub mod quad;
pub mod scale;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use identities::ExitQuery;
pub use model::{LevyModel, RootSystem};
pub use scale::ScaleContext;
pub use sim::MCEstimate;
pub use verify::CheckReport;

/// Threshold below which removable-singularity branches are taken.
pub const DELTA_LIMIT: f64 = 1e-6;

/// Minimum admissible spacing between roots of `psi_q`; anything closer is
/// reported as a numeric failure rather than handled confluently.
pub const ROOT_SEPARATION: f64 = 1e-8;
