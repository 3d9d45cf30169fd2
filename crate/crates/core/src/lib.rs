//! Numerical core for the harmonic metric heat flow on hermitian bundles over
//! flat complex tori.
//!
//! The library works with a fixed set of sign and normalization choices that
//! are spelled out in [`conventions`]. Everything downstream (curvature
//! assembly, the flow integrator, the functionals, the blow-up analysis) is
//! written against that single ledger, and [`suite::check_suite`] re-derives
//! the basic calibration facts at runtime so a misconfigured build fails
//! loudly rather than silently producing numbers in a different convention.
//!
//! Layout:
//! - [`geometry`]: torus grids and the spectral/finite-difference derivative
//!   engines.
//! - [`matrix`]: dense complex linear algebra for small fibre dimensions.
//! - [`fields`]: endomorphism valued fields, metrics, one- and two-forms.
//! - [`connection`]: connections, their metric decomposition, pseudo-curvature
//!   and the identity battery.
//! - [`functionals`]: energy, the Donaldson-style functional (closed form and
//!   path quadrature) and the sigma distance.
//! - [`flow`]: the adaptive exponential Euler integrator.
//! - [`analysis`]: flow series invariants, Bochner residuals, blow-up
//!   projector extraction and splitting checks.
//! - [`presets`], [`random`]: canned connections and seeded random data.
//! - [`config`], [`snapshot`], [`output`], [`experiment`]: serialization and
//!   the end-to-end experiment driver.

pub mod analysis;
pub mod config;
pub mod connection;
pub mod conventions;
pub mod error;
pub mod experiment;
pub mod fields;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod matrix;
pub mod output;
pub mod presets;
pub mod random;
pub mod snapshot;
pub mod suite;

pub use error::NhymError;
pub use geometry::{Scheme, SpectralEngine, TorusGeometry};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, NhymError>;
