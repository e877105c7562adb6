//! Numerical toolkit for the simplified Ericksen-Leslie system: an
//! incompressible velocity field coupled to a unit director field relaxing
//! by harmonic map flow.
//!
//! Everything lives on a periodic cube sampled on an `n^3` lattice. The
//! crate provides
//!
//! * [`grid`]: fields, derivative operators (spectral and fourth-order
//!   finite differences), radial cutoffs with closed-form derivatives,
//!   ball/annulus quadrature and a small binary field format,
//! * [`morrey`]: local Morrey norms, weighted Lebesgue norms, annulus decay
//!   profiles and the eta region map,
//! * [`spectral`]: Riesz transforms, Leray projection, pressure
//!   reconstruction, heat convolution and a Besov sup norm,
//! * [`ericksen`]: stationary residuals, the explicit stationary state with
//!   linearly growing velocity, and a periodic solver (integrating factor +
//!   RK2) with an energy ledger,
//! * [`verify`]: report-only checkers for integration-by-parts identities,
//!   Caccioppoli-type local energy estimates, global/local energy balances,
//!   embedding constants and the Liouville-type hypothesis harness,
//! * [`synth`]: deterministic presets and seeded random smooth fields used
//!   by the test batteries and the command line tool.
//!
//! Checkers never mutate their inputs and never decide "theorem true"; they
//! measure defects against stated tolerances and report.

pub mod error;
pub mod fft;
pub mod grid;
pub mod morrey;
pub mod spectral;
pub mod ericksen;
pub mod verify;
pub mod synth;

pub use error::ElkError;
