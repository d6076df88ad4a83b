//! Spin-orbit coupled neutron dynamical diffraction.
//!
//! The crate computes exit spinor wavefields of neutrons diffracted by
//! non-centrosymmetric perfect crystals in the two-beam approximation, with
//! the nuclear potential and the Schwinger (spin-orbit) term, and analyses
//! them for polarization, phase vortices and orbital angular momentum.
//!
//! Module map:
//! - [`crystal`]: crystal model, structure factors, spinor potential.
//! - [`dispersion`]: two-beam branches and Bragg/Laue boundary problems.
//! - [`wavefield`]: (rocking, tilt) grids, polarization and phase maps.
//! - [`oam`]: azimuthal Fourier analysis and OAM distributions.
//! - [`instrument`]: resolution convolution, fits, coil model, scan files.
//! - [`config`] / [`run`]: the configuration-driven pipeline behind the CLI.

pub mod config;
pub mod constants;
pub mod crystal;
pub mod data;
pub mod dispersion;
pub mod error;
pub mod instrument;
pub mod oam;
pub mod presets;
pub mod run;
pub mod spinor;
pub mod wavefield;

pub use constants::PhysicalConstants;
pub use error::{Error, ErrorKind, Result};
pub use spinor::{Spinor, SpinorMatrix, Vec3, C64};
