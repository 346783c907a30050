//! Numerics for symmetric α-stable dynamics with distributional Besov drift.
//!
//! The crate builds the full chain from the driving noise to path statistics:
//!
//! * [`spectral`] — spectral measures on the sphere, characteristic exponents
//!   and non-degeneracy constants;
//! * [`grid`] — periodic grids and FFT-backed field arithmetic;
//! * [`kernel`] — stable heat kernels, their Fourier-multiplier derivatives,
//!   kernel-bound verification and exact increment sampling;
//! * [`besov`] — thermic-characterisation Besov norms, duality pairings and
//!   Hölder-exponent fits;
//! * [`drift`] — lacunary drift fields of prescribed negative regularity and
//!   their heat-kernel mollifications;
//! * [`pde`] — the mild (Duhamel) Cauchy problem, Picard solver, Zvonkin map
//!   and Schauder-exponent reports;
//! * [`sde`] — kernel-smoothed drift increments, Euler ensembles, stochastic
//!   Young sums and moment/uniqueness/Krylov experiments;
//! * [`harness`] — experiment configuration, orchestration and reproducible
//!   reporting behind the CLI.

pub mod besov;
pub mod drift;
pub mod error;
pub mod exponent;
pub mod fit;
pub mod grid;
pub mod harness;
pub mod kernel;
pub mod pde;
pub mod sde;
pub mod spectral;

pub use error::{Error, Result};
