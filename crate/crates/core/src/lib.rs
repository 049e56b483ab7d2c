//! Spectral fixed-point solver and solvability certifier for stationary
//! nonlinear integro-differential systems
//!
//! ```text
//! u_k'' + b_k u_k' + a_k u_k + ∫ G_k(x - y) F_k(u(y), y) dy = 0,   k = 1..N
//! ```
//!
//! posed either on the whole real line or on `[0, 2π]` with periodic boundary
//! conditions. Equations with a drift coefficient `b_k` come first, the ones
//! without drift follow.
//!
//! The pipeline is:
//!
//! 1. [`problem`]: classify each equation into its case and build the
//!    constrained-subspace bookkeeping.
//! 2. [`kernel`]: moments, Fourier profiles and orthogonality verdicts for the
//!    kernels `G_k`, plus the Fredholm classification of the linear parts.
//! 3. [`multiplier`]: singularity-safe multipliers `Ĝ_k(p) / symbol_k(p)` and
//!    the bound quantities that feed the contraction certificate
//!    `2√π·Q·L < 1`.
//! 4. [`solver`]: Picard iteration of the auxiliary map, done spectrally.
//! 5. [`oracle`]: physical-space residuals that share no code path with the
//!    spectral pipeline.
//!
//! [`cli`] wires everything to JSON configs and CSV/JSON reports.

pub mod cli;
pub mod config;
pub mod domain;
pub mod fourier;
pub mod kernel;
pub mod multiplier;
pub mod nonlinearity;
pub mod oracle;
pub mod problem;
pub mod profile;
pub mod quadrature;
pub mod solver;

pub use domain::DomainSpec;
pub use fourier::{SpectralField, VectorField};
pub use kernel::{KernelSpectrum, OrthogonalityReport};
pub use multiplier::{ContractionCertificate, MultiplierTable};
pub use nonlinearity::NonlinearityModel;
pub use problem::{CaseTag, ConstraintSet, EquationSpec, ProblemSpec};
pub use profile::Profile;
pub use solver::{Analysis, IterationTrace, Solution};

/// Relative tolerance for the orthogonality verdicts.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// Distance from `n²` below which a non-drift periodic equation must state
/// its resonance explicitly.
pub const RESONANCE_TOL: f64 = 1e-9;

/// Relative threshold for the spectral support overlap in the nontriviality test.
pub const SUPPORT_TOL: f64 = 1e-10;

/// Largest contraction factor accepted in certified mode.
pub const CERTIFIED_FACTOR: f64 = 0.95;
