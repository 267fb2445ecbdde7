//! Simulation and analysis toolkit for ultrafast squeezed light.
//!
//! The crate covers the full numerical chain of a sub-cycle homodyne
//! squeezing experiment:
//!
//! * [`fock`]: exact single-mode Kerr states in the Fock basis, their
//!   quadrature statistics, Wigner functions, and Gaussian-approximation
//!   fidelity.
//! * [`twa`]: stochastic c-field propagation of a multimode pulse under a
//!   nonlinear Schroedinger equation with half-photon vacuum noise in every
//!   mode (truncated Wigner method).
//! * [`modes`]: covariance and coherency analysis of multimode quadrature
//!   records, with a principal-mode decomposition.
//! * [`tomography`]: quadrature histograms, filtered-backprojection Wigner
//!   reconstruction, rotated 2D Gaussian fits, and squeezing metrics.
//! * [`synth`]: synthetic homodyne record generation for Gaussian and Kerr
//!   states, with a simple detector model and a delay-dependent nonlinear
//!   phase profile.
//! * [`sigproc`]: low-pass filtering of delay traces, Welch power spectra,
//!   and relative intensity noise summaries.
//! * [`cli`]: the command-line front end orchestrating the above into
//!   reproducible, manifest-stamped runs.
//!
//! Conventions used throughout: quadratures are X = (a + a^dag)/sqrt(2),
//! P = (a - a^dag)/(i sqrt(2)), so the vacuum variance is 1/2 and phase-space
//! points map to field amplitudes via alpha = (X + iP)/sqrt(2). Wigner grids
//! are normalized over dX dP.

pub mod cli;
pub mod config;
pub mod fock;
pub mod grid;
pub mod io;
pub mod modes;
pub mod sigproc;
pub mod synth;
pub mod tomography;
pub mod twa;
pub(crate) mod util;

use thiserror::Error;

/// Unified error type for the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or configuration value.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Malformed or inconsistent data (files, datasets, grids).
    #[error("data error: {0}")]
    Data(String),
    /// Numerical failure (instability, non-convergence, defect detection).
    #[error("numerical failure: {0}")]
    Numerics(String),
    /// I/O failure with the offending path.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
