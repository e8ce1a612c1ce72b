//! Semiclassical simulation of nuclear-spin polarization dynamics in dilute
//! dipolar spin networks: randomly diluted nuclei hop polarization between
//! lattice sites while paramagnetic defects drain it into a fluctuating
//! electronic environment.
//!
//! The model is a classical master equation dp/dt = (W + R) p on a single
//! disorder realization, where
//!
//! * `W` is a symmetric hopping matrix built from secular dipolar couplings
//!   (flip-flop exchange, rescaled by the pulse-sequence factor kappa^2),
//! * `R` is a diagonal loss matrix built from nucleus-electron couplings
//!   filtered through the drive's sideband comb and a Lorentzian noise
//!   spectrum.
//!
//! Ensemble averages over many realizations produce decay curves which are
//! analysed with a two-channel product law `exp(-sqrt(Rp t)) * exp(-Rd t)`.
//!
//! Module map:
//!
//! * [`lattice`]    - diamond-lattice boxes, random site population, frozen core
//! * [`dipolar`]    - physical constants and dipolar coupling tables
//! * [`floquet`]    - pulse-train propagators, effective-frame extraction,
//!   kappa and sideband (Fourier) coefficients
//! * [`bath`]       - Lorentzian electron noise, optical-pumping (7-level)
//!   generator, laser-power calibration
//! * [`engine`]     - W/R assembly, eigenmode propagation, ensemble decay
//! * [`spectral`]   - mode decompositions, slowest-mode statistics, 2D mode
//!   profiles, eigenvalue spectra
//! * [`transport`]  - spin-diffusion front tracking, MSD power-law fits,
//!   finite-size scans
//! * [`fitkit`]     - decay-law fitting, gamma sweeps, survival-function
//!   oracles
//! * [`scans`]      - regime presets, laser scans, concentration landscapes,
//!   ordered-vs-random controls
//! * [`config`]     - run configuration (JSON) with validation
//! * [`io`]         - CSV/JSON emission and run manifests
//! * [`cli`]        - the `spinnet` command-line entry points
//!
//! Every major capability has a runnable demonstration under `examples/`;
//! start with `cargo run --release -p spinnet --example emergent_decay`.

// Ensure the BLAS/LAPACK provider is linked.
extern crate openblas_src as _;

pub mod bath;
pub mod cli;
pub mod config;
pub mod dipolar;
pub mod engine;
pub mod fitkit;
pub mod floquet;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod scans;
pub mod spectral;
pub mod transport;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on user-supplied parameters failed. Messages list every
    /// violation found, one per line.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// An iterative or quadrature routine failed to converge to tolerance.
    #[error("not converged: {0}")]
    NotConverged(String),
    /// LAPACK returned a nonzero info code.
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    /// Too little usable data for a requested fit or statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Convenience: build an `InvalidInput` from anything displayable.
pub fn invalid<T: std::fmt::Display>(msg: T) -> Error {
    Error::InvalidInput(msg.to_string())
}
