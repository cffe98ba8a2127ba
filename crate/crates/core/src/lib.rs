//! Two-level (spin-1/2) dynamics under a state-dependent non-Hermitian
//! Hamiltonian that drives a pure state toward a low-purity mixed state.
//!
//! The crate is organised bottom-up:
//!
//! - [`state`]: Bloch vectors, density matrices, purity and fidelity.
//! - [`analytic`]: closed-form coherent and damped trajectories, the decay
//!   functions `f(t)` and `g(t)`, and the damping-rate coefficients.
//! - [`dynamics`]: an independent RK4 integrator for the nonlinear master
//!   equation in Bloch and density-matrix form.
//! - [`nmr`]: thermal state, polarization factor, pseudo-pure split,
//!   rotating-frame field and the rf pulse.
//! - [`fit`]: least-squares estimation of the decay model from measured
//!   magnetization, plus fidelity and residual-magnetization statistics.
//! - [`simulate`]: model selection and grid sampling used by the CLI.
//! - [`exec`]: sequential / rayon execution switch.
//!
//! All rates and frequencies are angular (rad/s); times are seconds.

pub mod analytic;
pub mod dynamics;
mod error;
pub mod exec;
pub mod fit;
pub mod nmr;
pub mod presets;
pub mod simulate;
pub mod state;

pub use analytic::{CoherentField, DecayModel};
pub use dynamics::{GammaOperator, StepControl, Trajectory};
pub use error::{Error, Result};
pub use exec::Execution;
pub use fit::{DecayParams, FitOptions, FitResult, MagnetizationSeries};
pub use nmr::NmrContext;
pub use state::{BlochVector, DensityMatrix, Operator};
