//! NMR mapping: thermal equilibrium, polarization, pseudo-pure split,
//! rotating-frame field and the rf rotation.
//!
//! The gyromagnetic ratio never enters: every observable here is a ratio
//! to the equilibrium magnetization.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::analytic::CoherentField;
use crate::dynamics::Trajectory;
use crate::state::{bloch_to_density, spin_identity, BlochVector, DensityMatrix, Operator};
use crate::{Error, Result};

/// Reduced Planck constant, J s (CODATA 2018).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K (exact).
pub const K_B: f64 = 1.380_649e-23;
/// 24 degrees Celsius.
pub const ROOM_TEMPERATURE: f64 = 297.15;

/// Spectrometer settings for a single spin species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmrContext {
    /// Larmor angular frequency, rad/s.
    pub larmor: f64,
    /// rf carrier angular frequency, rad/s.
    pub rf: f64,
    /// rf nutation strength, rad/s.
    pub rabi: f64,
    /// rf phase, rad.
    pub phase: f64,
    /// Temperature, K.
    pub temperature: f64,
}

impl NmrContext {
    pub fn new(larmor: f64, rf: f64, rabi: f64, phase: f64, temperature: f64) -> Result<Self> {
        if !(larmor > 0.0 && larmor.is_finite()) {
            return Err(Error::Domain { what: "Larmor frequency", value: larmor });
        }
        if !(rabi > 0.0 && rabi.is_finite()) {
            return Err(Error::Domain { what: "rf strength", value: rabi });
        }
        if !(temperature > 0.0) {
            return Err(Error::Domain { what: "temperature", value: temperature });
        }
        if !rf.is_finite() || !phase.is_finite() {
            return Err(Error::InvalidParameter(format!("rf {rf} / phase {phase} must be finite")));
        }
        Ok(Self { larmor, rf, rabi, phase, temperature })
    }

    /// On resonance with the drive along -y in the lab convention (`phi = 3 pi / 2`).
    pub fn on_resonance(larmor: f64, rabi: f64, temperature: f64) -> Result<Self> {
        Self::new(larmor, larmor, rabi, 1.5 * PI, temperature)
    }

    /// `hbar omega_L / (2 k_B T)`.
    pub fn reduced_energy(&self) -> f64 {
        HBAR * self.larmor / (2.0 * K_B * self.temperature)
    }

    /// `Z = 2 cosh(beta hbar omega_L / 2)`.
    pub fn partition_function(&self) -> f64 {
        2.0 * self.reduced_energy().cosh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    /// `tanh(hbar omega_L / 2 k_B T)`.
    Exact,
    /// First-order expansion, `hbar omega_L / 2 k_B T`.
    HighTemperature,
}

pub fn polarization_factor(ctx: &NmrContext, mode: Polarization) -> f64 {
    let x = ctx.reduced_energy();
    match mode {
        Polarization::Exact => x.tanh(),
        Polarization::HighTemperature => x,
    }
}

/// `I0 + eps Iz` with the exact polarization.
pub fn thermal_state(ctx: &NmrContext) -> DensityMatrix {
    let eps = polarization_factor(ctx, Polarization::Exact);
    bloch_to_density(BlochVector::new(0.0, 0.0, eps))
}

/// Splits `I0 + eps Iz` into `(1 - eps) I0 + eps rho0`, returning
/// `(1 - eps, rho0)` with `rho0` the north-pole state.
pub fn pseudo_pure_decompose(rho_eq: &DensityMatrix, eps: f64) -> Result<(f64, DensityMatrix)> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain { what: "polarization", value: eps });
    }
    let expected = bloch_to_density(BlochVector::new(0.0, 0.0, eps));
    let defect = (rho_eq.matrix() - expected.matrix()).camax();
    if !(defect <= 1e-10) {
        return Err(Error::NotThermal { defect });
    }
    Ok((1.0 - eps, bloch_to_density(BlochVector::NORTH)))
}

/// `(rho_eq - I0) / eps`, the traceless part seen by the spectrometer.
pub fn deviation_matrix(rho_eq: &DensityMatrix, eps: f64) -> Result<Operator> {
    if !(eps > 0.0) {
        return Err(Error::Domain { what: "polarization", value: eps });
    }
    Ok((rho_eq.matrix() - spin_identity()).unscale(eps))
}

/// `exp(i omega1 t_r Iy) = cos(theta/2) 1 + i sin(theta/2) sigma_y` with
/// `theta = omega1 t_r`. Real, with period `4 pi / omega1`.
pub fn rotation_pulse(omega1: f64, t_r: f64) -> Operator {
    let (s, c) = (0.5 * omega1 * t_r).sin_cos();
    let (c, s) = (Complex64::new(c, 0.0), Complex64::new(s, 0.0));
    Operator::new(c, s, -s, c)
}

/// State after the pulse, `U^dagger m U`.
///
/// The pulse is the rotation about -y; with this ordering the north pole
/// tips toward +x, matching the measured `M_x = f sin(omega1 t)`.
pub fn apply_pulse(pulse: &Operator, m: &Operator) -> Operator {
    pulse.adjoint() * m * pulse
}

/// Rotating-frame coefficients `(omega1 cos(phi + pi), omega1 sin(phi + pi), -(omega_L - omega_rf))`.
pub fn rotating_frame_field(ctx: &NmrContext) -> CoherentField {
    let (s, c) = (ctx.phase + PI).sin_cos();
    CoherentField { omega_x: ctx.rabi * c, omega_y: ctx.rabi * s, omega_z: -(ctx.larmor - ctx.rf) }
}

/// Dimensionless magnetization `M_k(t) = r_k(t)`.
pub fn dimensionless_magnetization(traj: &Trajectory) -> Vec<[f64; 3]> {
    traj.states().iter().map(|r| r.to_array()).collect()
}
