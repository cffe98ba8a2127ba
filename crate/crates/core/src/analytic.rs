//! Closed-form trajectories.
//!
//! The coherent part precesses as `dr/dt = omega x r`. Damping multiplies
//! the coherent vector by the decay envelope
//! `f(t) = exp(-delta t) + nu (1 - exp(-mu t))`, which is produced by the
//! damping rates `lambda_k(t) = g(t) r0_k(t)` with
//! `g(t) = f'(t) / (f(t)^2 - 1)`. The initial coherent state is the north
//! pole throughout.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::state::{purity, BlochVector};
use crate::{Error, Result};

/// Coefficients `(omega_x, omega_y, omega_z)` of `H0 = sum_k omega_k I_k`, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentField {
    pub omega_x: f64,
    pub omega_y: f64,
    pub omega_z: f64,
}

impl CoherentField {
    pub fn new(omega_x: f64, omega_y: f64, omega_z: f64) -> Result<Self> {
        for (what, v) in [("omega_x", omega_x), ("omega_y", omega_y), ("omega_z", omega_z)] {
            if !v.is_finite() {
                return Err(Error::Domain { what, value: v });
            }
        }
        Ok(Self { omega_x, omega_y, omega_z })
    }

    /// Drive of strength `omega1` along +y, the on-resonance configuration.
    pub fn along_y(omega1: f64) -> Self {
        Self { omega_x: 0.0, omega_y: omega1, omega_z: 0.0 }
    }

    pub fn zero() -> Self {
        Self { omega_x: 0.0, omega_y: 0.0, omega_z: 0.0 }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.omega_x, self.omega_y, self.omega_z)
    }

    /// Effective angular frequency `|omega|`.
    pub fn omega(&self) -> f64 {
        self.as_vector().norm()
    }

    /// `2 pi / Omega`, infinite for a vanishing field.
    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.omega()
    }
}

/// Decay envelope parameters: rates `delta`, `mu` (1/s) and the residual
/// Bloch radius `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayModel {
    delta: f64,
    mu: f64,
    nu: f64,
}

impl DecayModel {
    /// Requires `delta >= mu > 0` and `0 <= nu < 1`.
    pub fn new(delta: f64, mu: f64, nu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Domain { what: "mu", value: mu });
        }
        if !(delta >= mu && delta.is_finite()) {
            return Err(Error::Domain { what: "delta (must be >= mu)", value: delta });
        }
        if !(0.0..1.0).contains(&nu) {
            return Err(Error::Domain { what: "nu", value: nu });
        }
        Ok(Self { delta, mu, nu })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Time after which only the residual radius is left, `1 / delta`.
    pub fn fast_time(&self) -> f64 {
        1.0 / self.delta
    }

    /// Root of the numerator of `g`: `ln(delta / (nu mu)) / (delta - mu)`.
    ///
    /// `None` when `nu = 0` or `delta = mu`, where `g` never changes sign.
    pub fn rate_sign_change(&self) -> Option<f64> {
        let num_ratio = self.delta / (self.nu * self.mu);
        let gap = self.delta - self.mu;
        if !(num_ratio.is_finite() && num_ratio > 1.0 && gap > 0.0) {
            return None;
        }
        Some(num_ratio.ln() / gap)
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Rotates `r0` about the field axis by `Omega t` (solution of
/// `dr/dt = omega x r`).
///
/// Written as `r0 cos(Ot) + (w x r0) t sinc(Ot) + w (w.r0) (t^2/2) sinc^2(Ot/2)`
/// so the vanishing-field limit is regular and `1 - cos` never cancels.
pub fn coherent_propagate(h: &CoherentField, r0: BlochVector, t: f64) -> BlochVector {
    let w = h.as_vector();
    let r = r0.to_vector();
    let theta = h.omega() * t;
    let s_half = sinc(0.5 * theta);
    let out = r * theta.cos() + w.cross(&r) * (t * sinc(theta)) + w * (w.dot(&r) * 0.5 * t * t * s_half * s_half);
    BlochVector::from_vector(&out)
}

/// Coherent trajectory from the north pole.
pub fn coherent_bloch(h: &CoherentField, t: f64) -> BlochVector {
    coherent_propagate(h, BlochVector::NORTH, t)
}

/// `1 - f(t)`, computed without cancellation at small `t`.
fn one_minus_f(d: &DecayModel, t: f64) -> f64 {
    -(-d.delta * t).exp_m1() + d.nu * (-d.mu * t).exp_m1()
}

/// Decay envelope `f(t) = exp(-delta t) + nu (1 - exp(-mu t))`.
pub fn decay_f(d: &DecayModel, t: f64) -> f64 {
    (-d.delta * t).exp() - d.nu * (-d.mu * t).exp_m1()
}

/// `f'(t) = -delta exp(-delta t) + nu mu exp(-mu t)`.
pub fn decay_f_derivative(d: &DecayModel, t: f64) -> f64 {
    -d.delta * (-d.delta * t).exp() + d.nu * d.mu * (-d.mu * t).exp()
}

/// Damping-rate envelope `g(t) = (delta e^{-delta t} - nu mu e^{-mu t}) / (1 - f^2)`.
///
/// Only defined for `t > 0`: as `t -> 0+` it diverges like `1 / (2t)`.
pub fn decay_g(d: &DecayModel, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain { what: "time for g(t) (requires t > 0)", value: t });
    }
    let numerator = -decay_f_derivative(d, t);
    let omf = one_minus_f(d, t);
    let denom = omf * (2.0 - omf);
    Ok(numerator / denom)
}

/// `f(t) r0(t)`.
pub fn damped_bloch(h: &CoherentField, d: &DecayModel, t: f64) -> BlochVector {
    coherent_bloch(h, t).scaled(decay_f(d, t))
}

/// `lambda_k(t) = g(t) r0_k(t)`, rad/s.
pub fn gamma_coefficients(h: &CoherentField, d: &DecayModel, t: f64) -> Result<Vector3<f64>> {
    let g = decay_g(d, t)?;
    Ok(coherent_bloch(h, t).to_vector() * g)
}

/// `1/2 + f(t)^2 / 2`.
pub fn purity_closed_form(d: &DecayModel, t: f64) -> f64 {
    let f = decay_f(d, t);
    0.5 + 0.5 * f * f
}

/// Long-time purity `1/2 + nu^2 / 2`.
pub fn purity_limit(d: &DecayModel) -> f64 {
    0.5 + 0.5 * d.nu * d.nu
}

/// Purity of the damped state via the Bloch norm; agrees with
/// [`purity_closed_form`].
pub fn damped_purity(h: &CoherentField, d: &DecayModel, t: f64) -> Result<f64> {
    purity(damped_bloch(h, d, t))
}
