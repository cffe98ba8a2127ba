//! Fitted parameter sets for the two measured samples.

use std::f64::consts::TAU;

use crate::analytic::{CoherentField, DecayModel};

/// Decay ratio used in both published fits.
pub const DELTA_OVER_MU: f64 = 11.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    /// Measured nutation frequency, Hz.
    pub rabi_hz: f64,
    /// Drive used in the model, as a multiple of the measured one.
    pub drive_ratio: f64,
    /// `mu / omega1` against the measured nutation frequency.
    pub mu_over_omega1: f64,
    pub delta_over_mu: f64,
    pub nu: f64,
}

/// Trimethyl phosphite.
pub const TPP: Preset = Preset {
    name: "tpp",
    rabi_hz: 21186.0,
    drive_ratio: 1.05,
    mu_over_omega1: 3.95e-3,
    delta_over_mu: DELTA_OVER_MU,
    nu: 6.53e-2,
};

/// Disodium phosphate.
pub const DSP: Preset = Preset {
    name: "dsp",
    rabi_hz: 18657.0,
    drive_ratio: 1.07,
    mu_over_omega1: 3.79e-3,
    delta_over_mu: DELTA_OVER_MU,
    nu: 5.82e-2,
};

pub const ALL: [Preset; 2] = [TPP, DSP];

impl Preset {
    pub fn by_name(name: &str) -> Option<Preset> {
        ALL.into_iter().find(|p| p.name.eq_ignore_ascii_case(name))
    }

    /// Measured nutation frequency, rad/s.
    pub fn omega1(&self) -> f64 {
        TAU * self.rabi_hz
    }

    /// Model drive, rad/s.
    pub fn drive(&self) -> f64 {
        self.drive_ratio * self.omega1()
    }

    pub fn field(&self) -> CoherentField {
        CoherentField::along_y(self.drive())
    }

    pub fn mu(&self) -> f64 {
        self.mu_over_omega1 * self.omega1()
    }

    pub fn delta(&self) -> f64 {
        self.delta_over_mu * self.mu()
    }

    pub fn decay(&self) -> DecayModel {
        DecayModel::new(self.delta(), self.mu(), self.nu).expect("preset decay parameters are feasible")
    }

    /// Fast decay time `1 / delta`, seconds.
    pub fn delta_inverse(&self) -> f64 {
        1.0 / self.delta()
    }
}
