//! Two-level state algebra.
//!
//! The Bloch triple is the canonical representation; density matrices are
//! derived views built on the spin basis `I0 = 1/2`, `Ik = sigma_k / 2`.

use nalgebra::{Matrix2, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// 2x2 complex operator.
pub type Operator = Matrix2<Complex64>;

/// Slack on the unit ball before a Bloch vector is called unphysical.
pub const BALL_TOLERANCE: f64 = 1e-9;
/// Largest tolerated Hermiticity defect of a stored density matrix.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;
/// Largest tolerated |Tr - 1| of a stored density matrix.
pub const TRACE_TOLERANCE: f64 = 1e-12;
/// Eigenvalues down to this (negative) value still count as positive.
pub const POSITIVITY_TOLERANCE: f64 = -1e-9;
/// Purity below this makes the fidelity normalisation meaningless.
pub const MIN_PURITY: f64 = 1e-15;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn identity() -> Operator {
    Operator::identity()
}

pub fn sigma_x() -> Operator {
    Operator::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Operator {
    Operator::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Operator {
    Operator::new(ONE, ZERO, ZERO, -ONE)
}

/// `I0 = 1/2`.
pub fn spin_identity() -> Operator {
    identity().scale(0.5)
}

/// Spin operators `(Ix, Iy, Iz)`.
pub fn spin_operators() -> [Operator; 3] {
    [sigma_x().scale(0.5), sigma_y().scale(0.5), sigma_z().scale(0.5)]
}

/// `sum_k v_k I_k`.
pub fn spin_combination(v: &Vector3<f64>) -> Operator {
    let h = |x: f64| Complex64::new(0.5 * x, 0.0);
    Operator::new(
        h(v.z),
        Complex64::new(0.5 * v.x, -0.5 * v.y),
        Complex64::new(0.5 * v.x, 0.5 * v.y),
        h(-v.z),
    )
}

/// Decomposes `m = c0 I0 + sum_k c_k I_k`, returning `(c0, c)`.
///
/// Exact for Hermitian input; the anti-Hermitian part is discarded.
pub fn spin_coefficients(m: &Operator) -> (f64, Vector3<f64>) {
    let c0 = (m[(0, 0)] + m[(1, 1)]).re;
    let cx = (m[(0, 1)] + m[(1, 0)]).re;
    let cy = (m[(1, 0)] - m[(0, 1)]).im;
    let cz = (m[(0, 0)] - m[(1, 1)]).re;
    (c0, Vector3::new(cx, cy, cz))
}

/// `max |a_ij - conj(a_ji)|`.
pub fn hermiticity_defect(m: &Operator) -> f64 {
    let adj = m.adjoint();
    (m - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Bloch vector `(r_x, r_y, r_z)` of a two-level state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const NORTH: BlochVector = BlochVector { x: 0.0, y: 0.0, z: 1.0 };
    pub const CENTER: BlochVector = BlochVector { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm_squared(self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scaled(self, s: f64) -> Self {
        Self::new(s * self.x, s * self.y, s * self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Inside the unit ball up to [`BALL_TOLERANCE`].
    pub fn is_physical(self) -> bool {
        self.is_finite() && self.norm() <= 1.0 + BALL_TOLERANCE
    }

    pub fn max_abs_diff(self, other: Self) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }
}

impl From<[f64; 3]> for BlochVector {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Unit-trace 2x2 density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    /// Checks Hermiticity, unit trace and positivity.
    pub fn new(m: Operator) -> Result<Self> {
        let rho = Self(m);
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps a matrix without checking the invariants. Integrators use this
    /// for intermediate states; call [`DensityMatrix::validate`] on results.
    pub fn new_unchecked(m: Operator) -> Self {
        Self(m)
    }

    pub fn maximally_mixed() -> Self {
        Self(spin_identity())
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn into_matrix(self) -> Operator {
        self.0
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// `Tr[rho^2]`, real part.
    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.0)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.0[(0, 0)].re;
        let d = self.0[(1, 1)].re;
        let b = 0.5 * (self.0[(0, 1)] + self.0[(1, 0)].conj());
        let mean = 0.5 * (a + d);
        let half_gap = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        [mean - half_gap, mean + half_gap]
    }

    pub fn validate(&self) -> Result<()> {
        let defect = self.hermiticity_defect();
        if !(defect <= HERMITIAN_TOLERANCE) {
            return Err(Error::Domain { what: "Hermiticity defect", value: defect });
        }
        let tr = self.trace();
        if !((tr - ONE).norm() <= TRACE_TOLERANCE) {
            return Err(Error::NonUnitTrace { trace: tr.re });
        }
        let lo = self.eigenvalues()[0];
        if !(lo >= POSITIVITY_TOLERANCE) {
            return Err(Error::Domain { what: "smallest eigenvalue", value: lo });
        }
        Ok(())
    }
}

/// `I0 + r_x Ix + r_y Iy + r_z Iz`. Any real triple is accepted.
pub fn bloch_to_density(r: BlochVector) -> DensityMatrix {
    DensityMatrix(spin_identity() + spin_combination(&r.to_vector()))
}

/// `r_k = 2 Tr[I_k rho]`.
///
/// Rejects a trace further than `trace_tolerance` from one; pass
/// [`TRACE_TOLERANCE`] for strict conversion.
pub fn density_to_bloch_with(rho: &DensityMatrix, trace_tolerance: f64) -> Result<BlochVector> {
    let tr = rho.trace();
    if !((tr - ONE).norm() <= trace_tolerance) {
        return Err(Error::NonUnitTrace { trace: tr.re });
    }
    let (_, r) = spin_coefficients(rho.matrix());
    Ok(BlochVector::from_vector(&r))
}

pub fn density_to_bloch(rho: &DensityMatrix) -> Result<BlochVector> {
    density_to_bloch_with(rho, TRACE_TOLERANCE)
}

/// `(1 + |r|^2) / 2`, clamped to 1 for norms within float noise of the
/// unit sphere.
pub fn purity(r: BlochVector) -> Result<f64> {
    let n2 = r.norm_squared();
    if !n2.is_finite() || n2.sqrt() > 1.0 + BALL_TOLERANCE {
        return Err(Error::Unphysical { norm: n2.sqrt() });
    }
    Ok((0.5 * (1.0 + n2)).min(1.0))
}

/// Normalised overlap `Tr[a b] / sqrt(Tr[a^2] Tr[b^2])`.
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    let pa = a.purity();
    let pb = b.purity();
    for p in [pa, pb] {
        if !(p >= MIN_PURITY) {
            return Err(Error::ZeroNorm { purity: p });
        }
    }
    let overlap = (a.matrix() * b.matrix()).trace().re;
    Ok(overlap / (pa * pb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_entry_diff(a: &Operator, b: &Operator) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn bloch_to_density_examples() {
        let north = bloch_to_density(BlochVector::NORTH);
        assert_eq!(*north.matrix(), Operator::new(c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)));

        let mixed = bloch_to_density(BlochVector::CENTER);
        assert_eq!(*mixed.matrix(), Operator::identity().scale(0.5));

        let plus_x = bloch_to_density(BlochVector::new(1.0, 0.0, 0.0));
        let h = c(0.5, 0.0);
        assert_eq!(*plus_x.matrix(), Operator::new(h, h, h, h));
    }

    #[test]
    fn density_to_bloch_examples() {
        let north = DensityMatrix::new(Operator::new(c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.))).unwrap();
        assert_eq!(density_to_bloch(&north).unwrap(), BlochVector::NORTH);

        let plus_y =
            DensityMatrix::new(Operator::new(c(0.5, 0.), c(0., -0.5), c(0., 0.5), c(0.5, 0.))).unwrap();
        let r = density_to_bloch(&plus_y).unwrap();
        assert_abs_diff_eq!(r.x, 0.0);
        assert_abs_diff_eq!(r.y, 1.0);
        assert_abs_diff_eq!(r.z, 0.0);

        let r = density_to_bloch(&DensityMatrix::maximally_mixed()).unwrap();
        assert_eq!(r, BlochVector::CENTER);
    }

    #[test]
    fn density_to_bloch_rejects_bad_trace() {
        let m = DensityMatrix::new_unchecked(Operator::identity());
        assert!(matches!(density_to_bloch(&m), Err(Error::NonUnitTrace { .. })));
    }

    #[test]
    fn validation_catches_each_invariant() {
        let non_herm = Operator::new(c(0.5, 0.), c(0.3, 0.), c(0.1, 0.), c(0.5, 0.));
        assert!(DensityMatrix::new(non_herm).is_err());
        let neg = Operator::new(c(1.5, 0.), c(0., 0.), c(0., 0.), c(-0.5, 0.));
        assert!(matches!(DensityMatrix::new(neg), Err(Error::Domain { .. })));
        // just outside the ball but within positivity slack
        let r = BlochVector::new(0.0, 0.0, 1.0 + 1e-10);
        assert!(bloch_to_density(r).validate().is_ok());
    }

    #[test]
    fn purity_examples() {
        assert_eq!(purity(BlochVector::NORTH).unwrap(), 1.0);
        assert_eq!(purity(BlochVector::CENTER).unwrap(), 0.5);
        let p = purity(BlochVector::new(0.0, 0.0653, 0.0)).unwrap();
        assert_abs_diff_eq!(p, 0.502132045, epsilon = 1e-9);
    }

    #[test]
    fn purity_clamps_float_noise_and_rejects_unphysical() {
        assert_eq!(purity(BlochVector::new(0.0, 0.0, 1.0 + 5e-10)).unwrap(), 1.0);
        assert!(matches!(
            purity(BlochVector::new(0.0, 0.0, 1.0 + 1e-6)),
            Err(Error::Unphysical { .. })
        ));
    }

    #[test]
    fn fidelity_examples() {
        let up = bloch_to_density(BlochVector::NORTH);
        let down = bloch_to_density(BlochVector::new(0.0, 0.0, -1.0));
        let mixed = DensityMatrix::maximally_mixed();
        assert_abs_diff_eq!(fidelity(&up, &up).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity(&up, &down).unwrap(), 0.0);
        // Tr = 1/2, Tr[a^2] = 1/2, Tr[b^2] = 1
        assert_abs_diff_eq!(fidelity(&mixed, &up).unwrap(), 1.0 / 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn fidelity_guards_zero_matrix() {
        let zero = DensityMatrix::new_unchecked(Operator::zeros());
        let up = bloch_to_density(BlochVector::NORTH);
        assert!(matches!(fidelity(&zero, &up), Err(Error::ZeroNorm { .. })));
    }

    #[test]
    fn coefficient_roundtrip() {
        let v = Vector3::new(0.3, -1.2, 2.5);
        let m = spin_identity().scale(0.7) + spin_combination(&v);
        let (c0, back) = spin_coefficients(&m);
        assert_abs_diff_eq!(c0, 0.7, epsilon = 1e-15);
        assert!((back - v).camax() < 1e-15);
        let [ix, iy, iz] = spin_operators();
        let direct = ix.scale(v.x) + iy.scale(v.y) + iz.scale(v.z);
        assert!(max_entry_diff(&direct, &spin_combination(&v)) < 1e-15);
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let rho = bloch_to_density(BlochVector::new(0.0, 0.0, 0.4));
        let [lo, hi] = rho.eigenvalues();
        assert_abs_diff_eq!(lo, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 0.7, epsilon = 1e-15);
    }
}
