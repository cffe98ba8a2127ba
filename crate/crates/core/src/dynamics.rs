//! Numerical integration of the nonlinear non-Hermitian master equation
//!
//! ```text
//! d rho / dt = -i [H0, rho] - { Gamma - Tr[Gamma rho], rho }
//! ```
//!
//! in density-matrix form, and of its Bloch-vector image
//!
//! ```text
//! dr/dt = r (lambda . r) + omega x r - lambda.
//! ```
//!
//! Both use classical fourth-order Runge-Kutta. The step inside each grid
//! interval is uniform at `max_step` unless the damping rates are large, in
//! which case it is capped at `rate_fraction / |lambda(t)|`. That cap is what
//! lets a trajectory be seeded a nanosecond after the start, where `g(t)`
//! behaves like `1 / (2t)`.

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::analytic::{gamma_coefficients, CoherentField, DecayModel};
use crate::state::{
    density_to_bloch_with, hermiticity_defect, spin_coefficients, spin_combination, spin_identity, BlochVector,
    DensityMatrix, Operator, BALL_TOLERANCE,
};
use crate::{Error, Result};

/// Trace and Hermiticity tolerance for integrated density matrices.
pub const INTEGRATION_TOLERANCE: f64 = 1e-10;
/// Seed time used when the damping rates are singular at `t = 0`.
pub const SEED_TIME: f64 = 1e-9;

/// Sampled solution on an ordered time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<BlochVector>,
    densities: Option<Vec<DensityMatrix>>,
}

pub(crate) fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidGrid(format!("non-finite time {t}")));
    }
    if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid(format!("times not strictly increasing at {} -> {}", w[0], w[1])));
    }
    Ok(())
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<BlochVector>) -> Result<Self> {
        check_grid(&times)?;
        if times.len() != states.len() {
            return Err(Error::InvalidGrid(format!("{} times but {} states", times.len(), states.len())));
        }
        if let Some(i) = states.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite state at t = {}", times[i])));
        }
        Ok(Self { times, states, densities: None })
    }

    pub fn with_densities(times: Vec<f64>, densities: Vec<DensityMatrix>) -> Result<Self> {
        let states = densities
            .iter()
            .map(|rho| density_to_bloch_with(rho, INTEGRATION_TOLERANCE))
            .collect::<Result<Vec<_>>>()?;
        let mut traj = Self::new(times, states)?;
        traj.densities = Some(densities);
        Ok(traj)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[BlochVector] {
        &self.states
    }

    pub fn densities(&self) -> Option<&[DensityMatrix]> {
        self.densities.as_deref()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, BlochVector)> + '_ {
        self.times.iter().copied().zip(self.states.iter().copied())
    }

    /// Joins two trajectories; `later` must start after `self` ends.
    pub fn concat(mut self, later: Trajectory) -> Result<Self> {
        if let (Some(&end), Some(&start)) = (self.times.last(), later.times.first()) {
            if !(start > end) {
                return Err(Error::InvalidGrid(format!("cannot append grid starting at {start} after {end}")));
            }
        }
        self.densities = match (self.densities.take(), later.densities) {
            (Some(mut a), Some(b)) => {
                a.extend(b);
                Some(a)
            }
            _ => None,
        };
        self.times.extend(later.times);
        self.states.extend(later.states);
        Ok(self)
    }
}

/// Per-component maximum absolute difference between two trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationReport {
    pub max_abs: [f64; 3],
    pub time_of_max: [f64; 3],
}

impl DeviationReport {
    /// Largest component deviation and the time it occurs.
    pub fn overall(&self) -> (f64, f64) {
        (0..3)
            .map(|k| (self.max_abs[k], self.time_of_max[k]))
            .fold((0.0, self.time_of_max[0]), |acc, x| if x.0 > acc.0 { x } else { acc })
    }
}

/// Relative tolerance used to decide two grids are the same.
const GRID_MATCH_TOLERANCE: f64 = 1e-12;

pub(crate) fn check_same_grid(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("{} vs {} samples", a.len(), b.len())));
    }
    for (i, (&ta, &tb)) in a.iter().zip(b).enumerate() {
        let scale = ta.abs().max(tb.abs());
        if (ta - tb).abs() > GRID_MATCH_TOLERANCE * scale {
            return Err(Error::GridMismatch(format!("sample {i}: t = {ta} vs {tb}")));
        }
    }
    Ok(())
}

pub fn max_deviation(a: &Trajectory, b: &Trajectory) -> Result<DeviationReport> {
    check_same_grid(&a.times, &b.times)?;
    let mut report = DeviationReport { max_abs: [0.0; 3], time_of_max: [a.times[0]; 3] };
    for ((&t, sa), sb) in a.times.iter().zip(&a.states).zip(&b.states) {
        let (va, vb) = (sa.to_array(), sb.to_array());
        for k in 0..3 {
            let d = (va[k] - vb[k]).abs();
            if d > report.max_abs[k] {
                report.max_abs[k] = d;
                report.time_of_max[k] = t;
            }
        }
    }
    Ok(report)
}

/// Damping operator `lambda0 I0 + sum_k lambda_k I_k`, coefficients in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaOperator {
    pub lambda0: f64,
    pub lambda: Vector3<f64>,
}

impl GammaOperator {
    pub fn zero() -> Self {
        Self { lambda0: 0.0, lambda: Vector3::zeros() }
    }

    pub fn matrix(&self) -> Operator {
        spin_identity().scale(self.lambda0) + spin_combination(&self.lambda)
    }

    pub fn from_matrix(m: &Operator) -> Result<Self> {
        let defect = hermiticity_defect(m);
        if defect > 1e-12 * m.camax().max(1.0) {
            return Err(Error::Domain { what: "Hermiticity defect of Gamma", value: defect });
        }
        let (lambda0, lambda) = spin_coefficients(m);
        Ok(Self { lambda0, lambda })
    }
}

pub fn gamma_operator(lambda0: f64, lambda: Vector3<f64>) -> GammaOperator {
    GammaOperator { lambda0, lambda }
}

/// `H0 - i (Gamma - Tr[Gamma rho] 1)`, all in rad/s.
pub fn effective_hamiltonian(h: &CoherentField, gamma: &GammaOperator, rho: &DensityMatrix) -> Operator {
    let g = gamma.matrix();
    let shift = (g * rho.matrix()).trace();
    let shifted = g - Operator::identity() * shift;
    spin_combination(&h.as_vector()) - shifted * Complex64::new(0.0, 1.0)
}

/// `d rho / dt = -i (H rho - rho H^dagger)` with the state-dependent `H`.
pub fn density_drift(h: &CoherentField, gamma: &GammaOperator, rho: &DensityMatrix) -> Operator {
    let heff = effective_hamiltonian(h, gamma, rho);
    let m = rho.matrix();
    (heff * m - m * heff.adjoint()) * Complex64::new(0.0, -1.0)
}

/// Right-hand side of the Bloch equations.
pub fn bloch_drift(h: &CoherentField, lambda: &Vector3<f64>, r: &Vector3<f64>) -> Vector3<f64> {
    r * lambda.dot(r) + h.as_vector().cross(r) - lambda
}

/// Time-dependent damping rates `lambda(t)` for the Bloch equations.
///
/// Non-finite rates are reported as a step underflow at that time.
pub trait DampingRates: Sync {
    fn rates(&self, t: f64) -> Vector3<f64>;
}

impl<F> DampingRates for F
where
    F: Fn(f64) -> Vector3<f64> + Sync,
{
    fn rates(&self, t: f64) -> Vector3<f64> {
        self(t)
    }
}

/// Time-dependent damping operator for the density-matrix form.
pub trait GammaSchedule: Sync {
    fn gamma(&self, t: f64) -> GammaOperator;
}

impl<F> GammaSchedule for F
where
    F: Fn(f64) -> GammaOperator + Sync,
{
    fn gamma(&self, t: f64) -> GammaOperator {
        self(t)
    }
}

/// `lambda == 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Undamped;

impl DampingRates for Undamped {
    fn rates(&self, _t: f64) -> Vector3<f64> {
        Vector3::zeros()
    }
}

impl GammaSchedule for Undamped {
    fn gamma(&self, _t: f64) -> GammaOperator {
        GammaOperator::zero()
    }
}

/// The closed-form rates `g(t) r0(t)`; infinite at `t <= 0`.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticDamping {
    pub field: CoherentField,
    pub decay: DecayModel,
}

impl DampingRates for AnalyticDamping {
    fn rates(&self, t: f64) -> Vector3<f64> {
        gamma_coefficients(&self.field, &self.decay, t).unwrap_or_else(|_| Vector3::repeat(f64::INFINITY))
    }
}

impl GammaSchedule for AnalyticDamping {
    fn gamma(&self, t: f64) -> GammaOperator {
        gamma_operator(0.0, self.rates(t))
    }
}

/// Step-size policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    /// Upper bound on the step, seconds.
    pub max_step: f64,
    /// Step is capped at `rate_fraction / |lambda(t)|`.
    pub rate_fraction: f64,
}

impl StepControl {
    pub const DEFAULT_RATE_FRACTION: f64 = 0.01;

    pub fn fixed(max_step: f64) -> Self {
        Self { max_step, rate_fraction: Self::DEFAULT_RATE_FRACTION }
    }

    /// `min(2 pi / (200 Omega), 1 / (200 delta))`.
    pub fn for_model(h: &CoherentField, decay: Option<&DecayModel>) -> Self {
        let coherent = h.period() / 200.0;
        let damping = decay.map_or(f64::INFINITY, |d| 1.0 / (200.0 * d.delta()));
        Self::fixed(coherent.min(damping))
    }
}

/// States that an explicit Runge-Kutta step can combine.
pub trait RkState: Copy {
    fn add_scaled(&self, h: f64, k: &Self) -> Self;
}

impl RkState for Vector3<f64> {
    fn add_scaled(&self, h: f64, k: &Self) -> Self {
        self + k * h
    }
}

impl RkState for Operator {
    fn add_scaled(&self, h: f64, k: &Self) -> Self {
        self + k * Complex64::new(h, 0.0)
    }
}

/// One classical RK4 step.
pub fn rk4_step<S: RkState>(rhs: &impl Fn(f64, &S) -> S, t: f64, y: &S, h: f64) -> S {
    let k1 = rhs(t, y);
    let k2 = rhs(t + 0.5 * h, &y.add_scaled(0.5 * h, &k1));
    let k3 = rhs(t + 0.5 * h, &y.add_scaled(0.5 * h, &k2));
    let k4 = rhs(t + h, &y.add_scaled(h, &k3));
    y.add_scaled(h / 6.0, &k1)
        .add_scaled(h / 3.0, &k2)
        .add_scaled(h / 3.0, &k3)
        .add_scaled(h / 6.0, &k4)
}

/// Steps `y0` across every grid interval, calling `sample` at each grid time.
fn march<S: RkState>(
    grid: &[f64],
    y0: S,
    ctl: &StepControl,
    rhs: impl Fn(f64, &S) -> S,
    rate: impl Fn(f64) -> f64,
    mut sample: impl FnMut(f64, &S) -> Result<()>,
) -> Result<()> {
    check_grid(grid)?;
    if !(ctl.max_step > 0.0) || !(ctl.rate_fraction > 0.0) {
        return Err(Error::InvalidParameter(format!("bad step control {ctl:?}")));
    }
    let mut y = y0;
    sample(grid[0], &y)?;
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let span = b - a;
        let n_uniform = (span / ctl.max_step).ceil().max(1.0);
        let uniform = span / n_uniform;
        let floor = 64.0 * f64::EPSILON * a.abs().max(b.abs());
        let mut t = a;
        while t < b {
            let lam = rate(t);
            if !lam.is_finite() {
                return Err(Error::StepUnderflow { t, rate: lam });
            }
            let mut h = uniform;
            if lam > 0.0 {
                h = h.min(ctl.rate_fraction / lam);
            }
            if h <= floor {
                return Err(Error::StepUnderflow { t, rate: lam });
            }
            // land exactly on the grid point instead of leaving a sliver
            if b - (t + h) <= 1e-9 * uniform {
                h = b - t;
            }
            y = rk4_step(&rhs, t, &y, h);
            t = if h == b - t { b } else { t + h };
        }
        sample(b, &y)?;
    }
    Ok(())
}

/// Integrates the Bloch equations from `r0` at `grid[0]`.
pub fn integrate_bloch(
    h: &CoherentField,
    rates: &impl DampingRates,
    r0: BlochVector,
    grid: &[f64],
    ctl: &StepControl,
) -> Result<Trajectory> {
    if !r0.is_finite() {
        return Err(Error::InvalidParameter(format!("non-finite initial state {r0:?}")));
    }
    let mut states = Vec::with_capacity(grid.len());
    march(
        grid,
        r0.to_vector(),
        ctl,
        |t, r| bloch_drift(h, &rates.rates(t), r),
        |t| rates.rates(t).norm(),
        |t, r| {
            let state = BlochVector::from_vector(r);
            if !(state.norm() <= 1.0 + BALL_TOLERANCE) {
                return Err(Error::IntegrationDefect { t, what: "Bloch norm", value: state.norm() });
            }
            states.push(state);
            Ok(())
        },
    )?;
    Trajectory::new(grid.to_vec(), states)
}

/// Integrates the nonlinear density-matrix equation from `rho0` at `grid[0]`.
pub fn integrate_density(
    h: &CoherentField,
    gammas: &impl GammaSchedule,
    rho0: DensityMatrix,
    grid: &[f64],
    ctl: &StepControl,
) -> Result<Trajectory> {
    let mut densities = Vec::with_capacity(grid.len());
    march(
        grid,
        rho0.into_matrix(),
        ctl,
        |t, m| density_drift(h, &gammas.gamma(t), &DensityMatrix::new_unchecked(*m)),
        |t| gammas.gamma(t).lambda.norm(),
        |t, m| {
            let rho = DensityMatrix::new_unchecked(*m);
            let trace_defect = (rho.trace() - 1.0).norm();
            if !(trace_defect <= INTEGRATION_TOLERANCE) {
                return Err(Error::IntegrationDefect { t, what: "trace defect", value: trace_defect });
            }
            let herm = rho.hermiticity_defect();
            if !(herm <= INTEGRATION_TOLERANCE) {
                return Err(Error::IntegrationDefect { t, what: "Hermiticity defect", value: herm });
            }
            densities.push(rho);
            Ok(())
        },
    )?;
    Trajectory::with_densities(grid.to_vec(), densities)
}
