//! Least-squares estimation of `(delta, mu, nu, omega1)` from measured
//! magnetization, and the comparison statistics built on top of it.
//!
//! The model is
//!
//! ```text
//! m_x = f(t) sin(omega1 t),   m_z = f(t) cos(omega1 t),   m_y = 0
//! ```
//!
//! with `f(t) = exp(-delta t) + nu (1 - exp(-mu t))`. Only `m_x` and `m_z`
//! enter the objective; the rms of `m_y` is reported as a misfit indicator.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::analytic::{CoherentField, DecayModel};
use crate::dynamics::{check_same_grid, Trajectory};
use crate::exec::Execution;
use crate::presets::DELTA_OVER_MU;
use crate::state::{bloch_to_density, fidelity, BlochVector};
use crate::{Error, Result};

/// Fewest samples accepted for fitting.
pub const MIN_SAMPLES: usize = 8;
/// Loose bound on measured components; noisy data may leave the unit ball.
pub const COMPONENT_BOUND: f64 = 1.5;

const RELATIVE_STEP_TOLERANCE: f64 = 1e-10;
const RELATIVE_OBJECTIVE_TOLERANCE: f64 = 1e-12;
const NU_CEILING: f64 = 1.0 - 1e-12;

/// Measured magnetization on a strictly increasing time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationSeries {
    times: Vec<f64>,
    mx: Vec<f64>,
    my: Vec<f64>,
    mz: Vec<f64>,
}

impl MagnetizationSeries {
    pub fn new(times: Vec<f64>, mx: Vec<f64>, my: Vec<f64>, mz: Vec<f64>) -> Result<Self> {
        let n = times.len();
        if mx.len() != n || my.len() != n || mz.len() != n {
            return Err(Error::InvalidSeries(format!(
                "column lengths differ: t {n}, mx {}, my {}, mz {}",
                mx.len(),
                my.len(),
                mz.len()
            )));
        }
        if n < MIN_SAMPLES {
            return Err(Error::TooFewInputs { needed: MIN_SAMPLES, got: n });
        }
        crate::dynamics::check_grid(&times).map_err(|e| Error::InvalidSeries(e.to_string()))?;
        for (name, col) in [("mx", &mx), ("my", &my), ("mz", &mz)] {
            if let Some((i, v)) = col.iter().enumerate().find(|(_, v)| !(v.abs() <= COMPONENT_BOUND)) {
                return Err(Error::InvalidSeries(format!("{name}[{i}] = {v} outside [-1.5, 1.5]")));
            }
        }
        Ok(Self { times, mx, my, mz })
    }

    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let states = traj.states();
        Self::new(
            traj.times().to_vec(),
            states.iter().map(|r| r.x).collect(),
            states.iter().map(|r| r.y).collect(),
            states.iter().map(|r| r.z).collect(),
        )
    }

    pub fn to_trajectory(&self) -> Result<Trajectory> {
        let states = (0..self.len()).map(|i| BlochVector::new(self.mx[i], self.my[i], self.mz[i])).collect();
        Trajectory::new(self.times.clone(), states)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn mx(&self) -> &[f64] {
        &self.mx
    }

    pub fn my(&self) -> &[f64] {
        &self.my
    }

    pub fn mz(&self) -> &[f64] {
        &self.mz
    }

    /// Same samples with every time multiplied by `c`.
    pub fn rescale_time(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain { what: "time scale", value: c });
        }
        let times = self.times.iter().map(|t| t * c).collect();
        Self::new(times, self.mx.clone(), self.my.clone(), self.mz.clone())
    }

    /// Transverse-plus-longitudinal envelope `sqrt(m_x^2 + m_z^2)`.
    pub fn envelope(&self) -> Vec<f64> {
        self.mx.iter().zip(&self.mz).map(|(x, z)| x.hypot(*z)).collect()
    }

    /// Root mean square of `m_y`.
    pub fn my_rms(&self) -> f64 {
        (self.my.iter().map(|v| v * v).sum::<f64>() / self.len() as f64).sqrt()
    }
}

/// Decay-model parameters; rates and frequency in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    pub delta: f64,
    pub mu: f64,
    pub nu: f64,
    pub omega1: f64,
}

impl DecayParams {
    pub fn new(delta: f64, mu: f64, nu: f64, omega1: f64) -> Self {
        Self { delta, mu, nu, omega1 }
    }

    pub fn from_model(decay: &DecayModel, omega1: f64) -> Self {
        Self::new(decay.delta(), decay.mu(), decay.nu(), omega1)
    }

    pub fn is_feasible(&self) -> bool {
        self.decay_model().is_ok() && self.omega1.is_finite()
    }

    pub fn decay_model(&self) -> Result<DecayModel> {
        DecayModel::new(self.delta, self.mu, self.nu)
    }

    pub fn field(&self) -> CoherentField {
        CoherentField::along_y(self.omega1)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.delta, self.mu, self.nu, self.omega1]
    }

    /// Largest relative difference over the four parameters.
    pub fn max_relative_error(&self, truth: &DecayParams) -> f64 {
        self.to_array()
            .iter()
            .zip(truth.to_array())
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Hold `delta / mu` at this value instead of fitting it.
    pub fixed_ratio: Option<f64>,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { fixed_ratio: None, max_iterations: 200 }
    }
}

impl FitOptions {
    pub fn fixed(ratio: f64) -> Self {
        Self { fixed_ratio: Some(ratio), ..Self::default() }
    }

    /// The measured constraint, `delta = 11.5 mu`.
    pub fn reference_ratio() -> Self {
        Self::fixed(DELTA_OVER_MU)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: DecayParams,
    /// One-sigma standard errors, same layout as `params`; infinite when
    /// the normal matrix is singular at the optimum.
    pub std_errors: DecayParams,
    /// rms of the stacked `m_x`, `m_z` residuals.
    pub rms: f64,
    pub my_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub fixed_ratio: Option<f64>,
    /// Objective after each accepted iteration, starting with the guess.
    pub objective_history: Vec<f64>,
}

fn check_feasible(p: &DecayParams) -> Result<()> {
    if !p.omega1.is_finite() {
        return Err(Error::InvalidParameter(format!("omega1 must be finite, got {}", p.omega1)));
    }
    p.decay_model().map(|_| ())
}

/// `f(t)` and the three partials `df/d(delta, mu, nu)`.
fn envelope_with_partials(p: &DecayParams, t: f64) -> (f64, [f64; 3]) {
    let ed = (-p.delta * t).exp();
    let em = (-p.mu * t).exp();
    let rise = -(-p.mu * t).exp_m1();
    (ed + p.nu * rise, [-t * ed, p.nu * t * em, rise])
}

/// Stacked residuals `[m_x - f sin(omega1 t); m_z - f cos(omega1 t)]`.
pub fn residuals(params: &DecayParams, series: &MagnetizationSeries) -> Result<Vec<f64>> {
    check_feasible(params)?;
    Ok(raw_residuals(params, series))
}

fn raw_residuals(p: &DecayParams, s: &MagnetizationSeries) -> Vec<f64> {
    let n = s.len();
    let mut out = vec![0.0; 2 * n];
    for (i, &t) in s.times.iter().enumerate() {
        let (f, _) = envelope_with_partials(p, t);
        let (sn, cs) = (p.omega1 * t).sin_cos();
        out[i] = s.mx[i] - f * sn;
        out[n + i] = s.mz[i] - f * cs;
    }
    out
}

/// Model Jacobian with respect to `(delta, mu, nu, omega1)`, rows stacked
/// like [`residuals`].
fn model_jacobian(p: &DecayParams, s: &MagnetizationSeries) -> DMatrix<f64> {
    let n = s.len();
    let mut j = DMatrix::zeros(2 * n, 4);
    for (i, &t) in s.times.iter().enumerate() {
        let (f, df) = envelope_with_partials(p, t);
        let (sn, cs) = (p.omega1 * t).sin_cos();
        for k in 0..3 {
            j[(i, k)] = df[k] * sn;
            j[(n + i, k)] = df[k] * cs;
        }
        j[(i, 3)] = f * t * cs;
        j[(n + i, 3)] = -f * t * sn;
    }
    j
}

/// Unconstrained coordinates for the optimizer.
///
/// Free: `(ln delta, s, nu, omega1 / omega_ref)` with `mu = delta / (1 + e^s)`.
/// Fixed ratio `rho`: `(ln mu, nu, omega1 / omega_ref)` with `delta = rho mu`.
struct Coordinates {
    ratio: Option<f64>,
    omega_ref: f64,
}

impl Coordinates {
    fn dim(&self) -> usize {
        if self.ratio.is_some() {
            3
        } else {
            4
        }
    }

    fn to_internal(&self, p: &DecayParams) -> DVector<f64> {
        let w = p.omega1 / self.omega_ref;
        match self.ratio {
            Some(_) => DVector::from_vec(vec![p.mu.ln(), p.nu, w]),
            None => {
                let s = (p.delta / p.mu - 1.0).max(1e-300).ln();
                DVector::from_vec(vec![p.delta.ln(), s, p.nu, w])
            }
        }
    }

    fn to_external(&self, theta: &DVector<f64>) -> DecayParams {
        match self.ratio {
            Some(rho) => {
                let mu = theta[0].exp();
                DecayParams::new(rho * mu, mu, theta[1], theta[2] * self.omega_ref)
            }
            None => {
                let delta = theta[0].exp();
                let stretch = 1.0 + theta[1].exp();
                DecayParams::new(delta, delta / stretch, theta[2], theta[3] * self.omega_ref)
            }
        }
    }

    /// `d external / d internal`, 4 x dim.
    fn transform(&self, p: &DecayParams) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(4, self.dim());
        t[(0, 0)] = p.delta;
        t[(1, 0)] = p.mu;
        match self.ratio {
            Some(_) => {
                t[(2, 1)] = 1.0;
                t[(3, 2)] = self.omega_ref;
            }
            None => {
                t[(1, 1)] = -p.mu * (p.delta - p.mu) / p.delta;
                t[(2, 2)] = 1.0;
                t[(3, 3)] = self.omega_ref;
            }
        }
        t
    }

    fn clamp(&self, theta: &mut DVector<f64>) {
        let p = self.to_external(theta);
        let nu = p.nu.clamp(0.0, NU_CEILING);
        if nu != p.nu {
            *theta = self.to_internal(&DecayParams { nu, ..p });
        }
    }
}

fn sum_squares(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Initial estimate from the raw record.
///
/// `omega1` comes from the strongest Fourier peak of `m_x`, `delta` from a
/// log-linear fit to the envelope over the first quarter of the record, `nu`
/// from the mean envelope over the last tenth, and `mu = delta / 11.5`.
pub fn default_initial_guess(series: &MagnetizationSeries) -> Result<DecayParams> {
    let n = series.len();
    if n < MIN_SAMPLES {
        return Err(Error::TooFewInputs { needed: MIN_SAMPLES, got: n });
    }
    let omega1 = dominant_frequency(series.times(), series.mx());
    let env = series.envelope();
    let t0 = series.times[0];

    let quarter = (n / 4).max(2);
    let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..quarter {
        if env[i] > 0.0 {
            let (x, y) = (series.times[i] - t0, env[i].ln());
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            m += 1.0;
        }
    }
    let var = m * sxx - sx * sx;
    let slope = if m >= 2.0 && var > 0.0 { (m * sxy - sx * sy) / var } else { 0.0 };
    let delta = (-slope).max(0.0);

    let tenth = (n / 10).max(1);
    let nu = env[n - tenth..].iter().sum::<f64>() / tenth as f64;
    Ok(DecayParams::new(delta, delta / DELTA_OVER_MU, nu, omega1))
}

/// Peak of the periodogram of the mean-removed signal, zero-padded to 16x
/// the record length and refined by a parabola through the three highest
/// bins. Samples are treated as evenly spaced over the record.
fn dominant_frequency(times: &[f64], x: &[f64]) -> f64 {
    let n = times.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    let len = 16 * n;
    let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(v - mean, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    let power: Vec<f64> = buf[..=half].iter().map(|c| c.norm_sqr()).collect();
    let k = (1..=half).max_by(|&a, &b| power[a].total_cmp(&power[b])).unwrap_or(1);
    let mut bin = k as f64;
    if k < half {
        let (a, b, c) = (power[k - 1], power[k], power[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            bin += (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    2.0 * PI * bin / (len as f64 * dt)
}

/// The model is linear in `nu`; its least-squares value with the other
/// three parameters held.
fn best_linear_nu(p: &DecayParams, s: &MagnetizationSeries) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &t) in s.times.iter().enumerate() {
        let fast = (-p.delta * t).exp();
        let rise = -(-p.mu * t).exp_m1();
        let (sn, cs) = (p.omega1 * t).sin_cos();
        num += rise * ((s.mx[i] - fast * sn) * sn + (s.mz[i] - fast * cs) * cs);
        den += rise * rise;
    }
    if den > 0.0 {
        num / den
    } else {
        p.nu
    }
}

/// Damped Gauss-Newton (Levenberg-Marquardt) fit of the decay model.
///
/// Without a guess, [`default_initial_guess`] is used. Returns the best
/// point with `converged = false` if the iteration budget runs out.
pub fn fit_decay_model(
    series: &MagnetizationSeries,
    guess: Option<DecayParams>,
    opts: &FitOptions,
) -> Result<FitResult> {
    if series.mx.iter().chain(&series.mz).all(|&v| v == 0.0) {
        return Err(Error::DegenerateJacobian("m_x and m_z carry no signal".into()));
    }
    if let Some(rho) = opts.fixed_ratio {
        if !(rho >= 1.0 && rho.is_finite()) {
            return Err(Error::Domain { what: "delta/mu ratio", value: rho });
        }
    }
    let mut start = match guess {
        Some(g) => g,
        None => default_initial_guess(series)?,
    };
    if !(start.omega1.is_finite() && start.omega1 != 0.0) {
        return Err(Error::InvalidParameter(format!("initial omega1 must be finite and nonzero, got {}", start.omega1)));
    }
    let span = series.times[series.len() - 1] - series.times[0];
    if !(start.mu > 0.0 && start.mu.is_finite()) {
        start.mu = 1e-3 / span;
    }
    start.delta = match opts.fixed_ratio {
        Some(rho) => rho * start.mu,
        None if !(start.delta > start.mu) => DELTA_OVER_MU * start.mu,
        None => start.delta,
    };
    start.nu = best_linear_nu(&start, series).clamp(0.0, NU_CEILING);

    let coords = Coordinates { ratio: opts.fixed_ratio, omega_ref: start.omega1 };
    let p = coords.dim();
    let m = 2 * series.len();
    let zero_objective = m as f64 * 1e-26;

    let mut theta = coords.to_internal(&start);
    let mut params = coords.to_external(&theta);
    let mut objective = sum_squares(&raw_residuals(&params, series));
    let mut history = vec![objective];
    let mut lambda = 1e-3;
    let mut growth = 2.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let r = DVector::from_vec(raw_residuals(&params, series));
        let jac = model_jacobian(&params, series) * coords.transform(&params);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let largest = (0..p).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        if !(largest > 0.0 && largest.is_finite()) {
            return Err(Error::DegenerateJacobian(format!("zero sensitivity at {params:?}")));
        }
        let diag: Vec<f64> = (0..p).map(|i| jtj[(i, i)].max(1e-30 * largest)).collect();

        let mut accepted = None;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..p {
                a[(i, i)] += lambda * diag[i];
            }
            let Some(chol) = a.cholesky() else {
                lambda *= growth;
                growth *= 2.0;
                continue;
            };
            let step = chol.solve(&jtr);
            let mut trial = &theta + &step;
            coords.clamp(&mut trial);
            let trial_params = coords.to_external(&trial);
            let trial_obj = sum_squares(&raw_residuals(&trial_params, series));
            if trial_obj.is_finite() && trial_obj <= objective {
                // gain ratio against the quadratic model (Nielsen's update)
                let scaled: f64 = (0..p).map(|i| lambda * diag[i] * step[i] * step[i]).sum();
                let predicted = step.dot(&jtr) + scaled;
                let gain = if predicted > 0.0 { (objective - trial_obj) / predicted } else { 1.0 };
                lambda = (lambda * (1.0 / 3.0f64).max(1.0 - (2.0 * gain - 1.0).powi(3))).max(1e-15);
                growth = 2.0;
                accepted = Some((trial, trial_params, trial_obj));
                break;
            }
            lambda *= growth;
            growth *= 2.0;
        }

        let Some((trial, trial_params, trial_obj)) = accepted else {
            // no descent direction left: stationary up to rounding
            converged = true;
            break;
        };
        let step_norm = (&trial - &theta).norm();
        let small_step = step_norm <= RELATIVE_STEP_TOLERANCE * (theta.norm() + RELATIVE_STEP_TOLERANCE);
        let small_change = objective - trial_obj <= RELATIVE_OBJECTIVE_TOLERANCE * objective;
        theta = trial;
        params = trial_params;
        objective = trial_obj;
        history.push(objective);
        if small_step && (small_change || objective <= zero_objective) {
            converged = true;
            break;
        }
    }

    // free mode: the external Jacobian stays regular on the delta = mu edge
    let ext = model_jacobian(&params, series);
    let (jac, t) = match opts.fixed_ratio {
        Some(_) => {
            let t = coords.transform(&params);
            (&ext * &t, Some(t))
        }
        None => (ext, None),
    };
    // a singular normal matrix (e.g. an optimum on delta = mu, where the two
    // rate columns coincide) leaves the errors unbounded rather than failing
    let std_errors = match (jac.transpose() * &jac).cholesky() {
        Some(chol) => {
            let inv = chol.inverse();
            let dof = (m - p).max(1) as f64;
            let cov = match t {
                Some(t) => &t * inv * t.transpose(),
                None => inv,
            } * (objective / dof);
            let sd = |i: usize| cov[(i, i)].max(0.0).sqrt();
            DecayParams::new(sd(0), sd(1), sd(2), sd(3))
        }
        None => DecayParams::new(f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY),
    };

    Ok(FitResult {
        params,
        std_errors,
        rms: (objective / m as f64).sqrt(),
        my_rms: series.my_rms(),
        iterations,
        converged,
        fixed_ratio: opts.fixed_ratio,
        objective_history: history,
    })
}

/// Noise-free samples of the model on `times`.
pub fn synthesize(params: &DecayParams, times: &[f64]) -> Result<MagnetizationSeries> {
    check_feasible(params)?;
    let mut mx = Vec::with_capacity(times.len());
    let mut mz = Vec::with_capacity(times.len());
    for &t in times {
        let (f, _) = envelope_with_partials(params, t);
        let (s, c) = (params.omega1 * t).sin_cos();
        mx.push(f * s);
        mz.push(f * c);
    }
    MagnetizationSeries::new(times.to_vec(), mx, vec![0.0; times.len()], mz)
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma` to every
/// component. The same seed always gives the same noise.
pub fn add_gaussian_noise(series: &MagnetizationSeries, sigma: f64, seed: u64) -> Result<MagnetizationSeries> {
    let normal = Normal::new(0.0, sigma).map_err(|_| Error::Domain { what: "noise sigma", value: sigma })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = |col: &[f64]| col.iter().map(|v| v + normal.sample(&mut rng)).collect::<Vec<_>>();
    let mx = noisy(&series.mx);
    let my = noisy(&series.my);
    let mz = noisy(&series.mz);
    MagnetizationSeries::new(series.times.clone(), mx, my, mz)
}

/// Adds Gaussian noise to every Bloch component of a trajectory.
pub fn noisy_trajectory(traj: &Trajectory, sigma: f64, seed: u64) -> Result<Trajectory> {
    let normal = Normal::new(0.0, sigma).map_err(|_| Error::Domain { what: "noise sigma", value: sigma })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = traj
        .states()
        .iter()
        .map(|r| {
            BlochVector::new(
                r.x + normal.sample(&mut rng),
                r.y + normal.sample(&mut rng),
                r.z + normal.sample(&mut rng),
            )
        })
        .collect();
    Trajectory::new(traj.times().to_vec(), states)
}

/// Fits many series independently.
pub fn fit_many(series: &[MagnetizationSeries], opts: &FitOptions, exec: Execution) -> Vec<Result<FitResult>> {
    exec.map(series, |s| fit_decay_model(s, None, opts))
}

/// Fits `params` corrupted by noise, once per seed.
pub fn monte_carlo_fits(
    params: &DecayParams,
    times: &[f64],
    sigma: f64,
    seeds: &[u64],
    opts: &FitOptions,
    exec: Execution,
) -> Result<Vec<Result<FitResult>>> {
    let clean = synthesize(params, times)?;
    Ok(exec.map(seeds, |&seed| {
        let noisy = add_gaussian_noise(&clean, sigma, seed)?;
        fit_decay_model(&noisy, None, opts)
    }))
}

/// Per-sample fidelity between two trajectories on the same grid.
pub fn fidelity_trace(theory: &Trajectory, measured: &Trajectory) -> Result<Vec<f64>> {
    fidelity_trace_with(theory, measured, Execution::Sequential)
}

pub fn fidelity_trace_with(theory: &Trajectory, measured: &Trajectory, exec: Execution) -> Result<Vec<f64>> {
    check_same_grid(theory.times(), measured.times())?;
    let pairs: Vec<(BlochVector, BlochVector)> =
        theory.states().iter().copied().zip(measured.states().iter().copied()).collect();
    exec.map(&pairs, |(a, b)| fidelity(&bloch_to_density(*a), &bloch_to_density(*b)))
        .into_iter()
        .collect()
}

/// Mean and half-range of `100 nu` across fits, in percent.
pub fn residual_magnetization_stats(fits: &[FitResult]) -> Result<(f64, f64)> {
    let nus: Vec<f64> = fits.iter().map(|f| f.params.nu).collect();
    residual_stats_from_nu(&nus)
}

pub fn residual_stats_from_nu(nus: &[f64]) -> Result<(f64, f64)> {
    if nus.len() < 2 {
        return Err(Error::TooFewInputs { needed: 2, got: nus.len() });
    }
    let pct: Vec<f64> = nus.iter().map(|v| 100.0 * v).collect();
    let mean = pct.iter().sum::<f64>() / pct.len() as f64;
    let lo = pct.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pct.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((mean, 0.5 * (hi - lo)))
}

/// Rounds half away from zero to `places` decimals, as written by hand:
/// binary noise below twelve significant digits is dropped first, so
/// `0.35499999999999998` rounds to `0.36`.
pub fn round_decimal(x: f64, places: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let clean_scale = 10f64.powi(11 - magnitude);
    let clean = (x * clean_scale).round() / clean_scale;
    let scale = 10f64.powi(places);
    (clean * scale).round() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{DSP, TPP};
    use crate::simulate::uniform_grid;

    fn tpp_params() -> DecayParams {
        DecayParams::from_model(&TPP.decay(), TPP.drive())
    }

    fn lab_grid() -> Vec<f64> {
        uniform_grid(500e-6, 251).unwrap()
    }

    #[test]
    fn exact_series_has_zero_residuals() {
        let p = tpp_params();
        let s = synthesize(&p, &lab_grid()).unwrap();
        assert!(residuals(&p, &s).unwrap().iter().all(|r| r.abs() < 1e-15));
    }

    #[test]
    fn nu_shift_moves_tail_linearly() {
        let p = tpp_params();
        let s = synthesize(&p, &lab_grid()).unwrap();
        let d = 1e-4;
        let shifted = DecayParams { nu: p.nu + d, ..p };
        let r = residuals(&shifted, &s).unwrap();
        let n = s.len();
        for (i, &t) in s.times().iter().enumerate() {
            let rise = d * (1.0 - (-p.mu * t).exp());
            let (sn, cs) = (p.omega1 * t).sin_cos();
            assert!((r[i] + rise * sn).abs() < 1e-15);
            assert!((r[n + i] + rise * cs).abs() < 1e-15);
        }
    }

    #[test]
    fn frequency_error_grows_with_time() {
        let p = tpp_params();
        let s = synthesize(&p, &lab_grid()).unwrap();
        let wrong = DecayParams { omega1: 1.01 * p.omega1, ..p };
        let r = residuals(&wrong, &s).unwrap();
        let n = s.len();
        let block_rms = |lo: usize, hi: usize| {
            let ss: f64 = (lo..hi).map(|i| r[i] * r[i] + r[n + i] * r[n + i]).sum();
            (ss / (hi - lo) as f64).sqrt()
        };
        // phase drift relative to the local envelope
        let env = s.envelope();
        let rel = |lo: usize, hi: usize| block_rms(lo, hi) / (env[lo..hi].iter().sum::<f64>() / (hi - lo) as f64);
        assert!(rel(10, 60) < rel(60, 120));
        assert!(rel(60, 120) < rel(120, 180));
    }

    #[test]
    fn infeasible_params_rejected() {
        let s = synthesize(&tpp_params(), &lab_grid()).unwrap();
        let bad = DecayParams { mu: 2.0 * tpp_params().delta, ..tpp_params() };
        assert!(residuals(&bad, &s).is_err());
        assert!(residuals(&DecayParams { nu: 1.0, ..tpp_params() }, &s).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = tpp_params();
        let s = synthesize(&p, &lab_grid()).unwrap();
        let j = model_jacobian(&p, &s);
        let base = raw_residuals(&p, &s);
        let arr = p.to_array();
        for k in 0..4 {
            let h = 1e-6 * arr[k].abs();
            let mut q = arr;
            q[k] += h;
            let shifted = raw_residuals(&DecayParams::new(q[0], q[1], q[2], q[3]), &s);
            for i in 0..base.len() {
                let fd = -(shifted[i] - base[i]) / h;
                assert!((fd - j[(i, k)]).abs() < 1e-5 * (1.0 + j[(i, k)].abs()), "k {k} i {i}");
            }
        }
    }

    #[test]
    fn guess_is_close_on_exact_data() {
        let p = tpp_params();
        let g = default_initial_guess(&synthesize(&p, &lab_grid()).unwrap()).unwrap();
        for (a, b) in g.to_array().iter().zip(p.to_array()) {
            assert!(((a - b) / b).abs() < 0.2, "guess {g:?} vs {p:?}");
        }
    }

    #[test]
    fn guess_tail_tends_to_nu() {
        // on the 500 us grid the DSP tail still carries exp(-delta t) ~ 0.09
        let p = DecayParams::from_model(&DSP.decay(), DSP.drive());
        let long = uniform_grid(40.0 / p.mu, 801).unwrap();
        let g = default_initial_guess(&synthesize(&p, &long).unwrap()).unwrap();
        assert!((g.nu / p.nu - 1.0).abs() < 1e-6, "{g:?}");
    }

    #[test]
    fn dsp_fit_recovers_from_rough_guess() {
        let p = DecayParams::from_model(&DSP.decay(), DSP.drive());
        let fit = fit_decay_model(&synthesize(&p, &lab_grid()).unwrap(), None, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.params.max_relative_error(&p) < 1e-6, "{:?}", fit.params);
    }

    #[test]
    fn guess_for_pure_sinusoid() {
        let times = uniform_grid(500e-6, 251).unwrap();
        let w = TPP.drive();
        let mx = times.iter().map(|t| (w * t).sin()).collect();
        let mz = times.iter().map(|t| (w * t).cos()).collect();
        let s = MagnetizationSeries::new(times.clone(), mx, vec![0.0; 251], mz).unwrap();
        let g = default_initial_guess(&s).unwrap();
        assert!(g.delta.abs() < 1e-6);
        assert!((g.nu - 1.0).abs() < 1e-12);
        assert!((g.omega1 / w - 1.0).abs() < 1e-3);
    }

    #[test]
    fn guess_needs_eight_samples() {
        let t: Vec<f64> = (0..7).map(|k| k as f64).collect();
        assert!(matches!(
            MagnetizationSeries::new(t.clone(), vec![0.0; 7], vec![0.0; 7], vec![0.0; 7]),
            Err(Error::TooFewInputs { needed: 8, got: 7 })
        ));
    }

    #[test]
    fn noiseless_round_trip_both_modes() {
        let p = tpp_params();
        let s = synthesize(&p, &lab_grid()).unwrap();
        for opts in [FitOptions::default(), FitOptions::reference_ratio()] {
            let fit = fit_decay_model(&s, None, &opts).unwrap();
            assert!(fit.converged, "{opts:?}");
            assert!(fit.params.max_relative_error(&p) < 1e-6, "{opts:?}: {:?}", fit.params);
            assert!(fit.rms < 1e-12);
        }
    }

    #[test]
    fn objective_never_increases() {
        let p = tpp_params();
        let s = add_gaussian_noise(&synthesize(&p, &lab_grid()).unwrap(), 0.01, 7).unwrap();
        let fit = fit_decay_model(&s, None, &FitOptions::default()).unwrap();
        assert!(fit.objective_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_signal_is_degenerate() {
        let times = lab_grid();
        let z = vec![0.0; times.len()];
        let s = MagnetizationSeries::new(times, z.clone(), z.clone(), z).unwrap();
        assert!(matches!(fit_decay_model(&s, None, &FitOptions::default()), Err(Error::DegenerateJacobian(_))));
    }

    #[test]
    fn noise_is_seeded() {
        let s = synthesize(&tpp_params(), &lab_grid()).unwrap();
        assert_eq!(add_gaussian_noise(&s, 0.01, 3).unwrap(), add_gaussian_noise(&s, 0.01, 3).unwrap());
        assert_ne!(add_gaussian_noise(&s, 0.01, 3).unwrap(), add_gaussian_noise(&s, 0.01, 4).unwrap());
    }

    #[test]
    fn fidelity_of_identical_trajectories() {
        let p = tpp_params();
        let traj = synthesize(&p, &lab_grid()).unwrap().to_trajectory().unwrap();
        for v in fidelity_trace(&traj, &traj).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fidelity_against_maximally_mixed() {
        // Tr[rho I0] = 1/2, Tr[I0^2] = 1/2, Tr[rho^2] = (1 + f^2)/2
        let p = tpp_params();
        let traj = synthesize(&p, &lab_grid()).unwrap().to_trajectory().unwrap();
        let mixed = Trajectory::new(traj.times().to_vec(), vec![BlochVector::CENTER; traj.len()]).unwrap();
        let fid = fidelity_trace(&traj, &mixed).unwrap();
        for ((_, r), v) in traj.iter().zip(fid) {
            let expected = 1.0 / (1.0 + r.norm_squared()).sqrt();
            assert!((v - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn fidelity_with_small_noise_stays_high() {
        let p = tpp_params();
        let traj = synthesize(&p, &lab_grid()).unwrap().to_trajectory().unwrap();
        let noisy = noisy_trajectory(&traj, 0.01, 11).unwrap();
        let fid = fidelity_trace(&traj, &noisy).unwrap();
        let inside = fid.iter().filter(|v| (0.99..=1.0 + 1e-12).contains(*v)).count();
        assert!(inside as f64 >= 0.95 * fid.len() as f64);
    }

    #[test]
    fn fidelity_grid_mismatch() {
        let traj = synthesize(&tpp_params(), &lab_grid()).unwrap().to_trajectory().unwrap();
        let other = synthesize(&tpp_params(), &uniform_grid(400e-6, 251).unwrap()).unwrap().to_trajectory().unwrap();
        assert!(matches!(fidelity_trace(&traj, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn residual_statistic() {
        let (mean, half) = residual_stats_from_nu(&[6.53e-2, 5.82e-2]).unwrap();
        assert!((mean - 6.175).abs() < 1e-12);
        assert!((half - 0.355).abs() < 1e-12);
        assert_eq!(round_decimal(mean, 2), 6.18);
        assert_eq!(round_decimal(half, 2), 0.36);
        assert_eq!(residual_stats_from_nu(&[0.1, 0.1]).unwrap().1, 0.0);
        let (_, h) = residual_stats_from_nu(&[0.05, 0.05 + 2.0 * 0.003]).unwrap();
        assert!((h - 0.3).abs() < 1e-12);
        assert!(residual_stats_from_nu(&[0.1]).is_err());
    }

    #[test]
    fn rounding_half_away_from_zero() {
        assert_eq!(round_decimal(0.125, 2), 0.13);
        assert_eq!(round_decimal(-0.125, 2), -0.13);
        assert_eq!(round_decimal(2.675, 2), 2.68);
        assert_eq!(round_decimal(1.0049, 2), 1.0);
        assert_eq!(round_decimal(0.0, 2), 0.0);
    }

    #[test]
    fn parallel_and_sequential_fits_agree() {
        let p = tpp_params();
        let seeds = [1, 2, 3, 4];
        let opts = FitOptions::reference_ratio();
        let a = monte_carlo_fits(&p, &lab_grid(), 0.01, &seeds, &opts, Execution::Sequential).unwrap();
        let b = monte_carlo_fits(&p, &lab_grid(), 0.01, &seeds, &opts, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
