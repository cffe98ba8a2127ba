//! One entry point for the three model paths: closed form, Bloch ODE and
//! density-matrix ODE.

use crate::analytic::{coherent_bloch, damped_bloch, CoherentField, DecayModel};
use crate::dynamics::{
    check_grid, integrate_bloch, DampingRates, GammaSchedule, integrate_density, AnalyticDamping, StepControl, Trajectory, Undamped, SEED_TIME,
};
use crate::exec::Execution;
use crate::state::{bloch_to_density, BlochVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Analytic,
    OdeBloch,
    OdeDensity,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Analytic, Model::OdeBloch, Model::OdeDensity];

    pub fn name(self) -> &'static str {
        match self {
            Model::Analytic => "analytic",
            Model::OdeBloch => "ode-bloch",
            Model::OdeDensity => "ode-density",
        }
    }

    pub fn parse(s: &str) -> Option<Model> {
        Model::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// `n` evenly spaced samples on `[0, t_max]`.
pub fn uniform_grid(t_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidGrid(format!("need at least 2 samples, got {n}")));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidGrid(format!("t_max must be positive, got {t_max}")));
    }
    let last = (n - 1) as f64;
    Ok((0..n).map(|k| t_max * k as f64 / last).collect())
}

/// Closed-form state at `t`, starting from the north pole.
pub fn analytic_state(h: &CoherentField, decay: Option<&DecayModel>, t: f64) -> BlochVector {
    match decay {
        Some(d) => damped_bloch(h, d, t),
        None => coherent_bloch(h, t),
    }
}

/// Samples the closed form over `grid`, split across workers by `exec`.
pub fn sample_analytic(
    h: &CoherentField,
    decay: Option<&DecayModel>,
    grid: &[f64],
    exec: Execution,
) -> Result<Trajectory> {
    check_grid(grid)?;
    let states = exec.map(grid, |&t| analytic_state(h, decay, t));
    Trajectory::new(grid.to_vec(), states)
}

/// Trajectory from the north pole at `t = 0` under `model`.
///
/// With damping the ODE paths are seeded from the closed form at 1 ns.
/// Grid points earlier than that are filled from the closed form too.
pub fn simulate(
    model: Model,
    h: &CoherentField,
    decay: Option<&DecayModel>,
    grid: &[f64],
    exec: Execution,
) -> Result<Trajectory> {
    check_grid(grid)?;
    if model == Model::Analytic {
        return sample_analytic(h, decay, grid, exec);
    }
    let ctl = StepControl::for_model(h, decay);
    let Some(d) = decay else {
        let r0 = analytic_state(h, None, grid[0]);
        return run_ode(model, h, &Undamped, r0, grid, &ctl);
    };
    let split = grid.partition_point(|&t| t < SEED_TIME);
    let (head, rest) = grid.split_at(split);
    let head_traj = if head.is_empty() {
        None
    } else if model == Model::OdeDensity {
        let rhos = head.iter().map(|&t| bloch_to_density(analytic_state(h, decay, t))).collect();
        Some(Trajectory::with_densities(head.to_vec(), rhos)?)
    } else {
        Some(sample_analytic(h, decay, head, Execution::Sequential)?)
    };
    if rest.is_empty() {
        return head_traj.ok_or_else(|| Error::InvalidGrid("empty grid".into()));
    }
    let prepend = rest[0] > SEED_TIME;
    let mut tail_grid = Vec::with_capacity(rest.len() + 1);
    if prepend {
        tail_grid.push(SEED_TIME);
    }
    tail_grid.extend_from_slice(rest);
    let rates = AnalyticDamping { field: *h, decay: *d };
    let seed = analytic_state(h, decay, SEED_TIME);
    let mut tail = run_ode(model, h, &rates, seed, &tail_grid, &ctl)?;
    if prepend {
        tail = drop_first(tail)?;
    }
    match head_traj {
        Some(head) => head.concat(tail),
        None => Ok(tail),
    }
}

fn run_ode<R>(
    model: Model,
    h: &CoherentField,
    rates: &R,
    r0: BlochVector,
    grid: &[f64],
    ctl: &StepControl,
) -> Result<Trajectory>
where
    R: DampingRates + GammaSchedule,
{
    match model {
        Model::OdeBloch => integrate_bloch(h, rates, r0, grid, ctl),
        Model::OdeDensity => integrate_density(h, rates, bloch_to_density(r0), grid, ctl),
        Model::Analytic => unreachable!("analytic model has no ODE path"),
    }
}

fn drop_first(traj: Trajectory) -> Result<Trajectory> {
    let times = traj.times()[1..].to_vec();
    match traj.densities() {
        Some(d) => Trajectory::with_densities(times, d[1..].to_vec()),
        None => Trajectory::new(times, traj.states()[1..].to_vec()),
    }
}
