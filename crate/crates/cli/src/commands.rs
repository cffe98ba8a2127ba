use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::PathBuf;

use nhbloch::dynamics::max_deviation;
use nhbloch::fit::{fidelity_trace_with, fit_decay_model, noisy_trajectory, FitOptions, MagnetizationSeries};
use nhbloch::nmr::{polarization_factor, thermal_state, NmrContext, Polarization};
use nhbloch::presets::{Preset, DSP, TPP};
use nhbloch::simulate::{simulate, uniform_grid, Model};
use nhbloch::state::purity;
use nhbloch::{CoherentField, DecayModel, Execution, Trajectory};
use serde::Serialize;

use crate::args::{Cli, Command, CompareArgs, FitArgs, Format, ModelArgs, ModelName, PresetName, SimulateArgs, ThermalArgs};
use crate::error::{CliError, CliResult};
use crate::io::{csv_bytes, json_bytes, read_table, write_output, SimulationInfo, TrajectoryDoc, SCHEMA_VERSION};

pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, exec, stdout, stderr),
        Command::Fit(a) => cmd_fit(&a, stdout),
        Command::Compare(a) => cmd_compare(&a, exec, stdout),
        Command::Thermal(a) => cmd_thermal(&a, stdout),
    }
}

/// Resolved physics and grid for one simulation.
#[derive(Debug, Clone)]
pub struct ModelSetup {
    pub preset: Preset,
    pub field: CoherentField,
    pub decay: Option<DecayModel>,
    pub grid: Vec<f64>,
}

fn preset(name: PresetName) -> Preset {
    match name {
        PresetName::Tpp => TPP,
        PresetName::Dsp => DSP,
    }
}

fn model(name: ModelName) -> Model {
    match name {
        ModelName::Analytic => Model::Analytic,
        ModelName::OdeBloch => Model::OdeBloch,
        ModelName::OdeDensity => Model::OdeDensity,
    }
}

/// `(sin(pi x), cos(pi x))`, exact at multiples of one half.
fn sin_cos_pi(x: f64) -> (f64, f64) {
    let r = x.rem_euclid(2.0);
    let q = 2.0 * r;
    if q == q.round() {
        match q as i64 % 4 {
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            3 => (-1.0, 0.0),
            _ => (0.0, 1.0),
        }
    } else {
        (PI * r).sin_cos()
    }
}

/// Rotating-frame field `(w1 cos(phi + pi), w1 sin(phi + pi), -offset)`
/// with the phase given in units of pi.
pub fn drive_field(rabi_hz: f64, phi_over_pi: f64, offset_hz: f64) -> CliResult<CoherentField> {
    if !phi_over_pi.is_finite() {
        return Err(CliError::Usage(format!("--phi must be finite, got {phi_over_pi}")));
    }
    let (s, c) = sin_cos_pi(phi_over_pi + 1.0);
    let w1 = TAU * rabi_hz;
    Ok(CoherentField::new(w1 * c, w1 * s, -TAU * offset_hz)?)
}

pub fn resolve_model(args: &ModelArgs) -> CliResult<ModelSetup> {
    let preset = preset(args.preset);
    let rabi_hz = args.rabi_hz.unwrap_or(preset.drive() / TAU);
    if !(rabi_hz.is_finite() && rabi_hz > 0.0) {
        return Err(CliError::Usage(format!("--rabi-hz must be positive, got {rabi_hz}")));
    }
    let field = drive_field(rabi_hz, args.phi, args.offset_hz)?;
    let decay = if args.no_decay {
        None
    } else {
        let mu = args.mu.unwrap_or(args.mu_over_omega1.unwrap_or(preset.mu_over_omega1) * preset.omega1());
        let delta = args.delta.unwrap_or(args.delta_over_mu.unwrap_or(preset.delta_over_mu) * mu);
        let nu = args.nu.unwrap_or(preset.nu);
        Some(DecayModel::new(delta, mu, nu)?)
    };
    let grid = uniform_grid(args.t_max, args.samples)?;
    Ok(ModelSetup { preset, field, decay, grid })
}

fn purity_column(traj: &Trajectory) -> CliResult<Vec<f64>> {
    Ok(traj.states().iter().map(|r| purity(*r)).collect::<nhbloch::Result<Vec<_>>>()?)
}

pub fn cmd_simulate(args: &SimulateArgs, exec: Execution, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let setup = resolve_model(&args.model_args)?;
    let m = model(args.model);
    let clean = simulate(m, &setup.field, setup.decay.as_ref(), &setup.grid, exec)?;
    let (traj, purity) = match args.noise {
        Some(sigma) => {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(CliError::Usage(format!("--noise must be a nonnegative standard deviation, got {sigma}")));
            }
            (noisy_trajectory(&clean, sigma, args.seed)?, None)
        }
        None => {
            let p = purity_column(&clean)?;
            (clean, Some(p))
        }
    };
    let bytes = match args.format {
        Format::Csv => {
            if let Some(sigma) = args.noise {
                // the CSV header is fixed, so provenance goes to stderr
                let _ = writeln!(stderr, "noise sigma = {sigma}, seed = {}", args.seed);
            }
            csv_bytes(&traj, purity.as_deref())?
        }
        Format::Json => {
            let f = setup.field;
            let info = SimulationInfo {
                model: m.name().into(),
                preset: setup.preset.name.into(),
                field: [f.omega_x, f.omega_y, f.omega_z],
                delta: setup.decay.map(|d| d.delta()),
                mu: setup.decay.map(|d| d.mu()),
                nu: setup.decay.map(|d| d.nu()),
                noise: args.noise,
                seed: args.noise.map(|_| args.seed),
            };
            json_bytes(&TrajectoryDoc::new(&traj, purity, Some(info)))?
        }
    };
    write_output(args.output.as_deref(), &bytes, stdout)
}

#[derive(Debug, Serialize)]
pub struct ParamsDoc {
    pub delta: f64,
    pub mu: f64,
    pub nu: f64,
    pub omega1: f64,
    pub omega1_hz: f64,
}

impl From<nhbloch::DecayParams> for ParamsDoc {
    fn from(p: nhbloch::DecayParams) -> Self {
        Self { delta: p.delta, mu: p.mu, nu: p.nu, omega1: p.omega1, omega1_hz: p.omega1 / TAU }
    }
}

#[derive(Debug, Serialize)]
pub struct FitDoc {
    pub schema_version: &'static str,
    pub input: String,
    pub samples: usize,
    pub fixed_ratio: Option<f64>,
    pub params: ParamsDoc,
    /// `null` where the covariance is unbounded.
    pub std_errors: ParamsDoc,
    pub rms: f64,
    pub my_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: Option<u64>,
}

pub fn cmd_fit(args: &FitArgs, stdout: &mut dyn Write) -> CliResult<()> {
    if let Some(r) = args.fix_ratio {
        if !(r >= 1.0 && r.is_finite()) {
            return Err(CliError::Usage(format!("--fix-ratio must be at least 1, got {r}")));
        }
    }
    let traj = read_table(&args.input)?;
    let series = MagnetizationSeries::from_trajectory(&traj)
        .map_err(|e| CliError::Parse(format!("{}: {e}", args.input.display())))?;
    let opts = FitOptions { fixed_ratio: args.fix_ratio, max_iterations: args.max_iterations };
    let fit = fit_decay_model(&series, None, &opts)?;
    let doc = FitDoc {
        schema_version: SCHEMA_VERSION,
        input: args.input.display().to_string(),
        samples: series.len(),
        fixed_ratio: fit.fixed_ratio,
        params: fit.params.into(),
        std_errors: fit.std_errors.into(),
        rms: fit.rms,
        my_rms: fit.my_rms,
        iterations: fit.iterations,
        converged: fit.converged,
        seed: args.seed,
    };
    write_output(args.output.as_deref(), &json_bytes(&doc)?, stdout)?;
    if !fit.converged {
        return Err(CliError::Numerical(format!("fit did not converge in {} iterations", fit.iterations)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Model(Model),
    File(PathBuf),
}

impl Source {
    pub fn parse(s: &str) -> Source {
        Model::parse(s).map_or_else(|| Source::File(PathBuf::from(s)), Source::Model)
    }

    fn label(&self) -> String {
        match self {
            Source::Model(m) => m.name().into(),
            Source::File(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ComponentsDoc {
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
}

#[derive(Debug, Serialize)]
pub struct CompareDoc {
    pub schema_version: &'static str,
    pub first: String,
    pub second: String,
    pub samples: usize,
    pub max_abs: ComponentsDoc,
    pub time_of_max: ComponentsDoc,
    pub max_overall: f64,
    pub min_fidelity: f64,
    pub time_of_min_fidelity: f64,
}

pub fn compare_sources(args: &CompareArgs, exec: Execution) -> CliResult<CompareDoc> {
    let sources = [Source::parse(&args.first), Source::parse(&args.second)];
    let mut loaded = Vec::with_capacity(2);
    for s in &sources {
        loaded.push(match s {
            Source::File(p) => Some(read_table(p)?),
            Source::Model(_) => None,
        });
    }
    // models compared against a file are sampled on the file's grid
    let file_grid = loaded.iter().flatten().next().map(|t| t.times().to_vec());
    let mut trajs = Vec::with_capacity(2);
    for (s, file) in sources.iter().zip(loaded) {
        trajs.push(match (s, file) {
            (_, Some(t)) => t,
            (Source::Model(m), None) => {
                let setup = resolve_model(&args.model_args)?;
                let grid = file_grid.clone().unwrap_or(setup.grid);
                simulate(*m, &setup.field, setup.decay.as_ref(), &grid, exec)?
            }
            (Source::File(_), None) => unreachable!("files are loaded above"),
        });
    }
    let (a, b) = (&trajs[0], &trajs[1]);
    let report = max_deviation(a, b)?;
    let fid = fidelity_trace_with(a, b, exec)?;
    let (imin, fmin) = fid
        .iter()
        .copied()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("trajectories are nonempty");
    let [dx, dy, dz] = report.max_abs;
    let [tx, ty, tz] = report.time_of_max;
    Ok(CompareDoc {
        schema_version: SCHEMA_VERSION,
        first: sources[0].label(),
        second: sources[1].label(),
        samples: a.len(),
        max_abs: ComponentsDoc { mx: dx, my: dy, mz: dz },
        time_of_max: ComponentsDoc { mx: tx, my: ty, mz: tz },
        max_overall: report.overall().0,
        min_fidelity: fmin,
        time_of_min_fidelity: a.times()[imin],
    })
}

pub fn cmd_compare(args: &CompareArgs, exec: Execution, stdout: &mut dyn Write) -> CliResult<()> {
    let doc = compare_sources(args, exec)?;
    let bytes = if args.json {
        json_bytes(&doc)?
    } else {
        let mut s = format!("{} vs {} ({} samples)\n", doc.first, doc.second, doc.samples);
        for (name, d, t) in [
            ("mx", doc.max_abs.mx, doc.time_of_max.mx),
            ("my", doc.max_abs.my, doc.time_of_max.my),
            ("mz", doc.max_abs.mz, doc.time_of_max.mz),
        ] {
            s += &format!("max |d{name}| = {d:.3e} at t = {t:e} s\n");
        }
        s += &format!("max deviation = {:.3e}\n", doc.max_overall);
        s += &format!("min fidelity = {:.12} at t = {:e} s\n", doc.min_fidelity, doc.time_of_min_fidelity);
        s.into_bytes()
    };
    write_output(args.output.as_deref(), &bytes, stdout)
}

#[derive(Debug, Serialize)]
pub struct ThermalDoc {
    pub schema_version: &'static str,
    pub larmor_hz: f64,
    pub temperature: f64,
    /// `hbar omega_L / (2 k_B T)`.
    pub reduced_energy: f64,
    pub epsilon_exact: f64,
    pub epsilon_high_t: f64,
    pub relative_gap: f64,
    pub partition_function: f64,
    /// Ascending.
    pub eigenvalues: [f64; 2],
}

pub fn thermal_report(larmor_hz: f64, temperature: f64) -> CliResult<ThermalDoc> {
    let ctx = NmrContext::on_resonance(TAU * larmor_hz, 1.0, temperature)?;
    let exact = polarization_factor(&ctx, Polarization::Exact);
    let high_t = polarization_factor(&ctx, Polarization::HighTemperature);
    let gap = if exact > 0.0 { (high_t - exact) / exact } else { 0.0 };
    Ok(ThermalDoc {
        schema_version: SCHEMA_VERSION,
        larmor_hz,
        temperature,
        reduced_energy: ctx.reduced_energy(),
        epsilon_exact: exact,
        epsilon_high_t: high_t,
        relative_gap: gap,
        partition_function: ctx.partition_function(),
        eigenvalues: thermal_state(&ctx).eigenvalues(),
    })
}

pub fn cmd_thermal(args: &ThermalArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let doc = thermal_report(args.larmor_hz, args.temperature)?;
    write_output(args.output.as_deref(), &json_bytes(&doc)?, stdout)
}
