use std::f64::consts::TAU;

use nalgebra::Vector3;
use nhbloch::analytic::{
    coherent_propagate, damped_bloch, decay_f, decay_f_derivative, decay_g, gamma_coefficients, CoherentField,
    DecayModel,
};
use nhbloch::dynamics::{bloch_drift, density_drift, gamma_operator, integrate_density, AnalyticDamping, SEED_TIME};
use nhbloch::fit::{fidelity_trace, fit_decay_model, synthesize, DecayParams, FitOptions};
use nhbloch::nmr::{apply_pulse, pseudo_pure_decompose, rotation_pulse};
use nhbloch::simulate::{simulate, uniform_grid, Model};
use nhbloch::state::{bloch_to_density, density_to_bloch, fidelity, identity, purity, spin_identity};
use nhbloch::{BlochVector, DensityMatrix, Execution, StepControl};
use proptest::prelude::*;

fn ball_point() -> impl Strategy<Value = BlochVector> {
    (0.0..1.0f64, -1.0..1.0f64, 0.0..TAU).prop_map(|(r, c, phi)| {
        let s = (1.0 - c * c).sqrt();
        BlochVector::new(r * s * phi.cos(), r * s * phi.sin(), r * c)
    })
}

fn field() -> impl Strategy<Value = CoherentField> {
    (-1e5..1e5f64, -1e5..1e5f64, -1e5..1e5f64).prop_map(|(x, y, z)| CoherentField::new(x, y, z).unwrap())
}

fn decay() -> impl Strategy<Value = DecayModel> {
    (1e2..1e4f64, 1.0..30.0f64, 0.0..0.9f64).prop_map(|(mu, ratio, nu)| DecayModel::new(ratio * mu, mu, nu).unwrap())
}

/// Parameters in the neighbourhood of the two measured samples.
fn lab_params() -> impl Strategy<Value = DecayParams> {
    (1.5e4..2.5e4f64, 2.5e-3..6e-3f64, 6.0..20.0f64, 0.02..0.2f64).prop_map(|(hz, mu_ratio, ratio, nu)| {
        let omega1 = TAU * hz;
        let mu = mu_ratio * omega1;
        DecayParams::new(ratio * mu, mu, nu, omega1)
    })
}

proptest! {
    #[test]
    fn bloch_density_round_trip(r in ball_point()) {
        let rho = bloch_to_density(r);
        prop_assert!(rho.validate().is_ok());
        let back = density_to_bloch(&rho).unwrap();
        prop_assert!(back.max_abs_diff(r) < 1e-15);
    }

    #[test]
    fn purity_is_trace_of_square(r in ball_point()) {
        let rho = bloch_to_density(r);
        let p = purity(r).unwrap();
        prop_assert!((p - rho.purity()).abs() < 1e-14);
        prop_assert!((0.5..=1.0).contains(&p));
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded(a in ball_point(), b in ball_point()) {
        let (ra, rb) = (bloch_to_density(a), bloch_to_density(b));
        let ab = fidelity(&ra, &rb).unwrap();
        let ba = fidelity(&rb, &ra).unwrap();
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!(ab > 0.0 && ab <= 1.0 + 1e-15);
        prop_assert!((fidelity(&ra, &ra).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn coherent_motion_keeps_norm(h in field(), r in ball_point(), t in 0.0..1e-3f64) {
        let out = coherent_propagate(&h, r, t);
        prop_assert!((out.norm() - r.norm()).abs() < 1e-12);
    }

    #[test]
    fn coherent_motion_solves_its_ode(h in field(), r in ball_point(), t in 1e-5..1e-3f64) {
        let dt = 1e-9;
        let fwd = coherent_propagate(&h, r, t + dt).to_vector();
        let bwd = coherent_propagate(&h, r, t - dt).to_vector();
        let numeric = (fwd - bwd) / (2.0 * dt);
        let here = coherent_propagate(&h, r, t).to_vector();
        let exact = h.as_vector().cross(&here);
        prop_assert!((numeric - exact).norm() <= 1e-5 * (1.0 + exact.norm()));
    }

    #[test]
    fn envelope_is_bounded(d in decay(), t in 0.0..1.0f64) {
        let f = decay_f(&d, t);
        prop_assert!(f > 0.0 && f <= 1.0);
    }

    #[test]
    fn constraint_matches_envelope(d in decay(), t in 1e-7..1e-2f64) {
        let f = decay_f(&d, t);
        let expected = -decay_f_derivative(&d, t) / (1.0 - f * f);
        let g = decay_g(&d, t).unwrap();
        prop_assert!((g - expected).abs() <= 1e-10 * expected.abs().max(1e-300) + 1e-12, "{g} vs {expected}");
    }

    #[test]
    fn damped_solution_solves_bloch_equations(h in field(), d in decay(), t in 1e-5..2e-3f64) {
        let dt = 1e-10;
        let fwd = damped_bloch(&h, &d, t + dt).to_vector();
        let bwd = damped_bloch(&h, &d, t - dt).to_vector();
        let numeric = (fwd - bwd) / (2.0 * dt);
        let lam = gamma_coefficients(&h, &d, t).unwrap();
        let r = damped_bloch(&h, &d, t).to_vector();
        let drift = bloch_drift(&h, &lam, &r);
        prop_assert!((numeric - drift).norm() <= 1e-5 * (1.0 + drift.norm()), "{numeric} vs {drift}");
    }

    #[test]
    fn density_drift_is_traceless_and_hermitian(h in field(), r in ball_point(), l in prop::array::uniform3(-1e4..1e4f64)) {
        let rho = bloch_to_density(r);
        let drift = density_drift(&h, &gamma_operator(0.0, Vector3::from(l)), &rho);
        let scale = 1.0 + drift.camax();
        prop_assert!(drift.trace().norm() < 1e-12 * scale);
        prop_assert!((drift - drift.adjoint()).camax() < 1e-12 * scale);
    }

    #[test]
    fn pulse_is_unitary_and_rotates_like_the_field(w in 1e3..1e6f64, t in 0.0..1e-3f64) {
        let u = rotation_pulse(w, t);
        prop_assert!((u * u.adjoint() - identity()).camax() < 1e-12);
        let north = bloch_to_density(BlochVector::NORTH);
        let rotated = DensityMatrix::new(apply_pulse(&u, north.matrix())).unwrap();
        let r = density_to_bloch(&rotated).unwrap();
        let expected = coherent_propagate(&CoherentField::along_y(w), BlochVector::NORTH, t);
        prop_assert!(r.max_abs_diff(expected) < 1e-10);
    }

    #[test]
    fn pseudo_pure_recomposes(eps in 0.0..1.0f64) {
        let rho = bloch_to_density(BlochVector::new(0.0, 0.0, eps));
        let (w, pure) = pseudo_pure_decompose(&rho, eps).unwrap();
        let back = spin_identity() * num_complex::Complex64::from(w) + pure.matrix() * num_complex::Complex64::from(eps);
        prop_assert!((back - rho.matrix()).camax() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn density_integration_preserves_trace(h in field(), d in decay()) {
        let damping = AnalyticDamping { field: h, decay: d };
        let mut grid = vec![SEED_TIME];
        grid.extend((1..=20).map(|k| k as f64 * 1e-5));
        let ctl = StepControl::for_model(&h, Some(&d));
        let traj = integrate_density(&h, &damping, bloch_to_density(damped_bloch(&h, &d, SEED_TIME)), &grid, &ctl).unwrap();
        for rho in traj.densities().unwrap() {
            prop_assert!((rho.trace() - 1.0).norm() <= 1e-10);
            prop_assert!(rho.hermiticity_defect() <= 1e-10);
            prop_assert!(rho.purity() >= 0.5 - 1e-9);
        }
    }

    #[test]
    fn fit_recovers_generating_parameters(p in lab_params()) {
        let series = synthesize(&p, &uniform_grid(500e-6, 251).unwrap()).unwrap();
        let fit = fit_decay_model(&series, None, &FitOptions::default()).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(fit.params.max_relative_error(&p) < 1e-6, "{:?} vs {p:?}", fit.params);
    }

    #[test]
    fn fit_scales_with_time_unit(p in lab_params(), c in 0.1..10.0f64) {
        let series = synthesize(&p, &uniform_grid(500e-6, 251).unwrap()).unwrap();
        let guess = DecayParams::new(1.1 * p.delta, 0.9 * p.mu, 1.2 * p.nu, 1.001 * p.omega1);
        let scaled_guess = DecayParams::new(guess.delta / c, guess.mu / c, guess.nu, guess.omega1 / c);
        let opts = FitOptions::default();
        let a = fit_decay_model(&series, Some(guess), &opts).unwrap().params;
        let b = fit_decay_model(&series.rescale_time(c).unwrap(), Some(scaled_guess), &opts).unwrap().params;
        let rel = |x: f64, y: f64| ((x - y) / x).abs();
        prop_assert!(rel(a.omega1, b.omega1 * c) < 1e-8);
        prop_assert!(rel(a.delta, b.delta * c) < 1e-8);
        prop_assert!(rel(a.mu, b.mu * c) < 1e-8);
        prop_assert!(rel(a.nu, b.nu) < 1e-8);
    }

    #[test]
    fn fidelity_of_trajectory_with_itself(p in lab_params()) {
        let h = p.field();
        let d = p.decay_model().unwrap();
        let traj = simulate(Model::Analytic, &h, Some(&d), &uniform_grid(500e-6, 251).unwrap(), Execution::Parallel).unwrap();
        for v in fidelity_trace(&traj, &traj).unwrap() {
            prop_assert!((v - 1.0).abs() <= 1e-12);
        }
    }
}
