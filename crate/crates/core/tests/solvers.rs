//! Mild, Picard, lifted and weak solutions cross-checked against each other.

mod common;

use common::{constant_input, scalar};
use nalgebra::DVector;
use swlp_core::gain::{energies, hidden_regularity_ratio, io_gain};
use swlp_core::heat::{build_heat_system, cosine_mode, energy_identity_residual, lifted_solve, HeatModel};
use swlp_core::maps::observation_admissibility_constant;
use swlp_core::solve::{mild_solve_picard, mild_solve_stepping};
use swlp_core::weak::weak_residual;
use swlp_core::{mc_estimate, refine_brownian, sample_brownian, InitialState, InputSignal, LinearMap, TimeGrid};

fn heat(cells: usize, steps: usize, a: f64, b: f64) -> HeatModel {
    HeatModel::uniform(1.0, cells, a, b, TimeGrid::new(1.0, steps).unwrap())
}

fn smooth_heat_input(steps: usize) -> InputSignal<f64> {
    let dt = 1.0 / steps as f64;
    InputSignal::Deterministic(
        (0..steps).map(|n| DVector::from_vec(vec![(2.0 * n as f64 * dt).sin(), 0.5 * (n as f64 * dt).cos()])).collect(),
    )
}

#[test]
fn stepping_of_scalar_ou_second_moment() {
    let (a, sigma) = (-1.0, 0.5);
    let sys = scalar(a, 1.0, 1.0, sigma);
    let g = TimeGrid::new(1.0, 256).unwrap();
    let ens = sample_brownian(g, 10_000, 21).unwrap();
    let traj = mild_solve_stepping(&sys, &DVector::from_element(1, 1.0).into(), &InputSignal::zero(1, 256), &ens).unwrap();
    let sq: Vec<f64> = (0..ens.paths()).map(|p| traj.state(p, 256)[0].powi(2)).collect();
    let m = mc_estimate(&sq).unwrap();
    let exact = ((2.0 * a + sigma * sigma) * 1.0).exp();
    assert!((m.mean - exact).abs() <= 3.0 * m.sem + 5.0 * g.dt(), "{} vs {exact} (sem {})", m.mean, m.sem);
}

#[test]
fn picard_without_coefficients_is_one_pass() {
    let model = heat(12, 40, 0.0, 0.0);
    let sys = build_heat_system(&model).unwrap();
    let ens = sample_brownian(model.grid, 5, 3).unwrap();
    let y0: InitialState<f64> = model.sample(|x| x.cos()).into();
    let u = smooth_heat_input(40);
    let step = mild_solve_stepping(&sys, &y0, &u, &ens).unwrap();
    let pic = mild_solve_picard(&sys, &y0, &u, &ens, 1e-10, 10).unwrap();
    assert!(pic.report.iterations.iter().all(|&i| i == 1), "{:?}", pic.report.iterations);
    assert!(step.distance(&pic.trajectory, sys.h()).unwrap() < 1e-12);
}

#[test]
fn picard_contracts_on_noisy_heat() {
    let model = heat(16, 128, 1.0, 0.3);
    let sys = build_heat_system(&model).unwrap();
    let ens = sample_brownian(model.grid, 64, 4).unwrap();
    let y0: InitialState<f64> = model.sample(|x| 1.0 + 0.5 * (std::f64::consts::PI * x).cos()).into();
    let u = smooth_heat_input(128);
    let pic = mild_solve_picard(&sys, &y0, &u, &ens, 1e-9, 60).unwrap();
    assert!(pic.report.ratios.iter().all(|r| *r < 0.5), "{:?}", pic.report.ratios);
    let step = mild_solve_stepping(&sys, &y0, &u, &ens).unwrap();
    assert!(step.distance(&pic.trajectory, sys.h()).unwrap() < 5e-8);
}

#[test]
fn lifted_solve_without_input_is_stepping() {
    let model = heat(12, 32, 1.0, 0.3);
    let sys = build_heat_system(&model).unwrap();
    let ens = sample_brownian(model.grid, 10, 5).unwrap();
    let y0: InitialState<f64> = model.sample(|x| x * (1.0 - x)).into();
    let u = InputSignal::zero(2, 32);
    let a = mild_solve_stepping(&sys, &y0, &u, &ens).unwrap();
    let b = lifted_solve(&model, &y0, &u, &ens).unwrap();
    assert_eq!(a.data(), b.data());
}

fn lifted_gap(steps: usize, input: impl Fn(usize) -> InputSignal<f64>) -> f64 {
    let model = heat(16, steps, 0.0, 0.0);
    let sys = build_heat_system(&model).unwrap();
    let ens = sample_brownian(model.grid, 1, 6).unwrap();
    let y0: InitialState<f64> = model.sample(|x| 1.0 + x).into();
    let u = input(steps);
    let a = mild_solve_stepping(&sys, &y0, &u, &ens).unwrap();
    let b = lifted_solve(&model, &y0, &u, &ens).unwrap();
    a.distance(&b, sys.h()).unwrap()
}

#[test]
fn lifted_and_direct_solutions_converge_together() {
    let coarse = lifted_gap(200, smooth_heat_input);
    let fine = lifted_gap(400, smooth_heat_input);
    assert!(coarse > 0.0);
    let ratio = coarse / fine;
    assert!((1.5..=2.5).contains(&ratio), "gap {coarse:e} → {fine:e}");
}

#[test]
fn lifted_constant_input() {
    let constant = |steps: usize| InputSignal::Deterministic(vec![DVector::from_vec(vec![0.4, -0.2]); steps]);
    let coarse = lifted_gap(200, constant);
    let fine = lifted_gap(400, constant);
    let ratio = coarse / fine;
    assert!((1.5..=2.5).contains(&ratio), "gap {coarse:e} → {fine:e}");
}

#[test]
fn weak_residual_of_zero_data_vanishes() {
    let model = heat(8, 16, 1.0, 0.3);
    let sys = build_heat_system(&model).unwrap();
    let ens = sample_brownian(model.grid, 4, 7).unwrap();
    let u = InputSignal::zero(2, 16);
    let traj = mild_solve_stepping(&sys, &DVector::zeros(8).into(), &u, &ens).unwrap();
    let r = weak_residual(&sys, &traj, &cosine_mode(&model, 1), &u, &ens).unwrap();
    assert_eq!(r.max_abs(), 0.0);
}

fn deterministic_weak_error(steps: usize) -> f64 {
    let model = heat(16, steps, 0.0, 0.0);
    let sys = build_heat_system(&model).unwrap();
    let ens = sample_brownian(model.grid, 2, 8).unwrap();
    let u = InputSignal::zero(2, steps);
    let y0 = cosine_mode(&model, 1) + cosine_mode(&model, 2) * 0.5;
    let traj = mild_solve_stepping(&sys, &y0.into(), &u, &ens).unwrap();
    let r = weak_residual(&sys, &traj, &cosine_mode(&model, 1), &u, &ens).unwrap();
    (0..=steps).map(|n| r.abs_at(n)[0]).fold(0.0, f64::max)
}

#[test]
fn deterministic_weak_residual_is_first_order() {
    let coarse = deterministic_weak_error(64);
    let fine = deterministic_weak_error(128);
    assert!(coarse < 0.2, "{coarse}");
    let ratio = coarse / fine;
    assert!((1.8..=2.2).contains(&ratio), "{coarse:e} → {fine:e}");
}

#[test]
fn weak_residual_of_scalar_ou_refines() {
    let sys = scalar(-1.0, 1.0, 1.0, 0.5);
    let psi = DVector::from_element(1, 1.0);
    let y0: InitialState<f64> = DVector::from_element(1, 1.0).into();
    let coarse_ens = sample_brownian(TimeGrid::new(1.0, 64).unwrap(), 10_000, 9).unwrap();
    let fine_ens = refine_brownian(&coarse_ens);
    let err = |ens: &swlp_core::BrownianEnsemble| {
        let n = ens.grid().steps();
        let u = InputSignal::zero(1, n);
        let traj = mild_solve_stepping(&sys, &y0, &u, ens).unwrap();
        weak_residual(&sys, &traj, &psi, &u, ens).unwrap().mean_abs(n).unwrap().mean
    };
    let ratio = err(&coarse_ens) / err(&fine_ens);
    assert!((1.3..=2.8).contains(&ratio), "{ratio}");
}

#[test]
fn energy_residual_of_zero_data() {
    let model = heat(8, 16, 1.0, 0.3);
    let sys = build_heat_system(&model).unwrap();
    let ens = sample_brownian(model.grid, 3, 10).unwrap();
    let u = InputSignal::zero(2, 16);
    let traj = mild_solve_stepping(&sys, &DVector::zeros(8).into(), &u, &ens).unwrap();
    let r = energy_identity_residual(&model, &traj, &u, &ens).unwrap();
    assert_eq!(r.value, 0.0);
}

fn deterministic_energy_defect(steps: usize) -> f64 {
    let model = heat(16, steps, 0.0, 0.0);
    let sys = build_heat_system(&model).unwrap();
    let ens = sample_brownian(model.grid, 1, 11).unwrap();
    let u = InputSignal::zero(2, steps);
    let y0 = model.sample(|x| 1.0 + 0.5 * (std::f64::consts::PI * x).cos());
    let traj = mild_solve_stepping(&sys, &y0.into(), &u, &ens).unwrap();
    energy_identity_residual(&model, &traj, &u, &ens).unwrap().value
}

#[test]
fn deterministic_energy_balance_is_first_order() {
    let coarse = deterministic_energy_defect(256);
    let fine = deterministic_energy_defect(512);
    let ratio = coarse / fine;
    assert!((1.6..=2.4).contains(&ratio), "{coarse:e} → {fine:e}");
}

#[test]
fn decaying_scalar_gain_is_a_contraction() {
    let sys = scalar(-1.0, 1.0, 1.0, 0.0);
    let g = TimeGrid::new(1.0, 128).unwrap();
    let ens = sample_brownian(g, 1, 12).unwrap();
    let gain = io_gain(&sys, 128, 40, &ens).unwrap();
    assert!(gain.max <= 1.0 + g.dt(), "{}", gain.max);
    assert!(gain.q90 <= gain.max);

    let blind = sys.with_observation(LinearMap::zero(sys.h().clone(), sys.utilde().clone()).unwrap()).unwrap();
    assert_eq!(io_gain(&blind, 128, 5, &ens).unwrap().max, 0.0);
}

#[test]
fn noiseless_hidden_regularity_is_the_observation_constant() {
    let sys = scalar(-1.0, 1.0, 1.0, 0.0);
    let g = TimeGrid::new(1.0, 64).unwrap();
    let ens = sample_brownian(g, 1, 13).unwrap();
    let hr = hidden_regularity_ratio(&sys, 64, 3, &ens).unwrap();
    let c = observation_admissibility_constant(&sys, &g, 64).unwrap();
    assert!((hr.max - c).abs() < 1e-12, "{} vs {c}", hr.max);

    let model = heat(12, 32, 0.0, 0.0);
    let hsys = build_heat_system(&model).unwrap();
    let hens = sample_brownian(model.grid, 1, 14).unwrap();
    let hr = hidden_regularity_ratio(&hsys, 32, 10, &hens).unwrap();
    let c = observation_admissibility_constant(&hsys, &model.grid, 32).unwrap();
    assert!(hr.max <= c * (1.0 + 1e-12), "{} vs {c}", hr.max);
}

#[test]
fn energies_are_quadratic_in_the_data() {
    let sys = scalar(-1.0, 1.0, 1.0, 0.5);
    let g = TimeGrid::new(1.0, 32).unwrap();
    let ens = sample_brownian(g, 16, 15).unwrap();
    let u = constant_input(0.3, 32);
    let y0: InitialState<f64> = DVector::from_element(1, 0.8).into();
    let e1 = energies(&sys, &y0, &u, 32, &ens).unwrap();
    let e10 = energies(&sys, &y0.scaled(10.0), &u.scaled(10.0), 32, &ens).unwrap();
    for (a, b) in e1.output.iter().zip(&e10.output) {
        assert!((100.0 * a - b).abs() <= 1e-12 * b);
    }
}
