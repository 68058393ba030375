//! System documents and trajectory export.

mod common;

use common::scalar;
use nalgebra::{DMatrix, DVector};
use swlp_core::heat::{build_heat_system, HeatModel};
use swlp_core::io::{
    export_system, import_system, system_from_json, system_to_json, write_trajectory_csv, Extension, SYSTEM_SCHEMA,
};
use swlp_core::schrodinger::{build_schrodinger_system, sine_mode, ControlSide, Profile, SchrodingerModel};
use swlp_core::solve::mild_solve_stepping;
use swlp_core::{
    sample_brownian, Coefficient, Complex64, Field, InputSignal, StochasticSystemRealization, SwlpError, TimeGrid,
};

fn same_system<T: Field>(a: &StochasticSystemRealization<T>, b: &StochasticSystemRealization<T>) {
    assert_eq!(a.generator().matrix(), b.generator().matrix());
    assert_eq!(a.b().matrix(), b.b().matrix());
    assert_eq!(a.c().matrix(), b.c().matrix());
    assert_eq!(a.h().gram(), b.h().gram());
    assert_eq!(a.u().gram(), b.u().gram());
    assert_eq!(a.utilde().gram(), b.utilde().gram());
    assert_eq!(a.f1().pieces(), b.f1().pieces());
    assert_eq!(a.f2().pieces(), b.f2().pieces());
}

fn through_json<T: Field>(sys: &StochasticSystemRealization<T>, ext: Option<Extension>) -> StochasticSystemRealization<T> {
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let doc = export_system(sys, Some(grid), Some(42), ext).unwrap();
    let text = system_to_json(&doc).unwrap();
    let back = system_from_json(&text).unwrap();
    assert_eq!(back, doc);
    assert_eq!(back.schema, SYSTEM_SCHEMA);
    import_system(&back).unwrap()
}

#[test]
fn heat_document_round_trip() {
    let model = HeatModel::uniform(2.0, 12, 0.7, 0.2, TimeGrid::new(1.0, 8).unwrap());
    let sys = build_heat_system(&model).unwrap();
    same_system(&sys, &through_json(&sys, Some(Extension::Heat(model))));
}

#[test]
fn schrodinger_document_round_trip() {
    let model = SchrodingerModel::new(
        10,
        Profile::SinSquared { amplitude: 0.5 },
        Profile::Table { x: vec![0.0, 1.0, std::f64::consts::PI], values: vec![0.0, 0.4, 0.0] },
        TimeGrid::new(1.0, 8).unwrap(),
    )
    .with_control_side(ControlSide::Both);
    let sys = build_schrodinger_system(&model).unwrap();
    same_system(&sys, &through_json(&sys, Some(Extension::Schrodinger(model))));
}

#[test]
fn plain_document_round_trip() {
    let sys = scalar(-0.5, 2.0, 3.0, 0.25);
    let pieces = vec![DMatrix::from_element(1, 1, 0.1), DMatrix::from_element(1, 1, -0.2)];
    let sys = sys.with_coefficients(Coefficient::piecewise(1.0, pieces).unwrap(), sys.f2().clone()).unwrap();
    let back = through_json(&sys, None);
    same_system(&sys, &back);
    assert_eq!(back.f1().span(), 1.0);
}

#[test]
fn wrong_scalar_field_is_rejected() {
    let model = SchrodingerModel::new(8, Profile::Zero, Profile::Zero, TimeGrid::new(1.0, 4).unwrap());
    let sys = build_schrodinger_system(&model).unwrap();
    let doc = export_system(&sys, None, None, None).unwrap();
    assert!(matches!(import_system::<f64>(&doc), Err(SwlpError::Schema(_))));

    let mut bad = export_system(&scalar(-1.0, 1.0, 1.0, 0.0), None, None, None).unwrap();
    bad.schema = "other".into();
    assert!(matches!(import_system::<f64>(&bad), Err(SwlpError::Schema(_))));
    assert!(system_from_json("{\"schema\": 1}").is_err());
}

#[test]
fn modulated_coefficients_cannot_be_exported() {
    let sys = scalar(-1.0, 1.0, 1.0, 0.5);
    let f2 = Coefficient::constant(DMatrix::from_element(1, 1, 0.5)).with_modulation(1.0, |t, _| t.cos());
    let sys = sys.with_coefficients(Coefficient::zero(1), f2).unwrap();
    assert!(matches!(export_system(&sys, None, None, None), Err(SwlpError::Unsupported(_))));
}

#[test]
fn real_trajectory_csv() {
    let sys = scalar(-1.0, 1.0, 1.0, 0.5);
    let g = TimeGrid::new(1.0, 4).unwrap();
    let ens = sample_brownian(g, 2, 1).unwrap();
    let traj = mild_solve_stepping(&sys, &DVector::from_element(1, 1.0).into(), &InputSignal::zero(1, 4), &ens).unwrap();
    let mut out = Vec::new();
    write_trajectory_csv(&traj, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "path,node,time,component,value");
    assert_eq!(lines.len(), 1 + 2 * 5);
    assert_eq!(lines[1], "0,0,0,0,1");
    let last: Vec<&str> = lines[10].split(',').collect();
    assert_eq!(&last[..4], &["1", "4", "1", "0"]);
    assert_eq!(last[4].parse::<f64>().unwrap(), traj.state(1, 4)[0]);
}

#[test]
fn complex_trajectory_csv() {
    let model = SchrodingerModel::new(8, Profile::Zero, Profile::Zero, TimeGrid::new(1.0, 2).unwrap());
    let sys = build_schrodinger_system(&model).unwrap();
    let ens = sample_brownian(model.grid, 1, 1).unwrap();
    let y0 = sine_mode(&model, 1) * Complex64::new(0.0, 1.0);
    let traj = mild_solve_stepping(&sys, &y0.into(), &InputSignal::zero(1, 2), &ens).unwrap();
    let mut out = Vec::new();
    write_trajectory_csv(&traj, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("path,node,time,component,re,im\n0,0,0,0,0,1\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 8);
}
