#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use swlp_core::{
    Coefficient, DiscreteSpace, GeneratorRealization, InputSignal, LinearMap, Scalars, StochasticSystemRealization,
    TimeGrid,
};

fn line(label: &str) -> DiscreteSpace {
    DiscreteSpace::euclidean(label, 1, Scalars::Real).unwrap()
}

/// `dY = (aY + bu) dt + σY dW`, `Z = cY` on `R`.
pub fn scalar(a: f64, b: f64, c: f64, sigma: f64) -> StochasticSystemRealization<f64> {
    let f2 = if sigma == 0.0 { Coefficient::zero(1) } else { Coefficient::constant(DMatrix::from_element(1, 1, sigma)) };
    StochasticSystemRealization::new(
        GeneratorRealization::self_adjoint(line("H"), DMatrix::from_element(1, 1, a)).unwrap(),
        LinearMap::new(line("U"), line("H"), DMatrix::from_element(1, 1, b)).unwrap(),
        LinearMap::new(line("H"), line("Y"), DMatrix::from_element(1, 1, c)).unwrap(),
        Coefficient::zero(1),
        f2,
    )
    .unwrap()
}

pub fn constant_input(value: f64, steps: usize) -> InputSignal<f64> {
    InputSignal::Deterministic(vec![DVector::from_element(1, value); steps])
}

pub fn grid(steps: usize) -> TimeGrid {
    TimeGrid::new(1.0, steps).unwrap()
}

/// Largest absolute entry of a complex or real difference.
pub fn max_abs<T: swlp_core::Field>(v: &DVector<T>) -> f64 {
    v.iter().map(|x| x.modulus()).fold(0.0, f64::max)
}
