//! Stochastic well-posed linear systems on finite-dimensional discretizations.
//!
//! The crate realizes controlled linear SPDEs of the form
//! `dY = (AY + F1 Y + B u) dt + F2 Y dW`, `Z = C Y`, computes their input and
//! output maps, admissibility constants and mild/weak solutions, and ships two
//! boundary-controlled instances: a Neumann heat equation ([`heat`]) and a
//! Dirichlet Schrödinger equation ([`schrodinger`]).

pub mod error;
pub mod field;
pub mod gain;
pub mod generator;
pub mod heat;
pub mod io;
mod linalg;
pub mod maps;
pub mod rng;
pub mod schrodinger;
pub mod solve;
pub mod spaces;
pub mod stochastics;
pub mod system;
pub mod weak;

pub use error::{Result, SwlpError};
pub use field::{Complex64, Field, Scalars};
pub use generator::GeneratorRealization;
pub use spaces::{DiscreteSpace, LinearMap};
pub use stochastics::{
    ito_integral, mc_estimate, refine_brownian, sample_brownian, stochastic_convolution, BrownianEnsemble,
    McEstimate, TimeGrid,
};
pub use system::{Coefficient, InitialState, InputSignal, StochasticSystemRealization, Trajectory};
