//! Preset systems behind each config instance.

use std::fs;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use swlp_core::heat::{build_heat_system, cosine_mode, HeatModel};
use swlp_core::io::{import_system, system_from_json};
use swlp_core::schrodinger::{build_schrodinger_system, sine_mode, Profile, SchrodingerModel};
use swlp_core::{
    Coefficient, Complex64, DiscreteSpace, Field, GeneratorRealization, InputSignal, LinearMap, Scalars,
    StochasticSystemRealization, TimeGrid,
};

use crate::config::{ExperimentConfig, Instance};
use crate::error::HarnessError;

pub const SCALAR_GENERATOR: f64 = -1.0;
pub const SCALAR_SIGMA: f64 = 0.5;
pub const HEAT_CELLS: usize = 32;
pub const HEAT_A: f64 = 1.0;
pub const HEAT_B: f64 = 0.3;
pub const SCHRODINGER_MODES: usize = 16;
pub const SCHRODINGER_A: f64 = 0.5;
pub const SCHRODINGER_B: f64 = 0.3;

pub type InputFn<T> = Arc<dyn Fn(f64) -> DVector<T> + Send + Sync>;

/// A system with the initial state, input and test vector used by the suites.
#[derive(Clone)]
pub struct Case<T: Field> {
    pub sys: StochasticSystemRealization<T>,
    pub y0: DVector<T>,
    pub input: InputFn<T>,
    /// Test vector for the weak formulation.
    pub psi: DVector<T>,
}

impl<T: Field> Case<T> {
    pub fn input_signal(&self, grid: &TimeGrid) -> InputSignal<T> {
        InputSignal::Deterministic((0..grid.steps()).map(|n| (self.input)(grid.time(n))).collect())
    }
}

pub enum Setup {
    Scalar { case: Case<f64>, generator: f64, sigma: f64 },
    Heat { case: Case<f64>, model: HeatModel },
    Schrodinger { case: Case<Complex64>, model: SchrodingerModel },
    CustomReal(Case<f64>),
    CustomComplex(Case<Complex64>),
}

impl Setup {
    pub fn label(&self) -> &'static str {
        match self {
            Setup::Scalar { .. } => "scalar",
            Setup::Heat { .. } => "heat",
            Setup::Schrodinger { .. } => "schrodinger",
            Setup::CustomReal(_) | Setup::CustomComplex(_) => "custom-json",
        }
    }
}

fn unit<T: Field>(dim: usize, k: usize) -> DVector<T> {
    let mut v = DVector::zeros(dim);
    v[k] = T::from_parts(1.0, 0.0);
    v
}

/// `dY = aY dt + σY dW` with `B = C = 1`, `Y(0) = 1` and no input.
pub fn scalar_system(generator: f64, sigma: f64) -> Result<StochasticSystemRealization<f64>, HarnessError> {
    let space = |label| DiscreteSpace::euclidean(label, 1, Scalars::Real);
    let h = space("H")?;
    let one = DMatrix::from_element(1, 1, 1.0);
    Ok(StochasticSystemRealization::new(
        GeneratorRealization::self_adjoint(h.clone(), DMatrix::from_element(1, 1, generator))?,
        LinearMap::new(space("U")?, h.clone(), one.clone())?,
        LinearMap::new(h, space("Ytilde")?, one)?,
        Coefficient::zero(1),
        Coefficient::constant(DMatrix::from_element(1, 1, sigma)),
    )?)
}

pub fn heat_model(cfg: &ExperimentConfig, grid: TimeGrid) -> HeatModel {
    let m = &cfg.model;
    HeatModel::uniform(
        m.length.unwrap_or(1.0),
        m.cells.unwrap_or(HEAT_CELLS),
        m.a.unwrap_or(HEAT_A),
        m.b.unwrap_or(HEAT_B),
        grid,
    )
}

/// `y0 = 1 + ½ cos(πx/L)`.
pub fn heat_initial(model: &HeatModel) -> DVector<f64> {
    let l = model.length;
    model.sample(|x| 1.0 + 0.5 * (std::f64::consts::PI * x / l).cos())
}

pub fn heat_case(model: &HeatModel) -> Result<Case<f64>, HarnessError> {
    Ok(Case {
        sys: build_heat_system(model)?,
        y0: heat_initial(model),
        input: Arc::new(|t: f64| DVector::from_vec(vec![t.sin(), -0.5])),
        psi: cosine_mode(model, 1),
    })
}

pub fn schrodinger_model(cfg: &ExperimentConfig, grid: TimeGrid) -> SchrodingerModel {
    let m = &cfg.model;
    let profile = |amplitude: f64| {
        if amplitude == 0.0 {
            Profile::Zero
        } else {
            Profile::SinSquared { amplitude }
        }
    };
    SchrodingerModel::new(
        m.modes.unwrap_or(SCHRODINGER_MODES),
        profile(m.a.unwrap_or(SCHRODINGER_A)),
        profile(m.b.unwrap_or(SCHRODINGER_B)),
        grid,
    )
    .with_control_side(m.control_side.unwrap_or_default())
}

/// `y0 = e1 + 2i e2`.
pub fn schrodinger_initial(model: &SchrodingerModel) -> DVector<Complex64> {
    sine_mode(model, 1) + sine_mode(model, 2) * Complex64::new(0.0, 2.0)
}

pub fn schrodinger_case(model: &SchrodingerModel) -> Result<Case<Complex64>, HarnessError> {
    let sides = model.control_side.endpoints().len();
    Ok(Case {
        sys: build_schrodinger_system(model)?,
        y0: schrodinger_initial(model),
        input: Arc::new(move |t: f64| DVector::from_element(sides, Complex64::new((3.0 * t).sin(), 0.0))),
        psi: sine_mode(model, 1),
    })
}

fn custom_case<T: Field>(sys: StochasticSystemRealization<T>) -> Case<T> {
    let (dim, du) = (sys.h().dim(), sys.u().dim());
    Case {
        y0: unit(dim, 0),
        psi: unit(dim, 0),
        input: Arc::new(move |_| DVector::zeros(du)),
        sys,
    }
}

pub fn build(cfg: &ExperimentConfig) -> Result<Setup, HarnessError> {
    let grid = cfg.time_grid()?;
    let m = &cfg.model;
    Ok(match cfg.instance {
        Instance::Scalar => {
            let generator = m.generator.unwrap_or(SCALAR_GENERATOR);
            let sigma = m.b.unwrap_or(SCALAR_SIGMA);
            let sys = scalar_system(generator, sigma)?;
            let case = Case {
                sys,
                y0: DVector::from_element(1, 1.0),
                input: Arc::new(|_| DVector::zeros(1)),
                psi: DVector::from_element(1, 1.0),
            };
            Setup::Scalar { case, generator, sigma }
        }
        Instance::Heat => {
            let model = heat_model(cfg, grid);
            Setup::Heat { case: heat_case(&model)?, model }
        }
        Instance::Schrodinger => {
            let model = schrodinger_model(cfg, grid);
            Setup::Schrodinger { case: schrodinger_case(&model)?, model }
        }
        Instance::CustomJson => {
            let path = m.system.as_ref().ok_or_else(|| HarnessError::Config("model.system is missing".into()))?;
            let text = fs::read_to_string(path)
                .map_err(|e| HarnessError::Config(format!("system document {}: {e}", path.display())))?;
            let doc = system_from_json(&text)?;
            match doc.scalars {
                Scalars::Real => Setup::CustomReal(custom_case(import_system::<f64>(&doc)?)),
                Scalars::Complex => Setup::CustomComplex(custom_case(import_system::<Complex64>(&doc)?)),
            }
        }
    })
}
