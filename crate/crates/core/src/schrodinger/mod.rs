//! Stochastic Schrödinger equation on `(0, π)` with Dirichlet boundary control,
//! discretized in the sine basis of `H = H⁻¹(0, π)`.
//!
//! `dy + iΔy dt = a y dt + b y dW`, `y = u` on the controlled endpoints,
//! observed through `−i ∂_ν (−Δ)⁻¹ y`. With `A = −Δ` the state equation reads
//! `dy = (iA y + J y + B u) dt + K y dW`.

mod backward;
mod multiplier;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SwlpError};
use crate::field::{Complex64, Scalars};
use crate::gain::{wellposed_constant, RefinedConstant};
use crate::generator::GeneratorRealization;
use crate::linalg::largest_eigenvalue;
use crate::solve::mild_solve_stepping;
use crate::spaces::{DiscreteSpace, LinearMap};
use crate::stochastics::{BrownianEnsemble, TimeGrid};
use crate::system::{Coefficient, InitialState, InputSignal, StochasticSystemRealization};

pub use backward::{
    backward_adjoint_solve, backward_hidden_regularity, duality_refinement, duality_residual, BackwardSolution,
    BackwardTrace, DualityResidual, DualityStudy, TerminalValue,
};
pub use multiplier::{
    multiplier_identity_residual, multiplier_refinement, Affine, FieldSpec, Harmonic, MultiplierFieldSpec,
    MultiplierResidual, MultiplierStudy, TERM_NAMES,
};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Smallest number of sine modes accepted by the model.
pub const MIN_MODES: usize = 8;

/// Real spatial profile of a zero-order coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    Zero,
    Constant { value: f64 },
    /// `amplitude · sin² x`.
    SinSquared { amplitude: f64 },
    /// Piecewise-linear interpolation through `(x, values)` knots covering `[0, π]`.
    Table { x: Vec<f64>, values: Vec<f64> },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => *value,
            Profile::SinSquared { amplitude } => amplitude * x.sin().powi(2),
            Profile::Table { x: knots, values } => {
                let j = knots.partition_point(|k| *k <= x).clamp(1, knots.len() - 1);
                let (x0, x1) = (knots[j - 1], knots[j]);
                let s = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
                values[j - 1] + s * (values[j] - values[j - 1])
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Zero => true,
            Profile::Constant { value } => *value == 0.0,
            Profile::SinSquared { amplitude } => *amplitude == 0.0,
            Profile::Table { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Profile::Table { x, values } = self {
            if x.len() < 2 || x.len() != values.len() {
                return invalid("coefficient table needs at least two knots and one value per knot");
            }
            if x.windows(2).any(|w| !(w[0] < w[1])) {
                return invalid("coefficient table knots must be strictly increasing");
            }
            if x[0] > 0.0 || x[x.len() - 1] < PI {
                return invalid("coefficient table must cover [0, π]");
            }
            if values.iter().any(|v| !v.is_finite()) {
                return invalid("coefficient table values must be finite");
            }
        }
        Ok(())
    }
}

/// Endpoints carrying the control (and the observation).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlSide {
    #[default]
    Left,
    Right,
    Both,
}

impl ControlSide {
    /// Endpoint indices: 0 for `x = 0`, 1 for `x = π`.
    pub fn endpoints(self) -> &'static [usize] {
        match self {
            ControlSide::Left => &[0],
            ControlSide::Right => &[1],
            ControlSide::Both => &[0, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchrodingerModel {
    pub modes: usize,
    pub coeff_a: Profile,
    pub coeff_b: Profile,
    #[serde(default)]
    pub control_side: ControlSide,
    pub grid: TimeGrid,
}

impl SchrodingerModel {
    pub fn new(modes: usize, coeff_a: Profile, coeff_b: Profile, grid: TimeGrid) -> Self {
        Self { modes, coeff_a, coeff_b, control_side: ControlSide::Left, grid }
    }

    pub fn with_control_side(mut self, side: ControlSide) -> Self {
        self.control_side = side;
        self
    }

    /// Same model with twice the modes.
    pub fn refined_modes(&self) -> Self {
        Self { modes: 2 * self.modes, ..self.clone() }
    }

    pub fn with_grid(&self, grid: TimeGrid) -> Self {
        Self { grid, ..self.clone() }
    }

    /// `λ_k = k²`, `k = 1..=K`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.modes).map(|k| (k * k) as f64).collect()
    }

    /// Interior collocation points `x_j = jπ/(K+1)`.
    pub fn collocation_points(&self) -> Vec<f64> {
        let h = PI / (self.modes + 1) as f64;
        (1..=self.modes).map(|j| j as f64 * h).collect()
    }

    fn check_modes(&self) -> Result<()> {
        if self.modes < MIN_MODES {
            return invalid(format!("Schrödinger model needs at least {MIN_MODES} modes, got {}", self.modes));
        }
        self.coeff_a.validate()?;
        self.coeff_b.validate()
    }

    fn validate(&self) -> Result<()> {
        self.check_modes()?;
        for (name, p) in [("a", &self.coeff_a), ("b", &self.coeff_b)] {
            for x in [0.0, PI] {
                if p.eval(x).abs() > 1e-10 {
                    return invalid(format!("coefficient {name} must vanish at the endpoints (value {} at x = {x})", p.eval(x)));
                }
            }
        }
        Ok(())
    }

    /// The state space with Gram `diag(1/λ_k)`.
    pub fn state_space(&self) -> Result<DiscreteSpace> {
        let w: Vec<f64> = self.eigenvalues().iter().map(|l| 1.0 / l).collect();
        DiscreteSpace::weighted("H", &w, Scalars::Complex)
    }

    /// `y(x) = Σ_k y_k e_k(x)` at one point.
    pub fn evaluate(&self, y: &DVector<Complex64>, x: f64) -> Complex64 {
        let c = (2.0 / PI).sqrt();
        y.iter().enumerate().map(|(k, v)| v * (c * ((k + 1) as f64 * x).sin())).sum()
    }
}

/// Coordinate vector of `e_k` (`k ≥ 1`).
pub fn sine_mode(model: &SchrodingerModel, k: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(model.modes);
    v[k - 1] = Complex64::new(1.0, 0.0);
    v
}

/// Sine coefficient `⟨Υ δ_side, e_k⟩`: `√(2/π)/k` at `x = 0`, `√(2/π)(−1)^{k+1}/k` at `x = π`.
fn upsilon(k: usize, side: usize) -> f64 {
    let c = (2.0 / PI).sqrt() / k as f64;
    if side == 0 || k % 2 == 1 {
        c
    } else {
        -c
    }
}

/// Sine coefficients of the harmonic (affine) extension of endpoint data `(u(0), u(π))`.
pub fn dirichlet_map(model: &SchrodingerModel, datum: [Complex64; 2]) -> DVector<Complex64> {
    DVector::from_fn(model.modes, |r, _| datum[0] * upsilon(r + 1, 0) + datum[1] * upsilon(r + 1, 1))
}

/// `‖Υ‖` from `C²` (both endpoints, counting measure) into `L²(0, π)` for the truncated series.
pub fn dirichlet_bound(model: &SchrodingerModel) -> f64 {
    let m = DMatrix::from_fn(model.modes, 2, |r, c| upsilon(r + 1, c));
    largest_eigenvalue(m.transpose() * m).sqrt()
}

/// `B* f = −i ∂_ν((−Δ)⁻¹ f)` on the controlled endpoints.
pub fn bstar_trace(model: &SchrodingerModel, f: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    if f.len() != model.modes {
        return Err(SwlpError::DimensionMismatch { space: "H".into(), expected: model.modes, found: f.len() });
    }
    let c = (2.0 / PI).sqrt();
    let sides = model.control_side.endpoints();
    Ok(DVector::from_fn(sides.len(), |s, _| {
        // ∂_ν = −∂_x at 0 and +∂_x at π; e_k'(0) = √(2/π) k, e_k'(π) = √(2/π) k (−1)^k.
        let dn: Complex64 = f
            .iter()
            .enumerate()
            .map(|(r, v)| {
                let k = (r + 1) as f64;
                let sign = if sides[s] == 0 || r % 2 == 0 { -1.0 } else { 1.0 };
                v * (sign * c / k)
            })
            .sum();
        -I * dn
    }))
}

/// `A⁻¹ y`: mode `k` divided by `λ_k`.
pub fn transformed_field(model: &SchrodingerModel, y: &DVector<Complex64>) -> DVector<Complex64> {
    DVector::from_fn(model.modes, |r, _| y[r] / ((r + 1) * (r + 1)) as f64)
}

/// Maps sine coefficients of `w` to `∂_ν w` on the controlled endpoints.
fn normal_derivative(model: &SchrodingerModel) -> DMatrix<Complex64> {
    let c = (2.0 / PI).sqrt();
    let sides = model.control_side.endpoints();
    DMatrix::from_fn(sides.len(), model.modes, |s, r| {
        let k = (r + 1) as f64;
        let v = if sides[s] == 0 || r % 2 == 0 { -c * k } else { c * k };
        Complex64::new(v, 0.0)
    })
}

/// Observation `−i ∂_ν w̃` with `w̃ = A⁻¹ y`, as a matrix acting on `y`.
pub fn observation_matrix(model: &SchrodingerModel) -> DMatrix<Complex64> {
    let mut m = normal_derivative(model) * -I;
    for (r, mut col) in m.column_iter_mut().enumerate() {
        col /= Complex64::new(((r + 1) * (r + 1)) as f64, 0.0);
    }
    m
}

/// Discrete sine transform at the collocation points: `T_{jk} = e_k(x_j)`, and its inverse `(π/(K+1)) Tᵀ`.
pub fn collocation_transform(modes: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let c = (2.0 / PI).sqrt();
    let h = PI / (modes + 1) as f64;
    let t = DMatrix::from_fn(modes, modes, |j, k| c * ((j + 1) as f64 * (k + 1) as f64 * h).sin());
    let inv = t.transpose() * h;
    (t, inv)
}

/// Multiplication by a profile, through collocation: `T⁻¹ diag(p(x_j)) T`.
pub fn multiplication_operator(model: &SchrodingerModel, p: &Profile) -> DMatrix<Complex64> {
    let (t, inv) = collocation_transform(model.modes);
    let d = DVector::from_iterator(model.modes, model.collocation_points().into_iter().map(|x| p.eval(x)));
    (inv * DMatrix::from_diagonal(&d) * t).map(|v| Complex64::new(v, 0.0))
}

fn generator(model: &SchrodingerModel, space: DiscreteSpace) -> Result<GeneratorRealization<Complex64>> {
    let values = DVector::from_iterator(model.modes, model.eigenvalues().into_iter().map(|l| I * l));
    let matrix = DMatrix::from_diagonal(&values);
    let id = DMatrix::identity(model.modes, model.modes);
    Ok(GeneratorRealization::with_spectral(space, matrix, values, id.clone(), Some(id))?.into_group())
}

fn coefficient(model: &SchrodingerModel, p: &Profile) -> Coefficient<Complex64> {
    if p.is_zero() {
        Coefficient::zero(model.modes)
    } else {
        Coefficient::constant(multiplication_operator(model, p))
    }
}

/// `dy = (iA y + J y + B u) dt + K y dW`, observation `C = B*`.
pub fn build_schrodinger_system(model: &SchrodingerModel) -> Result<StochasticSystemRealization<Complex64>> {
    model.validate()?;
    let hs = model.state_space()?;
    let sides = model.control_side.endpoints();
    let us = DiscreteSpace::euclidean("U", sides.len(), Scalars::Complex)?;
    let ys = DiscreteSpace::euclidean("Utilde", sides.len(), Scalars::Complex)?;
    let b = DMatrix::from_fn(model.modes, sides.len(), |r, s| {
        let k = r + 1;
        -I * ((k * k) as f64 * upsilon(k, sides[s]))
    });
    StochasticSystemRealization::new(
        generator(model, hs.clone())?,
        LinearMap::new(us, hs.clone(), b)?,
        LinearMap::new(hs, ys, observation_matrix(model))?,
        coefficient(model, &model.coeff_a),
        coefficient(model, &model.coeff_b),
    )
}

/// State-plus-observation constant on `K` and on `2K` modes, same paths and trials.
pub fn schrodinger_wellposed_constant(
    model: &SchrodingerModel,
    node: usize,
    trials: usize,
    ens: &BrownianEnsemble,
) -> Result<RefinedConstant> {
    if ens.grid() != &model.grid {
        return Err(SwlpError::GridMismatch("ensemble grid differs from the model grid".into()));
    }
    let coarse = wellposed_constant(&build_schrodinger_system(model)?, node, trials, ens)?;
    let fine = wellposed_constant(&build_schrodinger_system(&model.refined_modes())?, node, trials, ens)?;
    Ok(RefinedConstant::new(coarse, fine))
}

/// Largest deviation of the recursively transformed field from `A⁻¹ Y`, relative to `max |A⁻¹ Y|`,
/// with the noise source entering as `+A⁻¹(bY) dW` and as `−A⁻¹(bY) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignCheck {
    pub plus: f64,
    pub minus: f64,
}

pub fn transformed_noise_sign(
    model: &SchrodingerModel,
    y0: &DVector<Complex64>,
    u: &InputSignal<Complex64>,
    ens: &BrownianEnsemble,
) -> Result<SignCheck> {
    let sys = build_schrodinger_system(model)?;
    let traj = mild_solve_stepping(&sys, &InitialState::Deterministic(y0.clone()), u, ens)?;
    let grid = *ens.grid();
    let dt = Complex64::new(grid.dt(), 0.0);
    let lam = DMatrix::from_diagonal(&DVector::from_iterator(
        model.modes,
        model.eigenvalues().into_iter().map(|l| Complex64::new(l, 0.0)),
    ));
    let lam_inv = lam.map(|v| if v == Complex64::new(0.0, 0.0) { v } else { v.inv() });
    let s = sys.generator().propagator(grid.dt())?;
    let jw = &lam_inv * sys.f1().pieces()[0].clone() * &lam;
    let kw = &lam_inv * sys.f2().pieces()[0].clone() * &lam;
    let bw = &lam_inv * sys.b().matrix();
    let mut scale: f64 = 0.0;
    let mut dev = [0.0_f64; 2];
    for p in 0..ens.paths() {
        for (slot, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut w = transformed_field(model, &traj.state_vector(p, 0));
            for n in 0..grid.steps() {
                let un = match u {
                    InputSignal::Deterministic(v) => v[n].clone(),
                    InputSignal::Adapted(v) => v[n].column(p).into_owned(),
                };
                let dw = Complex64::new(sign * ens.increment(p, n), 0.0);
                let z = &w + &jw * &w * dt + &bw * un * dt + &kw * &w * dw;
                w = &s * z;
                let exact = transformed_field(model, &traj.state_vector(p, n + 1));
                scale = scale.max(exact.camax());
                dev[slot] = dev[slot].max((&w - &exact).camax());
            }
        }
    }
    let scale = scale.max(f64::MIN_POSITIVE);
    Ok(SignCheck { plus: dev[0] / scale, minus: dev[1] / scale })
}
