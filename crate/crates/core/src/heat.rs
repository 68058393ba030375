//! Stochastic heat equation on `(0, L)` with Neumann boundary control and
//! boundary-trace observation, discretized with cell-centered finite volumes.
//!
//! `dy = (Δy + a y) dt + b y dW`, `∂y/∂ν = u` on `{0, L}`, `z = y|_{{0, L}}`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SwlpError};
use crate::field::Scalars;
use crate::gain::{wellposed_constant, RefinedConstant};
use crate::generator::GeneratorRealization;
use crate::linalg::is_finite;
use crate::solve::{blocks, validate, StepOps};
use crate::spaces::{DiscreteSpace, LinearMap};
use crate::stochastics::{mc_estimate, BrownianEnsemble, TimeGrid};
use crate::system::{Coefficient, InitialState, InputSignal, Provenance, Scheme, StochasticSystemRealization, Trajectory};

/// A field on cells, piecewise constant in time over `[0, span)` in equal pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellField {
    pub span: f64,
    pub pieces: Vec<Vec<f64>>,
}

impl CellField {
    pub fn constant(value: f64, cells: usize) -> Self {
        Self { span: 1.0, pieces: vec![vec![value; cells]] }
    }

    pub fn sup_norm(&self) -> f64 {
        self.pieces.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Each cell split in two, values copied.
    pub fn refined(&self) -> Self {
        Self {
            span: self.span,
            pieces: self.pieces.iter().map(|p| p.iter().flat_map(|v| [*v, *v]).collect()).collect(),
        }
    }

    fn coefficient(&self, cells: usize) -> Result<Coefficient<f64>> {
        if self.pieces.iter().any(|p| p.len() != cells) {
            return invalid(format!("coefficient field pieces must have {cells} cells"));
        }
        if self.pieces.iter().flatten().all(|v| *v == 0.0) {
            return Ok(Coefficient::zero(cells));
        }
        let mats = self.pieces.iter().map(|p| DMatrix::from_diagonal(&DVector::from_column_slice(p))).collect();
        Coefficient::piecewise(self.span, mats)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatModel {
    pub length: f64,
    pub cells: usize,
    pub coeff_a: CellField,
    pub coeff_b: CellField,
    pub grid: TimeGrid,
}

impl HeatModel {
    /// Spatially constant, time-independent coefficients.
    pub fn uniform(length: f64, cells: usize, a: f64, b: f64, grid: TimeGrid) -> Self {
        Self {
            length,
            cells,
            coeff_a: CellField::constant(a, cells),
            coeff_b: CellField::constant(b, cells),
            grid,
        }
    }

    pub fn h(&self) -> f64 {
        self.length / self.cells as f64
    }

    /// Cell centers `(j + ½) h`.
    pub fn centers(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.cells).map(|j| (j as f64 + 0.5) * h).collect()
    }

    /// Same model on `2n` cells.
    pub fn refined_space(&self) -> Self {
        Self {
            length: self.length,
            cells: 2 * self.cells,
            coeff_a: self.coeff_a.refined(),
            coeff_b: self.coeff_b.refined(),
            grid: self.grid,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.cells < 4 {
            return invalid(format!("heat model needs at least 4 cells, got {}", self.cells));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return invalid("interval length must be positive");
        }
        Ok(())
    }

    /// Samples a smooth profile at the cell centers.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.cells, self.centers().into_iter().map(f))
    }
}

/// Neumann Laplacian with ghost-cell closure.
fn laplacian(n: usize, h: f64) -> DMatrix<f64> {
    let s = 1.0 / (h * h);
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        if j > 0 {
            a[(j, j - 1)] = s;
            a[(j, j)] -= s;
        }
        if j + 1 < n {
            a[(j, j + 1)] = s;
            a[(j, j)] -= s;
        }
    }
    a
}

/// Closed-form eigenpairs: `μ_k = −(4/h²) sin²(kπh/(2L))`, `v_k(j) ∝ cos(kπ(j+½)/n)`,
/// columns orthonormal in the Euclidean sense.
pub fn neumann_eigenpairs(model: &HeatModel) -> (DVector<f64>, DMatrix<f64>) {
    let n = model.cells;
    let h = model.h();
    let values = DVector::from_fn(n, |k, _| {
        let s = (k as f64 * std::f64::consts::PI * h / (2.0 * model.length)).sin();
        -4.0 / (h * h) * s * s
    });
    let vectors = DMatrix::from_fn(n, n, |j, k| {
        let c = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        c * (k as f64 * std::f64::consts::PI * (j as f64 + 0.5) / n as f64).cos()
    });
    (values, vectors)
}

/// Discrete cosine mode `k`, normalized in `L²(0, L)`.
pub fn cosine_mode(model: &HeatModel, k: usize) -> DVector<f64> {
    let (_, v) = neumann_eigenpairs(model);
    v.column(k) / model.h().sqrt()
}

pub fn build_heat_system(model: &HeatModel) -> Result<StochasticSystemRealization<f64>> {
    model.validate()?;
    let n = model.cells;
    let h = model.h();
    let hs = DiscreteSpace::weighted("H", &vec![h; n], Scalars::Real)?;
    let us = DiscreteSpace::euclidean("U", 2, Scalars::Real)?;
    let ys = DiscreteSpace::euclidean("Utilde", 2, Scalars::Real)?;
    let (values, vectors) = neumann_eigenpairs(model);
    let inverse = vectors.transpose();
    let a = GeneratorRealization::with_spectral(hs.clone(), laplacian(n, h), values, vectors, Some(inverse))?;
    let mut b = DMatrix::zeros(n, 2);
    b[(0, 0)] = 1.0 / h;
    b[(n - 1, 1)] = 1.0 / h;
    let mut c = DMatrix::zeros(2, n);
    c[(0, 0)] = 1.5;
    c[(0, 1)] = -0.5;
    c[(1, n - 1)] = 1.5;
    c[(1, n - 2)] = -0.5;
    StochasticSystemRealization::new(
        a,
        LinearMap::new(us, hs.clone(), b)?,
        LinearMap::new(hs, ys, c)?,
        model.coeff_a.coefficient(n)?,
        model.coeff_b.coefficient(n)?,
    )
}

/// `Σ_j h y_j`.
pub fn mass(model: &HeatModel, y: &[f64]) -> f64 {
    model.h() * y.iter().sum::<f64>()
}

/// Summation-by-parts gradient energy `Σ_{j<n-1} h ((y_{j+1} − y_j)/h)²`.
pub fn gradient_energy(model: &HeatModel, y: &[f64]) -> f64 {
    let h = model.h();
    y.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / h
}

fn lift_operator(model: &HeatModel) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    model.validate()?;
    let n = model.cells;
    let m = DMatrix::identity(n, n) - laplacian(n, model.h());
    Cholesky::new(m).ok_or_else(|| SwlpError::Singular("lifting operator".into()))
}

/// Solves the regularized lifting problem `v − Δv = 0`, `∂v/∂ν = u`, i.e. `(I − A) v = B u`.
pub fn neumann_lift(model: &HeatModel, u: [f64; 2]) -> Result<DVector<f64>> {
    let chol = lift_operator(model)?;
    Ok(chol.solve(&boundary_source(model, u)))
}

fn boundary_source(model: &HeatModel, u: [f64; 2]) -> DVector<f64> {
    let n = model.cells;
    let mut rhs = DVector::zeros(n);
    rhs[0] = u[0] / model.h();
    rhs[n - 1] += u[1] / model.h();
    rhs
}

/// Lifting `v` and its time derivative on grid nodes `0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedField {
    pub v: Vec<DVector<f64>>,
    pub v_t: Vec<DVector<f64>>,
}

/// Lifts a deterministic input. Node `N` uses the input extrapolated linearly from the last two steps.
pub fn lift_field(model: &HeatModel, u: &InputSignal<f64>) -> Result<LiftedField> {
    let InputSignal::Deterministic(vals) = u else {
        return Err(SwlpError::Unsupported("lifting requires a deterministic input".into()));
    };
    let steps = model.grid.steps();
    if vals.len() < steps || vals.iter().any(|x| x.len() != 2) {
        return invalid("lifting input must give a boundary pair on every step");
    }
    let chol = lift_operator(model)?;
    let node_input = |n: usize| -> [f64; 2] {
        if n < steps {
            [vals[n][0], vals[n][1]]
        } else if steps >= 2 {
            [2.0 * vals[steps - 1][0] - vals[steps - 2][0], 2.0 * vals[steps - 1][1] - vals[steps - 2][1]]
        } else {
            [vals[0][0], vals[0][1]]
        }
    };
    let v: Vec<DVector<f64>> =
        (0..=steps).into_par_iter().map(|n| chol.solve(&boundary_source(model, node_input(n)))).collect();
    let dt = model.grid.dt();
    let v_t = (0..=steps)
        .map(|n| {
            if n == 0 {
                (&v[1] - &v[0]) / dt
            } else if n == steps {
                (&v[steps] - &v[steps - 1]) / dt
            } else {
                (&v[n + 1] - &v[n - 1]) / (2.0 * dt)
            }
        })
        .collect();
    Ok(LiftedField { v, v_t })
}

/// Per-step lifting source: drift times `Δt`, and the noise part when `b ≠ 0`.
type LiftSource = (DVector<f64>, Option<DVector<f64>>);

/// Solves for `ỹ = y − v` with homogeneous Neumann data and returns `y = ỹ + v`.
///
/// `dỹ = (Aỹ + aỹ + av + v − v_t) dt + b(ỹ + v) dW`; the `+v` source comes from
/// the regularized lifting (`Δv = v`).
pub fn lifted_solve(
    model: &HeatModel,
    y0: &InitialState<f64>,
    u: &InputSignal<f64>,
    ens: &BrownianEnsemble,
) -> Result<Trajectory<f64>> {
    if ens.grid() != &model.grid {
        return Err(SwlpError::GridMismatch("ensemble grid differs from the model grid".into()));
    }
    let sys = build_heat_system(model)?;
    validate(&sys, y0, u, ens)?;
    let lift = lift_field(model, u)?;
    let grid = model.grid;
    let zero = InputSignal::zero(2, grid.steps());
    let ops = StepOps::new(&sys, grid, &zero)?;
    let nodes = grid.steps() + 1;
    let n = model.cells;
    let dt = grid.dt();
    let sources: Vec<Option<LiftSource>> = (0..grid.steps())
        .map(|k| {
            let v = &lift.v[k];
            if v.iter().all(|x| *x == 0.0) && lift.v_t[k].iter().all(|x| *x == 0.0) {
                return None;
            }
            let av = sys.f1().at_step(&grid, k) * v;
            let det = (av + v - &lift.v_t[k]) * dt;
            let noise = (!sys.f2().is_zero()).then(|| sys.f2().at_step(&grid, k) * v);
            Some((det, noise))
        })
        .collect();

    let parts: Vec<Vec<f64>> = blocks(ens.paths())
        .into_par_iter()
        .map(|r| {
            let mut buf = vec![0.0; r.len() * nodes * n];
            let write = |buf: &mut [f64], node: usize, y: &DMatrix<f64>| {
                for j in 0..y.ncols() {
                    let off = (j * nodes + node) * n;
                    for i in 0..n {
                        buf[off + i] = y[(i, j)] + lift.v[node][i];
                    }
                }
            };
            let mut y = y0.block(r.clone());
            for mut col in y.column_iter_mut() {
                col -= &lift.v[0];
            }
            write(&mut buf, 0, &y);
            let w = vec![0.0; r.len()];
            for k in 0..grid.steps() {
                let dw = ens.step_slice(k, r.clone());
                let mut z = y;
                if let Some(g) = ops.drift(k, &z, &zero, r.clone(), &w, &dw)? {
                    z += g;
                }
                if let Some((det, noise)) = &sources[k] {
                    for (j, mut col) in z.column_iter_mut().enumerate() {
                        col += det;
                        if let Some(bv) = noise {
                            col.axpy(dw[j], bv, 1.0);
                        }
                    }
                }
                y = ops.semigroup_step() * z;
                if !is_finite(&y) {
                    return Err(SwlpError::Divergence { node: k + 1 });
                }
                write(&mut buf, k + 1, &y);
            }
            Ok(buf)
        })
        .collect::<Result<_>>()?;
    let provenance = Provenance { scheme: Scheme::Lifted, seed: ens.seed(), initial: y0.clone(), input: u.clone() };
    Ok(Trajectory::from_parts(grid, n, ens.paths(), parts.concat(), provenance))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyResidual {
    /// `|E(LHS − RHS)|`.
    pub value: f64,
    pub mean: f64,
    pub sem: f64,
    pub per_path: Vec<f64>,
}

/// Discrete energy balance
/// `|y_N|² − |y_0|² + 2 Σ Δt ‖∇y_n‖² − [2 Σ Δt ⟨Bu_n, y_n⟩ + 2 Σ Δt ⟨a y_n, y_n⟩ + Σ Δt |b y_n|²]` per path.
pub fn energy_identity_residual(
    model: &HeatModel,
    traj: &Trajectory<f64>,
    u: &InputSignal<f64>,
    ens: &BrownianEnsemble,
) -> Result<EnergyResidual> {
    let grid = model.grid;
    if traj.grid() != &grid || ens.grid() != &grid || traj.paths() != ens.paths() || traj.dim() != model.cells {
        return Err(SwlpError::GridMismatch("trajectory, ensemble and model differ".into()));
    }
    let sys = build_heat_system(model)?;
    u.check(sys.u(), grid.steps(), ens.paths())?;
    let h = model.h();
    let dt = grid.dt();
    let b = sys.b().matrix();
    let per_path: Vec<f64> = (0..traj.paths())
        .into_par_iter()
        .map(|p| {
            let norm = |y: &[f64]| h * y.iter().map(|v| v * v).sum::<f64>();
            let mut lhs = norm(traj.state(p, grid.steps())) - norm(traj.state(p, 0));
            let mut rhs = 0.0;
            for k in 0..grid.steps() {
                let y = traj.state(p, k);
                lhs += 2.0 * dt * gradient_energy(model, y);
                let bu = b * u.block(k, p..p + 1);
                let a = sys.f1().at_step(&grid, k).diagonal();
                let bb = sys.f2().at_step(&grid, k).diagonal();
                let mut s = 0.0;
                for i in 0..model.cells {
                    s += h * (2.0 * bu[i] * y[i] + 2.0 * a[i] * y[i] * y[i] + (bb[i] * y[i]).powi(2));
                }
                rhs += dt * s;
            }
            lhs - rhs
        })
        .collect();
    let (mean, sem) = match mc_estimate(&per_path) {
        Ok(m) => (m.mean, m.sem),
        Err(_) => (per_path[0], 0.0),
    };
    Ok(EnergyResidual { value: mean.abs(), mean, sem, per_path })
}

/// Which boundary values a trace constant refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    /// Second-order extrapolation used by the observation operator.
    Extrapolated,
    /// Values of the two boundary cells, as paired by `⟨Bu, y⟩`.
    BoundaryCells,
}

/// Smallest `κ` with `|trace y|² ≤ κ (‖y‖² + ‖∇_h y‖²)`.
pub fn trace_constant(model: &HeatModel, kind: TraceKind) -> Result<f64> {
    model.validate()?;
    let n = model.cells;
    let h = model.h();
    let mut e = DMatrix::zeros(2, n);
    match kind {
        TraceKind::Extrapolated => {
            e[(0, 0)] = 1.5;
            e[(0, 1)] = -0.5;
            e[(1, n - 1)] = 1.5;
            e[(1, n - 2)] = -0.5;
        }
        TraceKind::BoundaryCells => {
            e[(0, 0)] = 1.0;
            e[(1, n - 1)] = 1.0;
        }
    }
    // ‖y‖² + ‖∇y‖² = yᵀ (h I − h A) y
    let m = (DMatrix::identity(n, n) - laplacian(n, h)) * h;
    let chol = Cholesky::new(m).ok_or_else(|| SwlpError::Singular("H¹ form".into()))?;
    let l_inv = chol.l().try_inverse().ok_or_else(|| SwlpError::Singular("H¹ factor".into()))?;
    let k = &e * l_inv.transpose();
    let q = k.transpose() * k;
    Ok(SymmetricEigen::new(q).eigenvalues.max())
}

/// Discrete Gronwall envelope for `E|y_n|²`.
///
/// From the energy balance and `2|u||y_Γ| ≤ ¼ (|y|² + ‖∇y‖²) + 4κ|u|²`:
/// `e_n ≤ (e_0 + 4κ Σ_{m<n} Δt |u_m|²) (1 + KΔt)^n` with `K = 2‖a‖∞ + ‖b‖²∞ + ¼`.
pub fn gronwall_bound(model: &HeatModel, e0: f64, u: &InputSignal<f64>) -> Result<Vec<f64>> {
    let kappa = trace_constant(model, TraceKind::BoundaryCells)?;
    let k = 2.0 * model.coeff_a.sup_norm() + model.coeff_b.sup_norm().powi(2) + 0.25;
    let dt = model.grid.dt();
    let us = DiscreteSpace::euclidean("U", 2, Scalars::Real)?;
    let paths = match u {
        InputSignal::Deterministic(_) => 1,
        InputSignal::Adapted(v) => v[0].ncols(),
    };
    let mut out = Vec::with_capacity(model.grid.steps() + 1);
    let mut input = 0.0;
    for n in 0..=model.grid.steps() {
        out.push((e0 + 4.0 * kappa * input) * (1.0 + k * dt).powi(n as i32));
        if n < model.grid.steps() {
            let step = u.window(n, 1).l2_norm_sq(&us, dt, paths);
            input += step.into_iter().fold(0.0, f64::max);
        }
    }
    Ok(out)
}

/// Discrete steady state for balanced fluxes `u = (−q, q)`: `q x_j + (m − qL/2)` with mean `m`.
pub fn steady_profile(model: &HeatModel, q: f64, mean: f64) -> DVector<f64> {
    model.sample(|x| q * x + (mean - 0.5 * q * model.length))
}

pub fn heat_wellposed_constant(
    model: &HeatModel,
    node: usize,
    trials: usize,
    ens: &BrownianEnsemble,
) -> Result<RefinedConstant> {
    if ens.grid() != &model.grid {
        return Err(SwlpError::GridMismatch("ensemble grid differs from the model grid".into()));
    }
    let coarse = wellposed_constant(&build_heat_system(model)?, node, trials, ens)?;
    let fine = wellposed_constant(&build_heat_system(&model.refined_space())?, node, trials, ens)?;
    Ok(RefinedConstant::new(coarse, fine))
}
