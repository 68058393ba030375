//! Backward adjoint equation with deterministic terminal data, and the
//! forward–backward duality pairing.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_schrodinger_system, generator, multiplication_operator, normal_derivative, transformed_field, SchrodingerModel,
};
use crate::error::{invalid, Result, SwlpError};
use crate::field::Complex64;
use crate::gain::isotropic;
use crate::rng::{CounterStream, DOMAIN_AUX};
use crate::solve::mild_solve_stepping;
use crate::spaces::DiscreteSpace;
use crate::stochastics::{mc_estimate, refine_brownian, BrownianEnsemble, TimeGrid};
use crate::system::{InitialState, InputSignal};

/// Terminal datum `v_T`.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalValue {
    Deterministic(DVector<Complex64>),
    /// One column per path; not supported by the solver.
    Random(DMatrix<Complex64>),
}

/// `(v, V)` on the grid nodes. `V` is identically zero for deterministic terminal data.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardSolution {
    pub grid: TimeGrid,
    pub v: Vec<DVector<Complex64>>,
    pub martingale: Vec<DVector<Complex64>>,
}

/// `v_n = (I + Δt J*) S(Δt)* v_{n+1}` from `v_N = v_T`, with `J*` the Gram adjoint of
/// multiplication by `a`. A spatially constant `a` is accepted here.
pub fn backward_adjoint_solve(model: &SchrodingerModel, v_t: &TerminalValue, grid: &TimeGrid) -> Result<BackwardSolution> {
    let TerminalValue::Deterministic(v_t) = v_t else {
        return Err(SwlpError::Unsupported("backward equation with random terminal data".into()));
    };
    model.check_modes()?;
    let space = model.state_space()?;
    space.check_len(v_t.len())?;
    let gen = generator(model, space.clone())?;
    let s_star = gen.propagator(grid.dt())?.adjoint();
    let step = if model.coeff_a.is_zero() {
        s_star
    } else {
        let j = multiplication_operator(model, &model.coeff_a);
        let j_star = space.solve_gram(&space.apply_gram(&j).adjoint());
        let n = model.modes;
        (DMatrix::identity(n, n) + j_star * Complex64::new(grid.dt(), 0.0)) * s_star
    };
    let steps = grid.steps();
    let mut v = vec![DVector::zeros(model.modes); steps + 1];
    v[steps] = v_t.clone();
    for n in (0..steps).rev() {
        v[n] = &step * &v[n + 1];
    }
    Ok(BackwardSolution { grid: *grid, martingale: vec![DVector::zeros(model.modes); steps + 1], v })
}

/// Per-path defect `D = R − M` of the discrete pairing identity, where
/// `R = ⟨Y_N, v_T⟩ − ⟨Y_0, v_0⟩ − Σ Δt ⟨u_n, B* v_n⟩` and `M = Σ ⟨K Y_n, v_n⟩ ΔW_n` has mean zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityResidual {
    /// `|mean D|`.
    pub value: f64,
    pub sem: f64,
    /// `max_p |D_p|`.
    pub max_abs: f64,
    /// `sqrt(mean_p |D_p|²)`.
    pub rms: f64,
    pub paths: usize,
}

pub fn duality_residual(
    model: &SchrodingerModel,
    y0: &DVector<Complex64>,
    u: &InputSignal<Complex64>,
    v_t: &DVector<Complex64>,
    ens: &BrownianEnsemble,
) -> Result<DualityResidual> {
    if ens.grid() != &model.grid {
        return Err(SwlpError::GridMismatch("ensemble grid differs from the model grid".into()));
    }
    let grid = *ens.grid();
    let sys = build_schrodinger_system(model)?;
    let back = backward_adjoint_solve(model, &TerminalValue::Deterministic(v_t.clone()), &grid)?;
    let traj = mild_solve_stepping(&sys, &InitialState::Deterministic(y0.clone()), u, ens)?;
    let (h, us) = (sys.h(), sys.u());
    let b_star = sys.b().adjoint();
    let bv: Vec<DVector<Complex64>> = back.v[..grid.steps()].iter().map(|v| b_star.matrix() * v).collect();
    let k = sys.f2().pieces()[0].clone();
    let noisy = !sys.f2().is_zero();
    let dt = grid.dt();
    let defects: Vec<Complex64> = (0..ens.paths())
        .into_par_iter()
        .map(|p| {
            let y = |n: usize| traj.state_vector(p, n);
            let mut d = h.inner(&y(grid.steps()), v_t)? - h.inner(&y(0), &back.v[0])?;
            for n in 0..grid.steps() {
                let un = match u {
                    InputSignal::Deterministic(v) => v[n].clone(),
                    InputSignal::Adapted(v) => v[n].column(p).into_owned(),
                };
                d -= us.inner(&un, &bv[n])? * dt;
                if noisy {
                    d -= h.inner(&(&k * y(n)), &back.v[n])? * ens.increment(p, n);
                }
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let re: Vec<f64> = defects.iter().map(|d| d.re).collect();
    let im: Vec<f64> = defects.iter().map(|d| d.im).collect();
    let mean = Complex64::new(re.iter().sum::<f64>(), im.iter().sum::<f64>()) / defects.len() as f64;
    let sem = match (mc_estimate(&re), mc_estimate(&im)) {
        (Ok(a), Ok(b)) => a.sem.hypot(b.sem),
        _ => f64::NAN,
    };
    Ok(DualityResidual {
        value: mean.norm(),
        sem,
        max_abs: defects.iter().map(|d| d.norm()).fold(0.0, f64::max),
        rms: (defects.iter().map(|d| d.norm_sqr()).sum::<f64>() / defects.len() as f64).sqrt(),
        paths: defects.len(),
    })
}

/// Duality defect on a grid and on its coupled halving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityStudy {
    pub coarse: DualityResidual,
    pub fine: DualityResidual,
    /// `coarse.rms / fine.rms`. The mean defect is mostly noise at moderate path counts.
    pub ratio: f64,
}

/// Runs [`duality_residual`] on `ens` and on its refinement, with each input value held over both half steps.
pub fn duality_refinement(
    model: &SchrodingerModel,
    y0: &DVector<Complex64>,
    u: &[DVector<Complex64>],
    v_t: &DVector<Complex64>,
    ens: &BrownianEnsemble,
) -> Result<DualityStudy> {
    let coarse = duality_residual(model, y0, &InputSignal::Deterministic(u.to_vec()), v_t, ens)?;
    let fine_ens = refine_brownian(ens);
    let fine_u = u.iter().flat_map(|x| [x.clone(), x.clone()]).collect();
    let fine_model = model.with_grid(*fine_ens.grid());
    let fine = duality_residual(&fine_model, y0, &InputSignal::Deterministic(fine_u), v_t, &fine_ens)?;
    Ok(DualityStudy { ratio: coarse.rms / fine.rms, coarse, fine })
}

/// `Σ_{n<N} Δt |∂_ν w_n|² / |v_T|²_H` with `w = A⁻¹ v`, for random `v_T` on the first `support` modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardTrace {
    pub ratios: Vec<f64>,
    pub max: f64,
}

pub fn backward_hidden_regularity(
    model: &SchrodingerModel,
    trials: usize,
    support: usize,
    seed: u64,
) -> Result<BackwardTrace> {
    if trials == 0 || support == 0 || support > model.modes {
        return invalid("need positive trials and 1 ≤ support ≤ modes");
    }
    let weights: Vec<f64> = model.eigenvalues()[..support].iter().map(|l| 1.0 / l).collect();
    let sub = DiscreteSpace::weighted("H", &weights, crate::field::Scalars::Complex)?;
    let space = model.state_space()?;
    let trace = normal_derivative(model);
    let dt = model.grid.dt();
    let ratios = (0..trials)
        .map(|trial| {
            let mut s = CounterStream::new(seed, DOMAIN_AUX, trial as u64);
            let head: DVector<Complex64> = isotropic(&sub, &mut s);
            let mut v_t = DVector::zeros(model.modes);
            v_t.rows_mut(0, support).copy_from(&head);
            let norm = space.norm_sq(&v_t)?;
            if norm == 0.0 {
                return invalid("drew a zero terminal value");
            }
            let back = backward_adjoint_solve(model, &TerminalValue::Deterministic(v_t), &model.grid)?;
            let energy: f64 = back.v[..model.grid.steps()]
                .iter()
                .map(|v| (&trace * transformed_field(model, v)).norm_squared() * dt)
                .sum();
            Ok(energy / norm)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(BackwardTrace { ratios, max })
}
