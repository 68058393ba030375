//! Sampled well-posedness quantities: hidden regularity, input/output gains and
//! state-plus-output constants.
//!
//! Suprema over data cannot be sampled, so every estimator draws normalized
//! Gaussian data and reports the largest and the 0.9-quantile quotient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{lift_matrix, Field};
use crate::rng::{CounterStream, DOMAIN_TRIALS};
use crate::solve::simulate;
use crate::spaces::DiscreteSpace;
use crate::stochastics::{mc_estimate, BrownianEnsemble, TimeGrid};
use crate::system::{InitialState, InputSignal, StochasticSystemRealization};

/// Max and 0.9-quantile of per-trial quotients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    pub max: f64,
    pub q90: f64,
    pub ratios: Vec<f64>,
}

impl GainEstimate {
    fn from_ratios(ratios: Vec<f64>) -> Self {
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        let idx = ((0.9 * sorted.len() as f64).ceil() as usize).saturating_sub(1);
        Self { max: sorted.last().copied().unwrap_or(0.0), q90: sorted.get(idx).copied().unwrap_or(0.0), ratios }
    }
}

/// A sampled data pair. `y0` has unit `H` norm before mixing, `u` unit `L²(0,t;U)` norm.
#[derive(Debug, Clone)]
pub struct UnitPair<T: Field> {
    pub theta: f64,
    pub y0: DVector<T>,
    pub u: InputSignal<T>,
}

impl<T: Field> UnitPair<T> {
    /// `|y0|_H + |u|_{L²}`, i.e. `cos θ + sin θ`.
    pub fn data_norm(&self) -> f64 {
        self.theta.cos() + self.theta.sin()
    }
}

fn gaussian<T: Field>(s: &mut CounterStream) -> T {
    match T::SCALARS {
        crate::field::Scalars::Real => T::from_real(s.normal()),
        crate::field::Scalars::Complex => {
            let r = std::f64::consts::FRAC_1_SQRT_2;
            T::from_parts(r * s.normal(), r * s.normal())
        }
    }
}

/// Isotropic Gaussian vector in the metric of `space`: `L⁻ᴴ ξ`.
pub(crate) fn isotropic<T: Field>(space: &DiscreteSpace, s: &mut CounterStream) -> DVector<T> {
    let xi = DVector::from_fn(space.dim(), |_, _| gaussian::<T>(s));
    let lh = lift_matrix::<T>(&space.gram_factor()).adjoint();
    lh.solve_upper_triangular(&xi).expect("cholesky factor is invertible")
}

/// Draws trial `trial` of the pair law used by the gain estimators.
///
/// The stream is read as: mixing angle, then the input node by node, then the
/// initial state, so the angle and the input do not depend on `dim(H)`.
pub fn sample_unit_pair<T: Field>(
    sys: &StochasticSystemRealization<T>,
    grid: &TimeGrid,
    node: usize,
    seed: u64,
    trial: u64,
) -> Result<UnitPair<T>> {
    grid.check_node(node)?;
    if node == 0 {
        return invalid("gain estimates need at least one step");
    }
    let dt = grid.dt();
    for attempt in 0..u64::from(u16::MAX) {
        let mut s = CounterStream::new(seed, DOMAIN_TRIALS + attempt, trial);
        let theta = 0.5 * std::f64::consts::PI * s.uniform();
        let mut u: Vec<DVector<T>> = (0..node).map(|_| isotropic::<T>(sys.u(), &mut s)).collect();
        let y = isotropic::<T>(sys.h(), &mut s);
        let un: f64 = u.iter().map(|x| sys.u().norm_sq(x).unwrap_or(0.0)).sum::<f64>() * dt;
        let yn = sys.h().norm_sq(&y)?;
        if !(un > 0.0 && yn > 0.0) {
            continue;
        }
        let cu = T::from_real(theta.sin() / un.sqrt());
        u.iter_mut().for_each(|x| *x *= cu);
        u.resize(grid.steps(), DVector::zeros(sys.u().dim()));
        let y0 = y * T::from_real(theta.cos() / yn.sqrt());
        return Ok(UnitPair { theta, y0, u: InputSignal::Deterministic(u) });
    }
    invalid("could not draw a nonzero data pair")
}

/// Unit-norm Gaussian initial state for trial `trial`.
pub fn sample_unit_state<T: Field>(space: &DiscreteSpace, seed: u64, trial: u64) -> Result<DVector<T>> {
    for attempt in 0..u64::from(u16::MAX) {
        let mut s = CounterStream::new(seed, DOMAIN_TRIALS + (1 << 16) + attempt, trial);
        let y = isotropic::<T>(space, &mut s);
        let n = space.norm(&y)?;
        if n > 0.0 {
            return Ok(y / T::from_real(n));
        }
    }
    invalid("could not draw a nonzero state")
}

/// Per-path `Σ_{n<k} Δt |C Y_n|²_Ũ` and per-node `E|Y_n|²_H` for `n ≤ k`.
#[derive(Debug, Clone)]
pub struct Energies {
    pub output: Vec<f64>,
    pub state: Vec<f64>,
}

pub fn energies<T: Field>(
    sys: &StochasticSystemRealization<T>,
    y0: &InitialState<T>,
    u: &InputSignal<T>,
    node: usize,
    ens: &BrownianEnsemble,
) -> Result<Energies> {
    let dt = ens.grid().dt();
    let c = sys.c().matrix().clone();
    let (h, ut) = (sys.h().clone(), sys.utilde().clone());
    let parts = simulate(
        sys,
        y0,
        u,
        ens,
        node,
        |r| (vec![0.0; r.len()], vec![0.0; node + 1]),
        |acc: &mut (Vec<f64>, Vec<f64>), n, y: &DMatrix<T>| {
            acc.1[n] = h.column_norms_sq(y).iter().sum::<f64>();
            if n < node {
                for (a, z) in acc.0.iter_mut().zip(ut.column_norms_sq(&(&c * y))) {
                    *a += dt * z;
                }
            }
        },
    )?;
    let p = ens.paths() as f64;
    let mut state = vec![0.0; node + 1];
    let mut output = Vec::with_capacity(ens.paths());
    for (o, s) in parts {
        output.extend(o);
        state.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    state.iter_mut().for_each(|v| *v /= p);
    Ok(Energies { output, state })
}

/// Hidden-regularity sample: `E Σ_{n<k} Δt |C Y_n|²` for unit `Y0` and `u = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenRegularity {
    pub max: f64,
    /// Standard error of the maximizing trial.
    pub sem: f64,
    pub values: Vec<f64>,
}

pub fn hidden_regularity_ratio<T: Field>(
    sys: &StochasticSystemRealization<T>,
    node: usize,
    trials: usize,
    ens: &BrownianEnsemble,
) -> Result<HiddenRegularity> {
    if trials == 0 {
        return invalid("trials must be positive");
    }
    let zero = InputSignal::zero(sys.u().dim(), ens.grid().steps());
    let mut best = HiddenRegularity { max: f64::NEG_INFINITY, sem: 0.0, values: Vec::with_capacity(trials) };
    for trial in 0..trials {
        let y0 = sample_unit_state::<T>(sys.h(), ens.seed(), trial as u64)?;
        let e = energies(sys, &InitialState::Deterministic(y0), &zero, node, ens)?;
        let (mean, sem) = match mc_estimate(&e.output) {
            Ok(m) => (m.mean, m.sem),
            Err(_) => (e.output[0], 0.0),
        };
        best.values.push(mean);
        if mean > best.max {
            best.max = mean;
            best.sem = sem;
        }
    }
    Ok(best)
}

/// `sqrt(E Σ_{n<k} Δt |C Y_n|²) / (|Y0| + |u|)` maximized over sampled pairs.
pub fn io_gain<T: Field>(
    sys: &StochasticSystemRealization<T>,
    node: usize,
    trials: usize,
    ens: &BrownianEnsemble,
) -> Result<GainEstimate> {
    Ok(wellposed_constant(sys, node, trials, ens)?.output)
}

/// `io_gain` on each node of an increasing list, sharing the ensemble.
pub fn gain_extension_curve<T: Field>(
    sys: &StochasticSystemRealization<T>,
    nodes: &[usize],
    trials: usize,
    ens: &BrownianEnsemble,
) -> Result<Vec<(f64, GainEstimate)>> {
    if nodes.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("gain curve nodes must be strictly increasing");
    }
    nodes.iter().map(|&k| Ok((ens.grid().time(k), io_gain(sys, k, trials, ens)?))).collect()
}

/// State-plus-output quotients `(sup_n sqrt(E|Y_n|²) + sqrt(E Σ Δt |C Y_n|²)) / (|Y0| + |u|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellposedEstimate {
    pub total: GainEstimate,
    /// State summand alone.
    pub state: GainEstimate,
    /// Output summand alone (the input/output gain).
    pub output: GainEstimate,
}

pub fn wellposed_constant<T: Field>(
    sys: &StochasticSystemRealization<T>,
    node: usize,
    trials: usize,
    ens: &BrownianEnsemble,
) -> Result<WellposedEstimate> {
    if trials == 0 {
        return invalid("trials must be positive");
    }
    let (mut total, mut state, mut output) = (Vec::new(), Vec::new(), Vec::new());
    for trial in 0..trials {
        let pair = sample_unit_pair(sys, ens.grid(), node, ens.seed(), trial as u64)?;
        let e = energies(sys, &InitialState::Deterministic(pair.y0.clone()), &pair.u, node, ens)?;
        let norm = pair.data_norm();
        let s = e.state.iter().cloned().fold(0.0, f64::max).sqrt() / norm;
        let o = (e.output.iter().sum::<f64>() / ens.paths() as f64).sqrt() / norm;
        state.push(s);
        output.push(o);
        total.push(s + o);
    }
    Ok(WellposedEstimate {
        total: GainEstimate::from_ratios(total),
        state: GainEstimate::from_ratios(state),
        output: GainEstimate::from_ratios(output),
    })
}

/// A sampled constant on a discretization and on its spatial refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedConstant {
    pub coarse: WellposedEstimate,
    pub fine: WellposedEstimate,
    /// `|fine − coarse| / coarse` of the maxima.
    pub relative_change: f64,
}

impl RefinedConstant {
    pub fn new(coarse: WellposedEstimate, fine: WellposedEstimate) -> Self {
        let relative_change = (fine.total.max - coarse.total.max).abs() / coarse.total.max;
        Self { coarse, fine, relative_change }
    }
}
