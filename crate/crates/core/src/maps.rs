//! Input map Φ_t, output map Ψ_t and the admissibility constants built from them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{lift_matrix, Field};
use crate::linalg::largest_eigenvalue;
use crate::stochastics::TimeGrid;
use crate::system::{InputSignal, StochasticSystemRealization};

fn input_columns<T: Field>(u: &InputSignal<T>) -> usize {
    match u {
        InputSignal::Deterministic(_) => 1,
        InputSignal::Adapted(v) => v.first().map_or(1, |m| m.ncols()),
    }
}

/// `Φ_{t_k} u = Σ_{n<k} S(t_k − t_n) B u_n Δt`; one column per path (a single column for deterministic `u`).
pub fn input_map_phi<T: Field>(
    sys: &StochasticSystemRealization<T>,
    grid: &TimeGrid,
    node: usize,
    u: &InputSignal<T>,
) -> Result<DMatrix<T>> {
    grid.check_node(node)?;
    let cols = input_columns(u);
    u.check(sys.u(), node, if let InputSignal::Adapted(_) = u { cols } else { 1 })?;
    let gen = sys.generator();
    let dt = grid.dt();
    let bdt = sys.b().matrix() * T::from_real(dt);
    let mut acc = DMatrix::zeros(sys.h().dim(), cols);
    for n in 0..node {
        let s = gen.propagator((node - n) as f64 * dt)?;
        acc += s * (&bdt * u.block(n, 0..cols));
    }
    Ok(acc)
}

/// `(Ψ_{t_k} η)(t_n) = C S(t_n) η` for `n ≤ k` and exactly zero afterwards, on all grid nodes.
pub fn output_map_psi<T: Field>(
    sys: &StochasticSystemRealization<T>,
    grid: &TimeGrid,
    node: usize,
    eta: &DVector<T>,
) -> Result<Vec<DVector<T>>> {
    grid.check_node(node)?;
    sys.h().check_len(eta.len())?;
    let gen = sys.generator();
    let m = sys.utilde().dim();
    (0..=grid.steps())
        .map(|n| {
            if n <= node {
                Ok(sys.c().matrix() * gen.semigroup_apply(grid.time(n), eta)?)
            } else {
                Ok(DVector::zeros(m))
            }
        })
        .collect()
}

/// Matrix of `Φ_{t_k}`: `dim(H) × (k·dim(U))`, block `n` equal to `S(t_k − t_n) B Δt`.
pub fn input_map_matrix<T: Field>(sys: &StochasticSystemRealization<T>, grid: &TimeGrid, node: usize) -> Result<DMatrix<T>> {
    grid.check_node(node)?;
    let (h, du) = (sys.h().dim(), sys.u().dim());
    let bdt = sys.b().matrix() * T::from_real(grid.dt());
    let mut m = DMatrix::zeros(h, node * du);
    for n in 0..node {
        let blk = sys.generator().propagator((node - n) as f64 * grid.dt())? * &bdt;
        m.view_mut((0, n * du), (h, du)).copy_from(&blk);
    }
    Ok(m)
}

/// Matrix of `Ψ_{t_k}` restricted to nodes `0..=k`: block row `n` equal to `C S(t_n)`.
pub fn output_map_matrix<T: Field>(sys: &StochasticSystemRealization<T>, grid: &TimeGrid, node: usize) -> Result<DMatrix<T>> {
    grid.check_node(node)?;
    let (h, dy) = (sys.h().dim(), sys.utilde().dim());
    let mut m = DMatrix::zeros((node + 1) * dy, h);
    for n in 0..=node {
        let blk = sys.c().matrix() * sys.generator().propagator(grid.time(n))?;
        m.view_mut((n * dy, 0), (dy, h)).copy_from(&blk);
    }
    Ok(m)
}

/// One point of the admissibility curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityPoint {
    pub node: usize,
    pub t: f64,
    pub control: f64,
    pub observation: f64,
}

/// `C_B(t)` and `C_C(t)` at every requested node (strictly increasing).
///
/// `C_B(t_k) = λ_max(Σ_{m=1}^{k} Δt Lᴴ S_m B G_U⁻¹ Bᴴ S_mᴴ L)` and
/// `C_C(t_k) = λ_max(Σ_{m=0}^{k-1} Δt L⁻¹ S_mᴴ Cᴴ G_Ũ C S_m L⁻ᴴ)` with `G_H = L Lᴴ`.
/// Both sums are nested in `k`, so the curves are nondecreasing.
pub fn admissibility_curve<T: Field>(
    sys: &StochasticSystemRealization<T>,
    grid: &TimeGrid,
    nodes: &[usize],
) -> Result<Vec<AdmissibilityPoint>> {
    if nodes.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("admissibility nodes must be strictly increasing");
    }
    let Some(&last) = nodes.last() else {
        return Ok(Vec::new());
    };
    grid.check_node(last)?;
    let h = sys.h();
    let dim = h.dim();
    let dt = grid.dt();
    let l = lift_matrix::<T>(&h.gram_factor());
    let l_inv = l.clone().try_inverse().expect("cholesky factor is invertible");
    let b = sys.b().matrix();
    let b_gu_bh = b * sys.u().solve_gram(&b.adjoint());
    let c = sys.c().matrix();
    let ch_gc_c = c.adjoint() * sys.utilde().apply_gram(c);
    let gen = sys.generator();

    let mut qb = DMatrix::<T>::zeros(dim, dim);
    let mut qc = DMatrix::<T>::zeros(dim, dim);
    let mut s_m = DMatrix::<T>::identity(dim, dim);
    let mut out = Vec::with_capacity(nodes.len());
    let mut next = nodes.iter().peekable();
    let wdt = T::from_real(dt);
    for k in 0..=last {
        while next.peek().is_some_and(|&&n| n == k) {
            let kb = l.adjoint() * &qb * &l;
            let kc = &l_inv * &qc * l_inv.adjoint();
            out.push(AdmissibilityPoint {
                node: k,
                t: grid.time(k),
                control: largest_eigenvalue(kb).max(0.0),
                observation: largest_eigenvalue(kc).max(0.0),
            });
            next.next();
        }
        if k == last {
            break;
        }
        // S_m with m = k enters C_C(t_{k+1}); S_{k+1} enters C_B(t_{k+1}).
        qc += s_m.adjoint() * &ch_gc_c * &s_m * wdt;
        s_m = gen.propagator(grid.time(k + 1))?;
        qb += &s_m * &b_gu_bh * s_m.adjoint() * wdt;
    }
    Ok(out)
}

/// Smallest `C` with `|Φ_t u|²_H ≤ C ∫₀ᵗ |u|²_U` on the grid.
pub fn control_admissibility_constant<T: Field>(sys: &StochasticSystemRealization<T>, grid: &TimeGrid, node: usize) -> Result<f64> {
    Ok(admissibility_curve(sys, grid, &[node])?[0].control)
}

/// Smallest `C` with `∫₀ᵗ |C S(s) η|²_Ũ ≤ C |η|²_H` on the grid.
pub fn observation_admissibility_constant<T: Field>(
    sys: &StochasticSystemRealization<T>,
    grid: &TimeGrid,
    node: usize,
) -> Result<f64> {
    Ok(admissibility_curve(sys, grid, &[node])?[0].observation)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcatenationResidual {
    /// `max_p |Φ_{2t₀}u − S(t₀)Φ_{t₀}u − Φ_{t₀}ũ|_H`.
    pub residual: f64,
    /// `max_p (∫₀^{2t₀} |u|²)^{1/2}`.
    pub input_norm: f64,
}

/// Checks `Φ_{2t₀}u = S(t₀)Φ_{t₀}u + Φ_{t₀}ũ` with `ũ(s) = u(t₀ + s)`.
pub fn concatenation_check<T: Field>(
    sys: &StochasticSystemRealization<T>,
    grid: &TimeGrid,
    node: usize,
    u: &InputSignal<T>,
) -> Result<ConcatenationResidual> {
    grid.check_node(2 * node)?;
    if u.steps() < 2 * node {
        return invalid(format!("input covers {} steps, need {}", u.steps(), 2 * node));
    }
    let full = input_map_phi(sys, grid, 2 * node, u)?;
    let head = input_map_phi(sys, grid, node, u)?;
    let tail = input_map_phi(sys, grid, node, &u.window(node, u.steps() - node))?;
    let shifted = sys.generator().propagator(grid.time(node))? * head;
    let diff = full - shifted - tail;
    let residual = sys.h().column_norms_sq(&diff).into_iter().fold(0.0, f64::max).sqrt();
    let cols = input_columns(u);
    let norms = u.window(0, 2 * node).l2_norm_sq(sys.u(), grid.dt(), cols);
    let input_norm = norms.into_iter().fold(0.0, f64::max).sqrt();
    Ok(ConcatenationResidual { residual, input_norm })
}
