//! Residual of the weak formulation along a computed trajectory.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Result, SwlpError};
use crate::field::Field;
use crate::stochastics::{mc_estimate, BrownianEnsemble, McEstimate};
use crate::system::{InputSignal, StochasticSystemRealization, Trajectory};

/// A per-path function on grid nodes, stored `[path][node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFunction<T> {
    pub paths: usize,
    pub nodes: usize,
    pub values: Vec<T>,
}

impl<T: Field> NodeFunction<T> {
    pub fn value(&self, path: usize, node: usize) -> T {
        self.values[path * self.nodes + node]
    }

    /// `|R(t_n)|` on every path.
    pub fn abs_at(&self, node: usize) -> Vec<f64> {
        (0..self.paths).map(|p| self.value(p, node).modulus()).collect()
    }

    /// Monte Carlo estimate of `E|R(t_n)|`.
    pub fn mean_abs(&self, node: usize) -> Result<McEstimate> {
        mc_estimate(&self.abs_at(node))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }
}

fn dot<T: Field>(w: &DVector<T>, x: &[T]) -> T {
    w.iter().zip(x).fold(T::zero(), |acc, (a, b)| acc + *a * *b)
}

/// `R(t_k) = ⟨Y_k,ψ⟩ − ⟨Y_0,ψ⟩ − Σ_{n<k} [⟨Y_n,A*ψ⟩ + ⟨F1 Y_n,ψ⟩ + ⟨u_n,B*ψ⟩] Δt − Σ_{n<k} ⟨F2 Y_n,ψ⟩ ΔW_n`.
pub fn weak_residual<T: Field>(
    sys: &StochasticSystemRealization<T>,
    traj: &Trajectory<T>,
    psi: &DVector<T>,
    u: &InputSignal<T>,
    ens: &BrownianEnsemble,
) -> Result<NodeFunction<T>> {
    let grid = *traj.grid();
    if &grid != ens.grid() || traj.paths() != ens.paths() {
        return Err(SwlpError::GridMismatch("trajectory and ensemble differ".into()));
    }
    let h = sys.h();
    h.check_len(psi.len())?;
    u.check(sys.u(), grid.steps(), ens.paths())?;
    let dt = grid.dt();
    let w_psi = h.pairing_weights(psi);
    let a_star_psi = sys.generator().adjoint().matrix() * psi;
    let w_a = h.pairing_weights(&a_star_psi);
    let b_star_psi = sys.b().adjoint().apply(psi)?;
    let w_b = sys.u().pairing_weights(&b_star_psi);
    // ⟨F x, ψ⟩ = (Fᵀ w_ψ) · x
    let f_weights = |f: &crate::system::Coefficient<T>| -> Vec<DVector<T>> {
        f.pieces().iter().map(|m| m.transpose() * &w_psi).collect()
    };
    let w_f1 = f_weights(sys.f1());
    let w_f2 = f_weights(sys.f2());
    let nodes = grid.steps() + 1;
    let dtt = T::from_real(dt);

    let values: Vec<Vec<T>> = (0..ens.paths())
        .into_par_iter()
        .map(|p| {
            let mut out = Vec::with_capacity(nodes);
            let y0 = traj.state(p, 0);
            let base = dot(&w_psi, y0);
            let mut integral = T::zero();
            let mut w = 0.0;
            out.push(T::zero());
            for n in 0..grid.steps() {
                let t = grid.time(n);
                let tm = t + 0.5 * dt;
                let y = traj.state(p, n);
                let dw = ens.increment(p, n);
                let mut drift = dot(&w_a, y);
                if !sys.f1().is_zero() {
                    let mut v = dot(&w_f1[sys.f1().piece_index(tm)], y);
                    if let Some(m) = sys.f1().modulation() {
                        v *= T::from_real(m.eval(t, w)?);
                    }
                    drift += v;
                }
                let un = u.block(n, p..p + 1);
                drift += dot(&w_b, un.as_slice());
                integral += drift * dtt;
                if !sys.f2().is_zero() {
                    let mut v = dot(&w_f2[sys.f2().piece_index(tm)], y);
                    if let Some(m) = sys.f2().modulation() {
                        v *= T::from_real(m.eval(t, w)?);
                    }
                    integral += v * T::from_real(dw);
                }
                w += dw;
                out.push(dot(&w_psi, traj.state(p, n + 1)) - base - integral);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(NodeFunction { paths: ens.paths(), nodes, values: values.concat() })
}
