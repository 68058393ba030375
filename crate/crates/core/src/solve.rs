//! Mild solvers: exponential Euler stepping and windowed Picard iteration.
//!
//! Paths are processed in fixed blocks of [`BLOCK`] columns. Block boundaries do
//! not depend on the thread pool, so results are bit-identical for any number
//! of worker threads.

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SwlpError};
use crate::field::Field;
use crate::linalg::{is_finite, scale_columns};
use crate::stochastics::{BrownianEnsemble, TimeGrid};
use crate::system::{InitialState, InputSignal, Provenance, Scheme, StochasticSystemRealization, Trajectory};

pub const BLOCK: usize = 64;
/// Largest Picard window, in steps.
pub const MAX_WINDOW: usize = 32;

pub(crate) fn blocks(paths: usize) -> Vec<Range<usize>> {
    (0..paths).step_by(BLOCK).map(|s| s..(s + BLOCK).min(paths)).collect()
}

/// Per-step operators shared by both solvers.
pub(crate) struct StepOps<'a, T: Field> {
    sys: &'a StochasticSystemRealization<T>,
    grid: TimeGrid,
    s: DMatrix<T>,
    bdt: DMatrix<T>,
    f1dt: Vec<DMatrix<T>>,
    input_zero: bool,
}

impl<'a, T: Field> StepOps<'a, T> {
    pub(crate) fn new(sys: &'a StochasticSystemRealization<T>, grid: TimeGrid, u: &InputSignal<T>) -> Result<Self> {
        let dt = T::from_real(grid.dt());
        Ok(Self {
            sys,
            grid,
            s: sys.generator().propagator(grid.dt())?,
            bdt: sys.b().matrix() * dt,
            f1dt: sys.f1().pieces().iter().map(|p| p * dt).collect(),
            input_zero: u.is_zero(),
        })
    }

    pub(crate) fn semigroup_step(&self) -> &DMatrix<T> {
        &self.s
    }

    /// `Δt F1 y + F2 y ΔW + Δt B u` on step `n`, or `None` when every term vanishes.
    pub(crate) fn drift(
        &self,
        n: usize,
        y: &DMatrix<T>,
        u: &InputSignal<T>,
        paths: Range<usize>,
        w: &[f64],
        dw: &[f64],
    ) -> Result<Option<DMatrix<T>>> {
        let t = self.grid.time(n);
        let mut acc: Option<DMatrix<T>> = None;
        let f1 = self.sys.f1();
        if !f1.is_zero() {
            let j = f1.piece_index(t + 0.5 * self.grid.dt());
            let mut g = &self.f1dt[j] * y;
            if let Some(m) = f1.modulation() {
                let phi = w.iter().map(|wi| m.eval(t, *wi)).collect::<Result<Vec<_>>>()?;
                scale_columns(&mut g, &phi);
            }
            acc = Some(g);
        }
        let f2 = self.sys.f2();
        if !f2.is_zero() {
            let mut g = f2.at_step(&self.grid, n) * y;
            let weights = match f2.modulation() {
                Some(m) => w.iter().zip(dw).map(|(wi, d)| Ok(m.eval(t, *wi)? * d)).collect::<Result<Vec<_>>>()?,
                None => dw.to_vec(),
            };
            scale_columns(&mut g, &weights);
            acc = Some(match acc {
                Some(a) => a + g,
                None => g,
            });
        }
        if !self.input_zero {
            let g = &self.bdt * u.block(n, paths);
            acc = Some(match acc {
                Some(a) => a + g,
                None => g,
            });
        }
        Ok(acc)
    }
}

pub(crate) fn validate<T: Field>(
    sys: &StochasticSystemRealization<T>,
    y0: &InitialState<T>,
    u: &InputSignal<T>,
    ens: &BrownianEnsemble,
) -> Result<()> {
    y0.check(sys.h(), ens.paths())?;
    u.check(sys.u(), ens.grid().steps(), ens.paths())
}

/// Runs the stepping scheme for `steps` steps and feeds every node state to `visit`.
///
/// Returns one accumulator per path block, in path order.
pub(crate) fn simulate<T, A, I, V>(
    sys: &StochasticSystemRealization<T>,
    y0: &InitialState<T>,
    u: &InputSignal<T>,
    ens: &BrownianEnsemble,
    steps: usize,
    init: I,
    visit: V,
) -> Result<Vec<A>>
where
    T: Field,
    A: Send,
    I: Fn(Range<usize>) -> A + Sync,
    V: Fn(&mut A, usize, &DMatrix<T>) + Sync,
{
    validate(sys, y0, u, ens)?;
    ens.grid().check_node(steps)?;
    let ops = StepOps::new(sys, *ens.grid(), u)?;
    blocks(ens.paths())
        .into_par_iter()
        .map(|r| {
            let mut acc = init(r.clone());
            let mut y = y0.block(r.clone());
            visit(&mut acc, 0, &y);
            let mut w = vec![0.0; r.len()];
            for n in 0..steps {
                let dw = ens.step_slice(n, r.clone());
                let mut z = y;
                if let Some(g) = ops.drift(n, &z, u, r.clone(), &w, &dw)? {
                    z += g;
                }
                y = ops.semigroup_step() * z;
                if !is_finite(&y) {
                    return Err(SwlpError::Divergence { node: n + 1 });
                }
                visit(&mut acc, n + 1, &y);
                w.iter_mut().zip(&dw).for_each(|(wi, d)| *wi += d);
            }
            Ok(acc)
        })
        .collect()
}

fn write_node<T: Field>(buf: &mut [T], nodes: usize, node: usize, y: &DMatrix<T>) {
    let dim = y.nrows();
    let src = y.as_slice();
    for j in 0..y.ncols() {
        let off = (j * nodes + node) * dim;
        buf[off..off + dim].copy_from_slice(&src[j * dim..(j + 1) * dim]);
    }
}

/// `Y_{n+1} = S(Δt)(Y_n + Δt F1 Y_n + Δt B u_n + F2 Y_n ΔW_n)`.
pub fn mild_solve_stepping<T: Field>(
    sys: &StochasticSystemRealization<T>,
    y0: &InitialState<T>,
    u: &InputSignal<T>,
    ens: &BrownianEnsemble,
) -> Result<Trajectory<T>> {
    let grid = *ens.grid();
    let nodes = grid.steps() + 1;
    let dim = sys.h().dim();
    let parts = simulate(
        sys,
        y0,
        u,
        ens,
        grid.steps(),
        |r| vec![T::zero(); r.len() * nodes * dim],
        |buf, node, y| write_node(buf, nodes, node, y),
    )?;
    let data = parts.concat();
    let provenance = Provenance { scheme: Scheme::Stepping, seed: ens.seed(), initial: y0.clone(), input: u.clone() };
    Ok(Trajectory::from_parts(grid, dim, ens.paths(), data, provenance))
}

/// Window size and its estimated contraction factor `q = M_S (W Δt ‖F1‖ + √(W Δt) ‖F2‖)`.
///
/// The window is the largest `W ≤ MAX_WINDOW` with `q ≤ 1/4`, half the `1/2` needed for a contraction.
pub fn picard_window<T: Field>(sys: &StochasticSystemRealization<T>, grid: &TimeGrid) -> Result<(usize, f64)> {
    let cap = MAX_WINDOW.min(grid.steps());
    let (f1, f2) = sys.coefficient_bounds();
    if f1 == 0.0 && f2 == 0.0 {
        return Ok((cap, 0.0));
    }
    let ms = sys.generator().growth_bound(grid.dt(), cap)?;
    let q = |w: usize| {
        let span = w as f64 * grid.dt();
        ms * (span * f1 + span.sqrt() * f2)
    };
    let w = (1..=cap).rev().find(|&w| q(w) <= 0.25).unwrap_or(1);
    Ok((w, q(w)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardReport {
    pub window: usize,
    pub estimated_factor: f64,
    /// Applications of the fixed-point map per window.
    pub iterations: Vec<usize>,
    /// Largest measured ratio of successive iterate distances per window.
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PicardSolution<T: Field> {
    pub trajectory: Trajectory<T>,
    pub report: PicardReport,
}

/// Fixed-point iteration of `X ↦ S(·)Y_s + Σ S(· − t_m)(Δt F1 X_m + Δt B u_m + F2 X_m ΔW_m)` window by window.
pub fn mild_solve_picard<T: Field>(
    sys: &StochasticSystemRealization<T>,
    y0: &InitialState<T>,
    u: &InputSignal<T>,
    ens: &BrownianEnsemble,
    tol: f64,
    max_iter: usize,
) -> Result<PicardSolution<T>> {
    if !(tol > 0.0) || max_iter == 0 {
        return invalid("picard needs tol > 0 and max_iter ≥ 1");
    }
    validate(sys, y0, u, ens)?;
    let grid = *ens.grid();
    let ops = StepOps::new(sys, grid, u)?;
    let (window, factor) = picard_window(sys, &grid)?;
    let h = sys.h();
    let p = ens.paths();
    let nodes = grid.steps() + 1;
    let dim = h.dim();
    let ranges = blocks(p);

    let mut bufs: Vec<Vec<T>> = ranges.iter().map(|r| vec![T::zero(); r.len() * nodes * dim]).collect();
    let mut starts: Vec<DMatrix<T>> = ranges.iter().map(|r| y0.block(r.clone())).collect();
    let mut w_start: Vec<Vec<f64>> = ranges.iter().map(|r| vec![0.0; r.len()]).collect();
    for (buf, y) in bufs.iter_mut().zip(&starts) {
        write_node(buf, nodes, 0, y);
    }

    let apply = |b: usize, s: usize, len: usize, x: &[DMatrix<T>], w0: &[f64]| -> Result<Vec<DMatrix<T>>> {
        let r = ranges[b].clone();
        let mut w = w0.to_vec();
        let mut out = Vec::with_capacity(len + 1);
        let mut acc = x[0].clone();
        out.push(acc.clone());
        for m in 0..len {
            let dw = ens.step_slice(s + m, r.clone());
            if let Some(g) = ops.drift(s + m, &x[m], u, r.clone(), &w, &dw)? {
                acc += g;
            }
            acc = ops.semigroup_step() * acc;
            if !is_finite(&acc) {
                return Err(SwlpError::Divergence { node: s + m + 1 });
            }
            out.push(acc.clone());
            w.iter_mut().zip(&dw).for_each(|(wi, d)| *wi += d);
        }
        Ok(out)
    };
    // sup over window nodes of the root-mean-square H distance
    let distance = |a: &[Vec<DMatrix<T>>], b: &[Vec<DMatrix<T>>], len: usize| -> f64 {
        (0..=len)
            .map(|k| {
                let total: f64 = a.iter().zip(b).map(|(xa, xb)| h.column_norms_sq(&(&xa[k] - &xb[k])).iter().sum::<f64>()).sum();
                (total / p as f64).sqrt()
            })
            .fold(0.0, f64::max)
    };

    let mut iterations = Vec::new();
    let mut ratios = Vec::new();
    let mut s = 0;
    while s < grid.steps() {
        let len = window.min(grid.steps() - s);
        let constant: Vec<Vec<DMatrix<T>>> = starts.iter().map(|y| vec![y.clone(); len + 1]).collect();
        let mut x: Vec<Vec<DMatrix<T>>> =
            (0..ranges.len()).into_par_iter().map(|b| apply(b, s, len, &constant[b], &w_start[b])).collect::<Result<_>>()?;
        let mut prev = distance(&x, &constant, len);
        let scale = (0..=len)
            .map(|k| (x.iter().map(|xb| h.column_norms_sq(&xb[k]).iter().sum::<f64>()).sum::<f64>() / p as f64).sqrt())
            .fold(0.0, f64::max);
        let floor = 1e-11 * scale.max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        let mut last_ratio = f64::NAN;
        let mut j = 0;
        loop {
            j += 1;
            let next: Vec<Vec<DMatrix<T>>> =
                (0..ranges.len()).into_par_iter().map(|b| apply(b, s, len, &x[b], &w_start[b])).collect::<Result<_>>()?;
            let change = distance(&next, &x, len);
            if prev > floor {
                last_ratio = change / prev;
                worst = worst.max(last_ratio);
            }
            x = next;
            if change < tol {
                break;
            }
            if j >= max_iter {
                return Err(SwlpError::PicardNotConverged { iterations: j, last_ratio });
            }
            prev = change;
        }
        iterations.push(j);
        ratios.push(worst);
        for (b, xb) in x.into_iter().enumerate() {
            for (k, y) in xb.iter().enumerate().skip(1) {
                write_node(&mut bufs[b], nodes, s + k, y);
            }
            starts[b] = xb[len].clone();
            for (wi, pth) in w_start[b].iter_mut().zip(ranges[b].clone()) {
                for n in s..s + len {
                    *wi += ens.increment(pth, n);
                }
            }
        }
        s += len;
    }

    let provenance = Provenance { scheme: Scheme::Picard, seed: ens.seed(), initial: y0.clone(), input: u.clone() };
    Ok(PicardSolution {
        trajectory: Trajectory::from_parts(grid, dim, p, bufs.concat(), provenance),
        report: PicardReport { window, estimated_factor: factor, iterations, ratios },
    })
}
