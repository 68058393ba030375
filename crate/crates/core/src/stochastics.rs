//! Time grids, Brownian ensembles, Itô quadrature and Monte Carlo statistics.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SwlpError};
use crate::field::Field;
use crate::generator::GeneratorRealization;
use crate::linalg::scale_columns;
use crate::rng::{CounterStream, DOMAIN_BROWNIAN, DOMAIN_REFINE};

/// Uniform grid `t_n = n T / N` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return invalid(format!("horizon must be positive, got {horizon}"));
        }
        if steps == 0 {
            return invalid("time grid needs at least one step");
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn refined(&self) -> Self {
        Self { horizon: self.horizon, steps: 2 * self.steps }
    }

    pub fn check_node(&self, node: usize) -> Result<()> {
        if node > self.steps {
            return Err(SwlpError::NodeOutOfRange { node, steps: self.steps });
        }
        Ok(())
    }
}

/// `P` Brownian paths on a grid, stored path-major (`increments[p * N + n]`).
///
/// Increments are integer multiples of a power-of-two `quantum` far below `√Δt`, so
/// bridge refinement can split them into two representable halves whose floating-point
/// sum is exactly the coarse increment.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianEnsemble {
    grid: TimeGrid,
    paths: usize,
    seed: u64,
    level: u32,
    quantum: f64,
    increments: Vec<f64>,
}

/// `2^(⌊log2 √Δt⌋ − 40)`. Increments stay below `2^12 √Δt`, well inside the 53-bit range.
fn quantum_for(grid: &TimeGrid) -> f64 {
    2f64.powi(grid.dt().sqrt().log2().floor() as i32 - 40)
}

const MAX_INCREMENT_SDS: f64 = 4096.0;

fn quantize(x: f64, q: f64) -> f64 {
    (x / q).round() * q
}

pub fn sample_brownian(grid: TimeGrid, paths: usize, seed: u64) -> Result<BrownianEnsemble> {
    if paths == 0 {
        return invalid("ensemble needs at least one path");
    }
    let n = grid.steps();
    let sd = grid.dt().sqrt();
    let q = quantum_for(&grid);
    let mut increments = vec![0.0; paths * n];
    increments.par_chunks_mut(n).enumerate().for_each(|(p, row)| {
        let mut s = CounterStream::new(seed, DOMAIN_BROWNIAN, p as u64);
        row.iter_mut().for_each(|dw| *dw = quantize(sd * s.normal(), q));
    });
    Ok(BrownianEnsemble { grid, paths, seed, level: 0, quantum: q, increments })
}

/// Splits every increment with a Brownian-bridge midpoint; pair sums reproduce the coarse increments exactly.
pub fn refine_brownian(ens: &BrownianEnsemble) -> BrownianEnsemble {
    let n = ens.grid.steps();
    let fine = ens.grid.refined();
    let half_sd = 0.5 * ens.grid.dt().sqrt();
    let q = ens.quantum;
    let mut increments = vec![0.0; ens.paths * 2 * n];
    increments.par_chunks_mut(2 * n).enumerate().for_each(|(p, row)| {
        let mut s = CounterStream::new(ens.seed, DOMAIN_REFINE + ens.level as u64, p as u64);
        for (k, &dw) in ens.path_increments(p).iter().enumerate() {
            // both terms are multiples of q, so the difference is exact
            let a = quantize(0.5 * dw + half_sd * s.normal(), q);
            row[2 * k] = a;
            row[2 * k + 1] = dw - a;
        }
    });
    BrownianEnsemble { grid: fine, paths: ens.paths, seed: ens.seed, level: ens.level + 1, quantum: q, increments }
}

impl BrownianEnsemble {
    /// Wraps externally produced increments (path-major, `paths × steps`), rounding them to the
    /// sampling quantum of `grid` (a relative change of order `2^-40`).
    pub fn from_increments(grid: TimeGrid, paths: usize, seed: u64, increments: Vec<f64>) -> Result<Self> {
        if paths == 0 || increments.len() != paths * grid.steps() {
            return invalid("increment array does not match paths × steps");
        }
        let limit = MAX_INCREMENT_SDS * grid.dt().sqrt();
        if increments.iter().any(|dw| !(dw.abs() <= limit)) {
            return invalid(format!("increments must be finite and below {limit:e} in size"));
        }
        let q = quantum_for(&grid);
        let increments = increments.into_iter().map(|dw| quantize(dw, q)).collect();
        Ok(Self { grid, paths, seed, level: 0, quantum: q, increments })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of bridge refinements applied since sampling.
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn increment(&self, path: usize, step: usize) -> f64 {
        self.increments[path * self.grid.steps() + step]
    }

    pub fn path_increments(&self, path: usize) -> &[f64] {
        let n = self.grid.steps();
        &self.increments[path * n..(path + 1) * n]
    }

    /// `W(t_n)` for `n = 0..=N` on one path.
    pub fn path(&self, path: usize) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.grid.steps() + 1);
        w.push(0.0);
        let mut acc = 0.0;
        for dw in self.path_increments(path) {
            acc += dw;
            w.push(acc);
        }
        w
    }

    /// Increments of step `n` for paths `range`.
    pub(crate) fn step_slice(&self, n: usize, paths: std::ops::Range<usize>) -> Vec<f64> {
        paths.map(|p| self.increment(p, n)).collect()
    }

    /// A sub-ensemble made of the first `paths` paths (same streams).
    pub fn truncated(&self, paths: usize) -> Result<Self> {
        if paths == 0 || paths > self.paths {
            return invalid(format!("cannot keep {paths} of {} paths", self.paths));
        }
        let n = self.grid.steps();
        Ok(Self { increments: self.increments[..paths * n].to_vec(), paths, ..self.clone() })
    }
}

/// `Σ_n f_n ΔW_n` per path with left-endpoint evaluation; `integrand` is path-major `P × N`.
pub fn ito_integral(grid: &TimeGrid, integrand: &[f64], ens: &BrownianEnsemble) -> Result<Vec<f64>> {
    if grid != ens.grid() {
        return Err(SwlpError::GridMismatch("integrand grid differs from the ensemble grid".into()));
    }
    let n = grid.steps();
    if integrand.len() != ens.paths() * n {
        return invalid(format!(
            "integrand has {} values, expected {} paths × {} steps",
            integrand.len(),
            ens.paths(),
            n
        ));
    }
    Ok(integrand
        .par_chunks(n)
        .zip(ens.increments.par_chunks(n))
        .map(|(f, dw)| f.iter().zip(dw).map(|(a, b)| a * b).sum())
        .collect())
}

/// `Σ_{n<k} S(t_k − t_n) g_n ΔW_n`, with `g[n]` a `dim × P` block of path columns.
pub fn stochastic_convolution<T: Field>(
    gen: &GeneratorRealization<T>,
    g: &[DMatrix<T>],
    ens: &BrownianEnsemble,
    node: usize,
) -> Result<DMatrix<T>> {
    ens.grid().check_node(node)?;
    if g.len() < node {
        return invalid(format!("integrand has {} nodes, need {node}", g.len()));
    }
    let dim = gen.dim();
    let p = ens.paths();
    let dt = ens.grid().dt();
    let mut acc = DMatrix::zeros(dim, p);
    for (n, gn) in g.iter().enumerate().take(node) {
        if gn.shape() != (dim, p) {
            return invalid(format!("integrand block at node {n} has shape {:?}", gn.shape()));
        }
        let mut scaled = gn.clone();
        scale_columns(&mut scaled, &ens.step_slice(n, 0..p));
        acc += gen.propagator((node - n) as f64 * dt)? * scaled;
    }
    Ok(acc)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub sem: f64,
    pub paths: usize,
}

pub fn mc_estimate(samples: &[f64]) -> Result<McEstimate> {
    let p = samples.len();
    if p < 2 {
        return invalid(format!("Monte Carlo estimate needs at least 2 samples, got {p}"));
    }
    let mean = samples.iter().sum::<f64>() / p as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (p - 1) as f64;
    Ok(McEstimate { mean, sem: (var / p as f64).sqrt(), paths: p })
}
