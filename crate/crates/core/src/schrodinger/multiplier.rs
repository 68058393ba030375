//! Discrete check of the one-dimensional multiplier identity
//!
//! ```text
//! μ φ̄'(dφ + iφ'' dt) − μ φ'(dφ̄ − iφ̄'' dt)
//!   = [iμ φ̄'φ' + iμ φ'φ̄' − μ φ dφ̄ − iμ|φ'|²]' dt + d(μ φ̄' φ)
//!     − 2iμ'|φ'|² dt + iμ'|φ'|² dt + μ' φ dφ̄ − μ dφ̄' dφ
//! ```
//!
//! on a uniform grid over `[0, π]` with centered differences in `x` and forward
//! increments in `t`. The `φ dφ̄` flux carries no `dt`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SwlpError};
use crate::field::Complex64;
use crate::stochastics::{mc_estimate, refine_brownian, BrownianEnsemble, TimeGrid};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Right-hand side terms, in order.
pub const TERM_NAMES: [&str; 9] = [
    "flux-i-mu-dphibar-dphi",
    "flux-i-mu-dphi-dphibar",
    "flux-phi-dphibar",
    "flux-gradient-energy",
    "product-differential",
    "symmetric-gradient",
    "divergence-gradient-energy",
    "divergence-phi-dphibar",
    "covariation",
];

/// `(re + i·im) sin(k x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    pub k: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Harmonic {
    pub fn sine(k: f64) -> Self {
        Self { re: 1.0, im: 0.0, k, phase: 0.0 }
    }

    fn eval(&self, x: f64) -> Complex64 {
        Complex64::new(self.re, self.im) * (self.k * x + self.phase).sin()
    }
}

fn sum(hs: &[Harmonic], x: f64) -> Complex64 {
    hs.iter().map(|h| h.eval(x)).sum()
}

/// `μ(x) = c0 + c1 x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub c0: f64,
    pub c1: f64,
}

impl Affine {
    fn eval(&self, x: f64) -> f64 {
        self.c0 + self.c1 * x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldSpec {
    /// `φ = p(x) e^{−iωt}`.
    Deterministic { profile: Vec<Harmonic>, omega: f64 },
    /// `φ = f(x) W(t + shift) + g(x) t`; only `shift = 0` is adapted.
    Semimartingale {
        f: Vec<Harmonic>,
        g: Vec<Harmonic>,
        #[serde(default)]
        w_shift: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierFieldSpec {
    pub mu: Affine,
    pub field: FieldSpec,
}

/// Mean over paths of `∫₀^π |Σ_n (LHS − RHS)(x)| dx`, and the same with one right-hand term dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierResidual {
    pub mean: f64,
    /// Standard error, `NaN` for a single path.
    pub sem: f64,
    pub paths: usize,
    /// Mean residual with term `j` of [`TERM_NAMES`] removed.
    pub ablations: Vec<f64>,
}

impl MultiplierResidual {
    /// Smallest `ablation / mean`.
    pub fn min_inflation(&self) -> f64 {
        self.ablations.iter().map(|a| a / self.mean).fold(f64::INFINITY, f64::min)
    }
}

const GHOST: usize = 2;

/// Residual on `cells` spatial cells. Semimartingale fields need an ensemble on `grid`.
pub fn multiplier_identity_residual(
    spec: &MultiplierFieldSpec,
    cells: usize,
    grid: &TimeGrid,
    ens: Option<&BrownianEnsemble>,
) -> Result<MultiplierResidual> {
    if cells < 4 {
        return invalid("multiplier grid needs at least 4 cells");
    }
    let h = PI / cells as f64;
    let xs: Vec<f64> = (0..cells + 1 + 2 * GHOST).map(|i| (i as f64 - GHOST as f64) * h).collect();
    let paths = match &spec.field {
        FieldSpec::Deterministic { .. } => 1,
        FieldSpec::Semimartingale { w_shift, .. } => {
            if *w_shift != 0.0 {
                return invalid("field depends on future Brownian values and is not adapted");
            }
            let Some(e) = ens else {
                return invalid("a semimartingale field needs a Brownian ensemble");
            };
            if e.grid() != grid {
                return Err(SwlpError::GridMismatch("ensemble grid differs from the multiplier grid".into()));
            }
            e.paths()
        }
    };
    let per_path: Vec<(f64, Vec<f64>)> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let w = ens.map(|e| e.path(p));
            let field = |n: usize| -> Vec<Complex64> {
                let t = grid.time(n);
                match &spec.field {
                    FieldSpec::Deterministic { profile, omega } => {
                        let e = (-I * (omega * t)).exp();
                        xs.iter().map(|x| sum(profile, *x) * e).collect()
                    }
                    FieldSpec::Semimartingale { f, g, .. } => {
                        let wn = w.as_ref().map_or(0.0, |w| w[n]);
                        xs.iter().map(|x| sum(f, *x) * wn + sum(g, *x) * t).collect()
                    }
                }
            };
            path_residual(&spec.mu, &xs, h, grid, field)
        })
        .collect();
    let full: Vec<f64> = per_path.iter().map(|r| r.0).collect();
    let (mean, sem) = match mc_estimate(&full) {
        Ok(m) => (m.mean, m.sem),
        Err(_) => (full[0], f64::NAN),
    };
    let ablations = (0..TERM_NAMES.len())
        .map(|j| per_path.iter().map(|r| r.1[j]).sum::<f64>() / paths as f64)
        .collect();
    Ok(MultiplierResidual { mean, sem, paths, ablations })
}

fn trapezoid(v: &[f64], h: f64) -> f64 {
    let n = v.len();
    h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1]))
}

fn path_residual(
    mu: &Affine,
    xs: &[f64],
    h: f64,
    grid: &TimeGrid,
    field: impl Fn(usize) -> Vec<Complex64>,
) -> (f64, Vec<f64>) {
    let len = xs.len();
    let real = GHOST..len - GHOST;
    let nr = real.len();
    let dt = grid.dt();
    let mus: Vec<f64> = xs.iter().map(|x| mu.eval(*x)).collect();
    let d1 = |f: &[Complex64], i: usize| (f[i + 1] - f[i - 1]) / (2.0 * h);
    let d2 = |f: &[Complex64], i: usize| (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (h * h);

    let mut full = vec![Complex64::new(0.0, 0.0); nr];
    let mut terms = vec![vec![Complex64::new(0.0, 0.0); nr]; TERM_NAMES.len()];
    let mut cur = field(0);
    for n in 0..grid.steps() {
        let next = field(n + 1);
        let dphi: Vec<Complex64> = next.iter().zip(&cur).map(|(a, b)| a - b).collect();
        // First derivatives and fluxes on indices 1..len-1.
        let mut p1 = vec![Complex64::new(0.0, 0.0); len];
        let mut q1 = vec![Complex64::new(0.0, 0.0); len];
        for i in 1..len - 1 {
            p1[i] = d1(&cur, i);
            q1[i] = d1(&next, i);
        }
        let flux = |g: &dyn Fn(usize) -> Complex64, i: usize| (g(i + 1) - g(i - 1)) / (2.0 * h);
        let f1 = |i: usize| I * mus[i] * p1[i].conj() * p1[i];
        let f2 = |i: usize| I * mus[i] * p1[i] * p1[i].conj();
        let f3 = |i: usize| mus[i] * cur[i] * dphi[i].conj();
        let f4 = |i: usize| Complex64::new(mus[i] * p1[i].norm_sqr(), 0.0);
        for (r, i) in real.clone().enumerate() {
            let m = mus[i];
            let dm = (mus[i + 1] - mus[i - 1]) / (2.0 * h);
            let p2 = d2(&cur, i);
            let grad2 = p1[i].norm_sqr();
            let ddp1 = q1[i] - p1[i];
            let lhs = m * p1[i].conj() * (dphi[i] + I * p2 * dt) - m * p1[i] * (dphi[i].conj() - I * p2.conj() * dt);
            let t = [
                flux(&f1, i) * dt,
                flux(&f2, i) * dt,
                -flux(&f3, i),
                -I * flux(&f4, i) * dt,
                m * (q1[i].conj() * next[i] - p1[i].conj() * cur[i]),
                -2.0 * I * dm * grad2 * dt,
                I * dm * grad2 * dt,
                dm * cur[i] * dphi[i].conj(),
                -m * ddp1.conj() * dphi[i],
            ];
            let rhs: Complex64 = t.iter().sum();
            full[r] += lhs - rhs;
            for (acc, v) in terms.iter_mut().zip(t) {
                acc[r] += v;
            }
        }
        cur = next;
    }
    let abs_full: Vec<f64> = full.iter().map(|v| v.norm()).collect();
    let ablated = terms
        .iter()
        .map(|t| trapezoid(&full.iter().zip(t).map(|(a, b)| (a + b).norm()).collect::<Vec<_>>(), h))
        .collect();
    (trapezoid(&abs_full, h), ablated)
}

/// Residual on `(cells, grid, ens)` and on `(2·cells, refined grid, refined ensemble)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierStudy {
    pub coarse: MultiplierResidual,
    pub fine: MultiplierResidual,
    /// `log2(coarse.mean / fine.mean)`.
    pub order: f64,
}

pub fn multiplier_refinement(
    spec: &MultiplierFieldSpec,
    cells: usize,
    grid: &TimeGrid,
    ens: Option<&BrownianEnsemble>,
) -> Result<MultiplierStudy> {
    let coarse = multiplier_identity_residual(spec, cells, grid, ens)?;
    let fine_ens = ens.map(refine_brownian);
    let fine = multiplier_identity_residual(spec, 2 * cells, &grid.refined(), fine_ens.as_ref())?;
    Ok(MultiplierStudy { order: (coarse.mean / fine.mean).log2(), coarse, fine })
}
