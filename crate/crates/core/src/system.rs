//! The controlled stochastic system, its inputs and its sampled trajectories.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SwlpError};
use crate::field::Field;
use crate::generator::GeneratorRealization;
use crate::spaces::{gram_operator_norm, DiscreteSpace, LinearMap};
use crate::stochastics::TimeGrid;

type Hook = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Scalar adapted modulation `φ(t, W(t))` with a declared bound `|φ| ≤ bound`.
#[derive(Clone)]
pub struct Modulation {
    hook: Hook,
    bound: f64,
}

impl Modulation {
    pub fn eval(&self, t: f64, w: f64) -> Result<f64> {
        let v = (self.hook)(t, w);
        if !(v.abs() <= self.bound) {
            return invalid(format!("adapted coefficient {v} exceeds its declared bound {}", self.bound));
        }
        Ok(v)
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

impl fmt::Debug for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Modulation").field("bound", &self.bound).finish_non_exhaustive()
    }
}

/// Coefficient operator on H, piecewise constant in time.
///
/// Piece `j` covers `[j τ, (j+1) τ)` with `τ = span / pieces`; times past `span`
/// use the last piece. A step is assigned the piece containing its midpoint, so
/// refined grids see the same coefficients.
#[derive(Debug, Clone)]
pub struct Coefficient<T: Field> {
    pieces: Vec<DMatrix<T>>,
    span: f64,
    modulation: Option<Modulation>,
    zero: bool,
}

impl<T: Field> Coefficient<T> {
    pub fn zero(dim: usize) -> Self {
        Self { pieces: vec![DMatrix::zeros(dim, dim)], span: 1.0, modulation: None, zero: true }
    }

    pub fn constant(m: DMatrix<T>) -> Self {
        Self::piecewise(1.0, vec![m]).expect("a single square piece is valid")
    }

    pub fn piecewise(span: f64, pieces: Vec<DMatrix<T>>) -> Result<Self> {
        if pieces.is_empty() || !(span > 0.0) {
            return invalid("piecewise coefficient needs a positive span and at least one piece");
        }
        let n = pieces[0].nrows();
        if pieces.iter().any(|p| p.shape() != (n, n)) {
            return invalid("coefficient pieces must be square and of equal size");
        }
        let zero = pieces.iter().all(|p| p.iter().all(|x| *x == T::zero()));
        Ok(Self { pieces, span, modulation: None, zero })
    }

    /// Multiplies the coefficient by an adapted scalar `φ(t, W(t))`.
    pub fn with_modulation(mut self, bound: f64, hook: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.modulation = Some(Modulation { hook: Arc::new(hook), bound });
        self
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].nrows()
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn pieces(&self) -> &[DMatrix<T>] {
        &self.pieces
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn modulation(&self) -> Option<&Modulation> {
        self.modulation.as_ref()
    }

    pub fn piece_index(&self, t: f64) -> usize {
        let tau = self.span / self.pieces.len() as f64;
        ((t / tau).floor().max(0.0) as usize).min(self.pieces.len() - 1)
    }

    /// Matrix used on step `n` of `grid`.
    pub fn at_step(&self, grid: &TimeGrid, n: usize) -> &DMatrix<T> {
        &self.pieces[self.piece_index(grid.time(n) + 0.5 * grid.dt())]
    }

    /// `sup_t ‖F(t)‖` in the metric of `space`, including the modulation bound.
    pub fn sup_norm(&self, space: &DiscreteSpace) -> f64 {
        if self.zero {
            return 0.0;
        }
        let m = self.pieces.iter().map(|p| gram_operator_norm(p, space, space)).fold(0.0, f64::max);
        m * self.modulation.as_ref().map_or(1.0, |md| md.bound)
    }
}

/// `(H, U, Ũ, A, B, C, F1, F2)`.
#[derive(Debug, Clone)]
pub struct StochasticSystemRealization<T: Field> {
    a: GeneratorRealization<T>,
    b: LinearMap<T>,
    c: LinearMap<T>,
    f1: Coefficient<T>,
    f2: Coefficient<T>,
    f1_bound: f64,
    f2_bound: f64,
}

impl<T: Field> StochasticSystemRealization<T> {
    pub fn new(
        a: GeneratorRealization<T>,
        b: LinearMap<T>,
        c: LinearMap<T>,
        f1: Coefficient<T>,
        f2: Coefficient<T>,
    ) -> Result<Self> {
        let h = a.space();
        if !b.codomain().same_as(h) {
            return Err(SwlpError::IncompatibleSpaces {
                left: format!("B codomain {}", b.codomain().label()),
                right: format!("state space {}", h.label()),
            });
        }
        if !c.domain().same_as(h) {
            return Err(SwlpError::IncompatibleSpaces {
                left: format!("C domain {}", c.domain().label()),
                right: format!("state space {}", h.label()),
            });
        }
        for (name, f) in [("F1", &f1), ("F2", &f2)] {
            if f.dim() != h.dim() {
                return Err(SwlpError::DimensionMismatch {
                    space: format!("{} ({name})", h.label()),
                    expected: h.dim(),
                    found: f.dim(),
                });
            }
        }
        let f1_bound = f1.sup_norm(h);
        let f2_bound = f2.sup_norm(h);
        if !(f1_bound.is_finite() && f2_bound.is_finite()) {
            return invalid("coefficient bounds are not finite");
        }
        Ok(Self { a, b, c, f1, f2, f1_bound, f2_bound })
    }

    pub fn h(&self) -> &DiscreteSpace {
        self.a.space()
    }

    pub fn u(&self) -> &DiscreteSpace {
        self.b.domain()
    }

    pub fn utilde(&self) -> &DiscreteSpace {
        self.c.codomain()
    }

    pub fn generator(&self) -> &GeneratorRealization<T> {
        &self.a
    }

    pub fn b(&self) -> &LinearMap<T> {
        &self.b
    }

    pub fn c(&self) -> &LinearMap<T> {
        &self.c
    }

    pub fn f1(&self) -> &Coefficient<T> {
        &self.f1
    }

    pub fn f2(&self) -> &Coefficient<T> {
        &self.f2
    }

    /// Recorded `sup ‖F1‖`, `sup ‖F2‖`.
    pub fn coefficient_bounds(&self) -> (f64, f64) {
        (self.f1_bound, self.f2_bound)
    }

    pub fn with_observation(&self, c: LinearMap<T>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), c, self.f1.clone(), self.f2.clone())
    }

    pub fn with_coefficients(&self, f1: Coefficient<T>, f2: Coefficient<T>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.c.clone(), f1, f2)
    }

    /// Deterministic dual system `(A*, C*, B*)` with zero coefficients.
    pub fn adjoint_system(&self) -> Result<Self> {
        let n = self.h().dim();
        Self::new(self.a.adjoint(), self.c.adjoint(), self.b.adjoint(), Coefficient::zero(n), Coefficient::zero(n))
    }
}

/// Initial datum: one vector shared by all paths or one column per path.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState<T: Field> {
    Deterministic(DVector<T>),
    PerPath(DMatrix<T>),
}

impl<T: Field> From<DVector<T>> for InitialState<T> {
    fn from(v: DVector<T>) -> Self {
        InitialState::Deterministic(v)
    }
}

impl<T: Field> InitialState<T> {
    pub(crate) fn check(&self, space: &DiscreteSpace, paths: usize) -> Result<()> {
        match self {
            InitialState::Deterministic(v) => space.check_len(v.len()),
            InitialState::PerPath(m) => {
                space.check_len(m.nrows())?;
                if m.ncols() != paths {
                    return invalid(format!("initial state has {} columns for {paths} paths", m.ncols()));
                }
                Ok(())
            }
        }
    }

    pub(crate) fn block(&self, paths: Range<usize>) -> DMatrix<T> {
        match self {
            InitialState::Deterministic(v) => DMatrix::from_fn(v.len(), paths.len(), |i, _| v[i]),
            InitialState::PerPath(m) => m.columns(paths.start, paths.len()).into_owned(),
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        match self {
            InitialState::Deterministic(v) => InitialState::Deterministic(v * s),
            InitialState::PerPath(m) => InitialState::PerPath(m * s),
        }
    }
}

/// Control input on the steps `0..N` of a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSignal<T: Field> {
    /// One `U` vector per step.
    Deterministic(Vec<DVector<T>>),
    /// One `dim(U) × P` block per step; column `p` must depend on path `p` up to that step only.
    Adapted(Vec<DMatrix<T>>),
}

impl<T: Field> InputSignal<T> {
    pub fn zero(dim_u: usize, steps: usize) -> Self {
        InputSignal::Deterministic(vec![DVector::zeros(dim_u); steps])
    }

    pub fn steps(&self) -> usize {
        match self {
            InputSignal::Deterministic(v) => v.len(),
            InputSignal::Adapted(v) => v.len(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            InputSignal::Deterministic(v) => v.iter().all(|x| x.iter().all(|c| *c == T::zero())),
            InputSignal::Adapted(v) => v.iter().all(|x| x.iter().all(|c| *c == T::zero())),
        }
    }

    pub(crate) fn check(&self, space: &DiscreteSpace, steps: usize, paths: usize) -> Result<()> {
        if self.steps() < steps {
            return invalid(format!("input covers {} steps, grid has {steps}", self.steps()));
        }
        match self {
            InputSignal::Deterministic(v) => v.iter().try_for_each(|x| space.check_len(x.len())),
            InputSignal::Adapted(v) => v.iter().try_for_each(|x| {
                space.check_len(x.nrows())?;
                if x.ncols() != paths {
                    return invalid(format!("adapted input has {} columns for {paths} paths", x.ncols()));
                }
                Ok(())
            }),
        }
    }

    /// Input of step `n` for `paths`, as a `dim(U) × len` block.
    pub(crate) fn block(&self, n: usize, paths: Range<usize>) -> DMatrix<T> {
        match self {
            InputSignal::Deterministic(v) => DMatrix::from_fn(v[n].len(), paths.len(), |i, _| v[n][i]),
            InputSignal::Adapted(v) => v[n].columns(paths.start, paths.len()).into_owned(),
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        match self {
            InputSignal::Deterministic(v) => InputSignal::Deterministic(v.iter().map(|x| x * s).collect()),
            InputSignal::Adapted(v) => InputSignal::Adapted(v.iter().map(|x| x * s).collect()),
        }
    }

    /// Restriction to steps `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> Self {
        match self {
            InputSignal::Deterministic(v) => InputSignal::Deterministic(v[start..start + len].to_vec()),
            InputSignal::Adapted(v) => InputSignal::Adapted(v[start..start + len].to_vec()),
        }
    }

    /// `Σ_n Δt |u_n|²_U` per path.
    pub fn l2_norm_sq(&self, space: &DiscreteSpace, dt: f64, paths: usize) -> Vec<f64> {
        match self {
            InputSignal::Deterministic(v) => {
                let s: f64 = v.iter().map(|x| space.norm_sq(x).unwrap_or(f64::NAN)).sum::<f64>() * dt;
                vec![s; paths]
            }
            InputSignal::Adapted(v) => {
                let mut acc = vec![0.0; paths];
                for x in v {
                    for (a, n) in acc.iter_mut().zip(space.column_norms_sq(x)) {
                        *a += n * dt;
                    }
                }
                acc
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Stepping,
    Picard,
    Lifted,
}

#[derive(Debug, Clone)]
pub struct Provenance<T: Field> {
    pub scheme: Scheme,
    pub seed: u64,
    pub initial: InitialState<T>,
    pub input: InputSignal<T>,
}

/// Sampled states, laid out as `[path][node][component]`.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Field> {
    grid: TimeGrid,
    dim: usize,
    paths: usize,
    data: Vec<T>,
    provenance: Provenance<T>,
}

impl<T: Field> Trajectory<T> {
    pub(crate) fn from_parts(grid: TimeGrid, dim: usize, paths: usize, data: Vec<T>, provenance: Provenance<T>) -> Self {
        debug_assert_eq!(data.len(), paths * (grid.steps() + 1) * dim);
        Self { grid, dim, paths, data, provenance }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn provenance(&self) -> &Provenance<T> {
        &self.provenance
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn state(&self, path: usize, node: usize) -> &[T] {
        let off = (path * (self.grid.steps() + 1) + node) * self.dim;
        &self.data[off..off + self.dim]
    }

    pub fn state_vector(&self, path: usize, node: usize) -> DVector<T> {
        DVector::from_column_slice(self.state(path, node))
    }

    /// All paths at one node as a `dim × P` block.
    pub fn node_block(&self, node: usize) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.dim, self.paths);
        for p in 0..self.paths {
            m.column_mut(p).copy_from_slice(self.state(p, node));
        }
        m
    }

    /// `E|Y(t_n)|²_H` approximated by the path average, per node.
    pub fn mean_norm_sq(&self, space: &DiscreteSpace) -> Vec<f64> {
        (0..=self.grid.steps())
            .map(|n| space.column_norms_sq(&self.node_block(n)).iter().sum::<f64>() / self.paths as f64)
            .collect()
    }

    /// Output `C Y(t_n)` for every node.
    pub fn outputs(&self, c: &LinearMap<T>) -> Vec<DMatrix<T>> {
        (0..=self.grid.steps()).map(|n| c.matrix() * self.node_block(n)).collect()
    }

    /// `sup_n sqrt(mean_p |X_n − Y_n|²_H)`.
    pub fn distance(&self, other: &Trajectory<T>, space: &DiscreteSpace) -> Result<f64> {
        if self.grid != other.grid || self.dim != other.dim || self.paths != other.paths {
            return Err(SwlpError::GridMismatch("trajectories have different shapes".into()));
        }
        Ok((0..=self.grid.steps())
            .map(|n| {
                let d = self.node_block(n) - other.node_block(n);
                (space.column_norms_sq(&d).iter().sum::<f64>() / self.paths as f64).sqrt()
            })
            .fold(0.0, f64::max))
    }
}
