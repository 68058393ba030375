//! Matrix realizations of semigroup generators and evaluation of `S(t) = exp(tA)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Result, SwlpError};
use crate::field::{lift_matrix, Field};
use crate::spaces::DiscreteSpace;

/// Eigendecomposition `A = V diag(values) V⁻¹`.
#[derive(Debug, Clone)]
pub struct Spectral<T: Field> {
    pub values: DVector<T>,
    pub vectors: DMatrix<T>,
    pub inverse: DMatrix<T>,
}

#[derive(Debug, Clone)]
pub struct GeneratorRealization<T: Field> {
    space: DiscreteSpace,
    matrix: DMatrix<T>,
    spectral: Option<Spectral<T>>,
    shift: f64,
    group: bool,
}

impl<T: Field> GeneratorRealization<T> {
    /// Generic generator; `S(t)` falls back to the Padé scaling-and-squaring exponential.
    pub fn new(space: DiscreteSpace, matrix: DMatrix<T>) -> Result<Self> {
        space.check_field::<T>()?;
        space.check_len(matrix.nrows())?;
        space.check_len(matrix.ncols())?;
        Ok(Self { space, matrix, spectral: None, shift: 0.0, group: false })
    }

    /// Generator with supplied eigendata. `inverse` defaults to a numerical inverse of `vectors`.
    pub fn with_spectral(
        space: DiscreteSpace,
        matrix: DMatrix<T>,
        values: DVector<T>,
        vectors: DMatrix<T>,
        inverse: Option<DMatrix<T>>,
    ) -> Result<Self> {
        let mut g = Self::new(space, matrix)?;
        let n = g.space.dim();
        if values.len() != n || vectors.shape() != (n, n) {
            return invalid("spectral data does not match the generator dimension");
        }
        let inverse = match inverse {
            Some(inv) => inv,
            None => vectors
                .clone()
                .try_inverse()
                .ok_or_else(|| SwlpError::Singular("eigenvector matrix".into()))?,
        };
        let spectral = Spectral { values, vectors, inverse };
        let scale = g.matrix.norm().max(1.0);
        for k in 0..n {
            let v = spectral.vectors.column(k);
            let r = (&g.matrix * v - v * spectral.values[k]).norm();
            if r > 1e-10 * scale * v.norm().max(f64::MIN_POSITIVE) {
                return invalid(format!("eigenpair {k} violates A v = λ v (residual {r:.3e})"));
            }
        }
        g.spectral = Some(spectral);
        Ok(g)
    }

    /// Generator self-adjoint in the Gram metric (`G A` Hermitian); eigendata computed here.
    pub fn self_adjoint(space: DiscreteSpace, matrix: DMatrix<T>) -> Result<Self> {
        let g = Self::new(space, matrix)?;
        let l = lift_matrix::<T>(&g.space.gram_factor());
        let l_inv = l.clone().try_inverse().ok_or_else(|| SwlpError::Singular("gram factor".into()))?;
        // Ã = Lᴴ A L⁻ᴴ is Hermitian when G A is.
        let tilde = l.adjoint() * &g.matrix * l_inv.adjoint();
        let herm_err = (&tilde - tilde.adjoint()).norm();
        if herm_err > 1e-10 * tilde.norm().max(1.0) {
            return invalid("generator is not self-adjoint in the space metric");
        }
        let herm = (&tilde + tilde.adjoint()).map(|x| x * T::from_real(0.5));
        let eig = SymmetricEigen::new(herm);
        let values = eig.eigenvalues.map(T::from_real);
        let vectors = l_inv.adjoint() * &eig.eigenvectors;
        let inverse = eig.eigenvectors.adjoint() * l.adjoint();
        Self::with_spectral(g.space, g.matrix, values, vectors, Some(inverse))
    }

    /// Allows negative times (the generator spans a group).
    pub fn into_group(mut self) -> Self {
        self.group = true;
        self
    }

    /// Records a resolvent shift β ∈ ρ(A). Used only for reporting.
    pub fn with_shift(mut self, beta: f64) -> Self {
        self.shift = beta;
        self
    }

    pub fn space(&self) -> &DiscreteSpace {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn spectral(&self) -> Option<&Spectral<T>> {
        self.spectral.as_ref()
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn is_group(&self) -> bool {
        self.group
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() || (t < 0.0 && !self.group) {
            return Err(SwlpError::NegativeTime(t));
        }
        Ok(())
    }

    /// Matrix of `S(t)`.
    pub fn propagator(&self, t: f64) -> Result<DMatrix<T>> {
        self.check_time(t)?;
        let n = self.dim();
        if t == 0.0 {
            return Ok(DMatrix::identity(n, n));
        }
        Ok(match &self.spectral {
            Some(sp) => {
                let mut v = sp.vectors.clone();
                for (k, mut col) in v.column_iter_mut().enumerate() {
                    let e = (sp.values[k] * T::from_real(t)).exp();
                    col.iter_mut().for_each(|x| *x *= e);
                }
                v * &sp.inverse
            }
            None => (&self.matrix * T::from_real(t)).exp(),
        })
    }

    /// `S(m Δt)` for `m = 0..=count`.
    pub fn propagator_table(&self, dt: f64, count: usize) -> Result<Vec<DMatrix<T>>> {
        (0..=count).map(|m| self.propagator(m as f64 * dt)).collect()
    }

    pub fn semigroup_apply(&self, t: f64, x: &DVector<T>) -> Result<DVector<T>> {
        self.space.check_len(x.len())?;
        self.check_time(t)?;
        if t == 0.0 {
            return Ok(x.clone());
        }
        Ok(self.propagator(t)? * x)
    }

    /// Generator of the adjoint semigroup, `A* = G⁻¹ Aᴴ G`.
    pub fn adjoint(&self) -> GeneratorRealization<T> {
        let matrix = self.space.solve_gram(&self.space.apply_gram(&self.matrix).adjoint());
        let spectral = self.spectral.as_ref().map(|sp| Spectral {
            values: sp.values.map(|v| v.conjugate()),
            vectors: self.space.solve_gram(&sp.inverse.adjoint()),
            inverse: self.space.apply_gram(&sp.vectors).adjoint(),
        });
        GeneratorRealization {
            space: self.space.clone(),
            matrix,
            spectral,
            shift: self.shift,
            group: self.group,
        }
    }

    /// `max_{0 ≤ m ≤ count} ‖S(m Δt)‖` in the space metric.
    pub fn growth_bound(&self, dt: f64, count: usize) -> Result<f64> {
        let mut best: f64 = 1.0;
        for m in 1..=count {
            let p = self.propagator(m as f64 * dt)?;
            best = best.max(crate::spaces::gram_operator_norm(&p, &self.space, &self.space));
        }
        Ok(best)
    }
}
